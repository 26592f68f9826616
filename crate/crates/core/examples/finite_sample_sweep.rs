//! A small finite-sample sweep, summarised per estimator.

use matchlab::harness::{run_sweep, write_sweep, CostSpec, SweepConfig};

fn main() -> matchlab::Result<()> {
    let cfg = SweepConfig {
        n_instances: 3,
        n_replications: 8,
        gamma_ratios: vec![0.5, 1.0, 2.0],
        rhos: vec![0.3],
        costs: vec![CostSpec::Proportional { alpha: 0.10 }],
        ..SweepConfig::default()
    };
    let out = run_sweep(&cfg)?;
    println!("{:>6} {:<7} {:>10} {:>8}", "ratio", "est", "mean bias", "se");
    for r in &out.pooled {
        println!(
            "{:>6.2} {:<7} {:>10.3} {:>8.3}",
            r.gamma_ratio,
            r.estimator,
            r.mean_bias,
            r.std_error.unwrap_or(f64::NAN)
        );
    }
    let dir = std::env::temp_dir().join("matchlab-sweep-example");
    write_sweep(&out, &dir)?;
    println!("CSV files in {}", dir.display());
    Ok(())
}
