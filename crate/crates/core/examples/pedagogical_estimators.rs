//! All five estimators on the one-demand-type walkthrough market, in the
//! large-market limit and at a finite scale.

use matchlab::estimators::{estimate_all, estimate_fluid, gte_fluid, EstimatorKind};
use matchlab::instances::pedagogical;
use matchlab::market::{sample_state, ExperimentConfig};
use matchlab::rng::StreamKey;

fn main() -> matchlab::Result<()> {
    let p = pedagogical();
    for (name, rates) in [("mild lift", &p.panel_a), ("saturating lift", &p.panel_b)] {
        let gte = gte_fluid(&p.instance, rates, p.cost())?;
        println!("{name}: global effect {gte:.5}");
        for kind in EstimatorKind::ALL {
            let e = estimate_fluid(kind, &p.instance, rates, p.cost(), p.rho)?;
            let flag = if e.degenerate { " (left-limit duals)" } else { "" };
            println!("  {kind:<7} {:>9.5}  bias {:>9.5}{flag}", e.value, e.value - gte);
        }
    }

    let cfg = ExperimentConfig::new(p.rho, 1000.0)?;
    let state = sample_state(&p.panel_a, &cfg, StreamKey::new(1, 0, 0)).to_state();
    println!("one draw at scale 1000 (mild lift):");
    for (kind, e) in estimate_all(&state, &p.instance, p.cost(), &cfg)? {
        println!("  {kind:<7} {:>9.5}", e.value);
    }
    Ok(())
}
