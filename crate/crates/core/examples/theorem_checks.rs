//! Run the structural checks on one geometric market and print the verdicts.

use matchlab::cost::CostModel;
use matchlab::fluid::{
    check_ci_top_match, check_sb_unbiased, check_thm_bias_ratio_bound, check_thm_design_unbiasedness,
    check_thm_rct_ce_positive, check_thm_rct_ci_regimes, check_thm_sp_ce_reduction, check_thm_sp_ci,
    find_gamma_regimes,
};
use matchlab::instances::{default_rates, gen_geometric, GeometricSpec};

fn main() -> matchlab::Result<()> {
    let g = gen_geometric(GeometricSpec { index: 3, ..Default::default() })?;
    let rates = default_rates(&g.instance, 0.8)?;
    let cost = CostModel::Proportional { alpha: 0.10 };
    let rho = 0.3;

    let regimes = find_gamma_regimes(&g.instance, &rates, cost, rho)?;
    println!("supply scales: low-supply bound {:.3}, saturation {:.3}", regimes.gamma_min, regimes.gamma_m);

    let reports = [
        check_thm_rct_ce_positive(&g.instance, &rates, cost, rho, "demo")?,
        check_sb_unbiased(&g.instance, &rates, cost, rho, "demo")?,
        check_thm_sp_ce_reduction(&g.instance, &rates, cost, rho, "demo")?,
        check_thm_bias_ratio_bound(&g.instance, &rates, cost, rho, "demo")?,
        check_thm_rct_ci_regimes(&g.instance, &rates, cost, rho, "demo")?,
        check_thm_sp_ci(&g.instance, &rates, cost, rho, "demo")?,
        check_thm_design_unbiasedness(&g.instance, &rates, cost, "demo")?,
        check_ci_top_match(&g.instance, &rates, cost, "demo")?,
    ];
    for r in &reports {
        let verdict = if !r.applicable {
            "n/a "
        } else if r.holds {
            "ok  "
        } else {
            "FAIL"
        };
        println!("{verdict} {}", r.property);
        for (k, v) in &r.witnesses {
            println!("       {k} = {v:.6}");
        }
    }
    Ok(())
}
