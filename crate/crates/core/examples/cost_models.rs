//! Compare proportional and fixed intervention costs on one market.

use matchlab::cost::{discounted_weights, intervention_cost, CostModel};
use matchlab::instances::pedagogical;
use matchlab::lp::{solve_ci, CiProblem};

fn main() -> matchlab::Result<()> {
    let p = pedagogical();
    let models = [CostModel::Proportional { alpha: 0.15 }, CostModel::Fixed { kappa: 0.1 }];
    for cost in models {
        let treated = discounted_weights(&p.instance, cost)?;
        let out = solve_ci(&CiProblem {
            instance: &p.instance,
            cost,
            control: &[1.0],
            treated: &[2.0],
            supply: &p.panel_a.gamma,
        })?;
        println!("{} {}:", cost.kind(), cost.param());
        println!("  treated weights   {:?}", treated.values());
        println!("  relative size     {:.4}", cost.relative_size(&p.instance));
        println!("  total value       {:.5}", out.objective);
        println!("  cost of treatment {:.5}", intervention_cost(&out, &p.instance, cost));
    }
    Ok(())
}
