//! Intervention cost models.
//!
//! A treated match between demand type `i` and supply type `j` is worth
//! `(1 - alpha) * v_ij` under a proportional discount, or `v_ij - kappa` under a
//! fixed discount.  Both keep the platform's per-match value positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{MatchOutcome, MatchingInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostModel {
    /// Treated match value `(1 - alpha) * v`, with `0 <= alpha < 1`.
    Proportional { alpha: f64 },
    /// Treated match value `v - kappa`, with `0 <= kappa < min v`.
    Fixed { kappa: f64 },
}

impl CostModel {
    pub fn kind(&self) -> &'static str {
        match self {
            CostModel::Proportional { .. } => "proportional",
            CostModel::Fixed { .. } => "fixed",
        }
    }

    /// `alpha` or `kappa`.
    pub fn param(&self) -> f64 {
        match *self {
            CostModel::Proportional { alpha } => alpha,
            CostModel::Fixed { kappa } => kappa,
        }
    }

    /// Checks the parameter against the instance's smallest match value.
    pub fn validate(&self, instance: &MatchingInstance) -> Result<()> {
        match *self {
            CostModel::Proportional { alpha } if !(0.0..1.0).contains(&alpha) => {
                Err(Error::CostModel(format!("alpha must lie in [0, 1), got {alpha}")))
            }
            CostModel::Fixed { kappa } if !(kappa >= 0.0 && kappa < instance.min_value()) => {
                Err(Error::CostModel(format!("kappa must lie in [0, {}), got {kappa}", instance.min_value())))
            }
            _ => Ok(()),
        }
    }

    /// Relative discount size: `alpha`, or `kappa / min v`.
    pub fn relative_size(&self, instance: &MatchingInstance) -> f64 {
        match *self {
            CostModel::Proportional { alpha } => alpha,
            CostModel::Fixed { kappa } => kappa / instance.min_value(),
        }
    }

    /// Treated value of a single match worth `v`.
    pub fn discount(&self, v: f64) -> f64 {
        match *self {
            CostModel::Proportional { alpha } => (1.0 - alpha) * v,
            CostModel::Fixed { kappa } => v - kappa,
        }
    }
}

/// Match values net of the intervention cost, as a new instance.
pub fn discounted_weights(instance: &MatchingInstance, cost: CostModel) -> Result<MatchingInstance> {
    cost.validate(instance)?;
    let values = instance.values().iter().map(|&v| cost.discount(v)).collect();
    MatchingInstance::new(instance.n_d(), instance.n_s(), values)
}

/// Optimal duals of the discounted cost-excluded problem, built from optimal
/// duals `(demand_duals, supply_duals)` of the undiscounted one.
///
/// Proportional costs scale both sides.  Fixed costs move `kappa` onto the
/// short side of the market: demand when total demand is below total supply,
/// supply otherwise.  On an exact tie the supply side is used first; if that
/// leaves a negative entry the demand side is tried, since both give the same
/// dual objective when the market clears exactly.
pub fn discounted_duals(
    demand_duals: &[f64],
    supply_duals: &[f64],
    cost: CostModel,
    total_demand: f64,
    total_supply: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = demand_duals.iter().chain(supply_duals).fold(1.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * scale;
    match cost {
        CostModel::Proportional { alpha } => {
            let f = 1.0 - alpha;
            let a: Vec<f64> = demand_duals.iter().map(|x| f * x).collect();
            let b: Vec<f64> = supply_duals.iter().map(|x| f * x).collect();
            check_nonnegative(&a, &b, tol)?;
            Ok((a, b))
        }
        CostModel::Fixed { kappa } => {
            let shift_demand = || {
                let a: Vec<f64> = demand_duals.iter().map(|x| x - kappa).collect();
                let b = supply_duals.to_vec();
                check_nonnegative(&a, &b, tol).map(|_| (a, b))
            };
            let shift_supply = || {
                let a = demand_duals.to_vec();
                let b: Vec<f64> = supply_duals.iter().map(|x| x - kappa).collect();
                check_nonnegative(&a, &b, tol).map(|_| (a, b))
            };
            if total_demand < total_supply {
                shift_demand()
            } else if total_demand > total_supply {
                shift_supply()
            } else {
                shift_supply().or_else(|first| shift_demand().map_err(|_| first))
            }
        }
    }
}

fn check_nonnegative(a: &[f64], b: &[f64], tol: f64) -> Result<()> {
    for (side, xs) in [("demand", a), ("supply", b)] {
        if let Some((index, &value)) = xs.iter().enumerate().find(|(_, x)| **x < -tol) {
            return Err(Error::DualPrecondition { side, index, value });
        }
    }
    Ok(())
}

/// Intervention cost paid on the treated flows of a cost-included outcome:
/// `alpha * sum v x` or `kappa * sum x`.
pub fn intervention_cost(outcome: &MatchOutcome, instance: &MatchingInstance, cost: CostModel) -> f64 {
    let treated = &outcome.treated().flow;
    match cost {
        CostModel::Proportional { alpha } => {
            alpha
                * treated
                    .iter()
                    .enumerate()
                    .map(|(i, row)| row.iter().zip(instance.row(i)).map(|(x, v)| x * v).sum::<f64>())
                    .sum::<f64>()
        }
        CostModel::Fixed { kappa } => kappa * treated.iter().flatten().sum::<f64>(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_ce, solve_ci, CeProblem, CiProblem};

    fn inst() -> MatchingInstance {
        MatchingInstance::new(1, 3, vec![2.0, 1.0, 0.25]).unwrap()
    }

    #[test]
    fn validation_bounds() {
        let i = inst();
        assert!(CostModel::Proportional { alpha: 1.0 }.validate(&i).is_err());
        assert!(CostModel::Proportional { alpha: -0.1 }.validate(&i).is_err());
        assert!(CostModel::Fixed { kappa: 0.25 }.validate(&i).is_err());
        assert!(CostModel::Fixed { kappa: 0.2 }.validate(&i).is_ok());
    }

    #[test]
    fn proportional_scales_value() {
        let i = inst();
        let s = [1.5, 2.0, 2.0];
        let disc = discounted_weights(&i, CostModel::Proportional { alpha: 0.15 }).unwrap();
        for d in [0.5, 2.5, 4.0, 6.0] {
            let full = solve_ce(&CeProblem { instance: &i, demand: &[d], supply: &s }).unwrap();
            let cut = solve_ce(&CeProblem { instance: &disc, demand: &[d], supply: &s }).unwrap();
            assert!((cut.objective - 0.85 * full.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_discount_subtracts_kappa_times_matched() {
        let i = inst();
        let s = [1.5, 2.0, 2.0];
        let kappa = 0.1;
        let disc = discounted_weights(&i, CostModel::Fixed { kappa }).unwrap();
        for d in [0.5, 2.5, 4.0, 6.0] {
            let full = solve_ce(&CeProblem { instance: &i, demand: &[d], supply: &s }).unwrap();
            let cut = solve_ce(&CeProblem { instance: &disc, demand: &[d], supply: &s }).unwrap();
            let matched = d.min(5.5);
            assert!((cut.objective - (full.objective - kappa * matched)).abs() < 1e-12);
        }
    }

    #[test]
    fn discounted_duals_branch_on_short_side() {
        let c = CostModel::Fixed { kappa: 0.1 };
        let (a, b) = discounted_duals(&[1.0], &[1.0, 0.0], c, 1.0, 2.0).unwrap();
        assert_eq!((a, b), (vec![0.9], vec![1.0, 0.0]));
        let (a, b) = discounted_duals(&[0.0], &[1.0, 0.5], c, 3.0, 2.0).unwrap();
        assert!((a[0] - 0.0).abs() < 1e-15 && (b[0] - 0.9).abs() < 1e-15 && (b[1] - 0.4).abs() < 1e-15);
        let err = discounted_duals(&[0.0], &[0.05], c, 3.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::DualPrecondition { side: "supply", .. }));
    }

    #[test]
    fn tie_falls_back_to_demand_side() {
        let c = CostModel::Fixed { kappa: 0.1 };
        let (a, b) = discounted_duals(&[1.0], &[0.0], c, 1.0, 1.0).unwrap();
        assert!((a[0] - 0.9).abs() < 1e-15 && b[0] == 0.0);
    }

    #[test]
    fn intervention_cost_on_treated_flows() {
        let i = inst();
        let out = solve_ci(&CiProblem {
            instance: &i,
            cost: CostModel::Proportional { alpha: 0.15 },
            control: &[0.0],
            treated: &[4.0],
            supply: &[1.5, 2.0, 2.0],
        })
        .unwrap();
        let c = intervention_cost(&out, &i, CostModel::Proportional { alpha: 0.15 });
        assert!((c - 0.15 * 5.125).abs() < 1e-12);
    }
}
