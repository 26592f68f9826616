//! Treatment effect estimators and the global treatment effect.
//!
//! Finite-sample estimators take an observed [`ExperimentState`] and report
//! values per unit of market scale.  Fluid estimators evaluate the large-market
//! limit directly from rates, using per-type average match values and shadow
//! prices.  Both routes agree on fluid states; the tests check this.

use serde::{Deserialize, Serialize};

use crate::cost::{discounted_duals, discounted_weights, intervention_cost, CostModel};
use crate::error::{config, Error, Result};
use crate::lp::{solve_ce, solve_ci, value_ce, value_ci, CeProblem, CiProblem, MatchOutcome, MatchingInstance};
use crate::market::{
    fluid_state, sample_global_pair, split_flows, ExperimentConfig, ExperimentState, GlobalPair, Rates,
};
use crate::rng::StreamKey;

/// Step used to approach a degenerate point from the control side.
pub const PATH_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    RctCe,
    RctCi,
    SpCe,
    SpCi,
    Sb,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [Self::RctCe, Self::RctCi, Self::SpCe, Self::SpCi, Self::Sb];

    pub fn name(&self) -> &'static str {
        match self {
            Self::RctCe => "rct_ce",
            Self::RctCi => "rct_ci",
            Self::SpCe => "sp_ce",
            Self::SpCi => "sp_ci",
            Self::Sb => "sb",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

/// An estimate and whether the optimum it was read from was degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub degenerate: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_ij w_ij x_ij` for row-major weights.
fn weighted_flow(weights: &MatchingInstance, flow: &[Vec<f64>]) -> f64 {
    flow.iter().enumerate().map(|(i, row)| dot(row, weights.row(i))).sum()
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(config("rho", format!("must lie in (0, 1), got {rho}")))
    }
}

fn ce_at(instance: &MatchingInstance, state: &ExperimentState) -> Result<MatchOutcome> {
    let pooled = state.pooled();
    solve_ce(&CeProblem { instance, demand: &pooled, supply: &state.supply })
}

fn ci_at(instance: &MatchingInstance, cost: CostModel, state: &ExperimentState) -> Result<MatchOutcome> {
    solve_ci(&CiProblem { instance, cost, control: &state.control, treated: &state.treated, supply: &state.supply })
}

/// Duals at the experiment point, taken from just below `rho` along the
/// implied treatment path when the optimum there is degenerate.
fn experiment_duals(
    outcome: &MatchOutcome,
    state: &ExperimentState,
    rho: f64,
    resolve: impl Fn(&ExperimentState) -> Result<MatchOutcome>,
) -> Result<MatchOutcome> {
    if outcome.degenerate {
        let eta = (rho - PATH_STEP).max(0.0);
        let mut left = resolve(&state.along_path(rho, eta))?;
        left.degenerate = true;
        Ok(left)
    } else {
        Ok(outcome.clone())
    }
}

/// Solves shared by all estimators at one experiment state.
struct Solved<'a> {
    instance: &'a MatchingInstance,
    cost: CostModel,
    state: &'a ExperimentState,
    rho: f64,
    scale: f64,
}

impl Solved<'_> {
    fn rct_ce(&self, ce: &MatchOutcome) -> Result<Estimate> {
        let disc = discounted_weights(self.instance, self.cost)?;
        let (con, tre) = split_flows(ce.flow(), &self.state.control, &self.state.treated);
        let value = (weighted_flow(&disc, &tre) / self.rho - weighted_flow(self.instance, &con) / (1.0 - self.rho))
            / self.scale;
        Ok(Estimate { value, degenerate: ce.degenerate })
    }

    fn rct_ci(&self, ci: &MatchOutcome) -> Result<Estimate> {
        let disc = discounted_weights(self.instance, self.cost)?;
        let value = (weighted_flow(&disc, &ci.treated().flow) / self.rho
            - weighted_flow(self.instance, &ci.control().flow) / (1.0 - self.rho))
            / self.scale;
        Ok(Estimate { value, degenerate: ci.degenerate })
    }

    fn sp_ce(&self, ce: &MatchOutcome) -> Result<Estimate> {
        let (inst, state, rho) = (self.instance, self.state, self.rho);
        let duals = experiment_duals(ce, state, rho, |s| ce_at(inst, s))?;
        let (a, b) = (duals.demand_duals(), &duals.supply_duals);
        let total_demand: f64 = state.pooled().iter().sum();
        let total_supply: f64 = state.supply.iter().sum();
        let (at, bt) = match discounted_duals(a, b, self.cost, total_demand, total_supply) {
            Ok(pair) => pair,
            Err(Error::DualPrecondition { .. }) => {
                // The basis duals sit at a corner that cannot absorb the cost
                // shift; read duals of the discounted problem directly.
                let disc = discounted_weights(inst, self.cost)?;
                let pooled = state.pooled();
                let out = solve_ce(&CeProblem { instance: &disc, demand: &pooled, supply: &state.supply })?;
                (out.demand_duals().to_vec(), out.supply_duals)
            }
            Err(e) => return Err(e),
        };
        let value = (dot(&at, &state.treated) / rho + dot(&bt, &state.supply)
            - dot(a, &state.control) / (1.0 - rho)
            - dot(b, &state.supply))
            / self.scale;
        Ok(Estimate { value, degenerate: duals.degenerate })
    }

    fn sp_ci(&self, ci: &MatchOutcome) -> Result<Estimate> {
        let (inst, cost, state, rho) = (self.instance, self.cost, self.state, self.rho);
        let duals = experiment_duals(ci, state, rho, |s| ci_at(inst, cost, s))?;
        let value = (dot(&duals.treated().duals, &state.treated) / rho
            - dot(&duals.control().duals, &state.control) / (1.0 - rho))
            / self.scale;
        Ok(Estimate { value, degenerate: duals.degenerate })
    }

    fn sb(&self) -> Result<Estimate> {
        let (inst, state, rho, tau) = (self.instance, self.state, self.rho, self.scale);
        let zeros = vec![0.0; inst.n_d()];
        let supply: Vec<f64> = state.supply.iter().map(|s| s / tau).collect();
        let treated: Vec<f64> = state.treated.iter().map(|d| d / (tau * rho)).collect();
        let control: Vec<f64> = state.control.iter().map(|d| d / (tau * (1.0 - rho))).collect();
        let value = value_ci(inst, self.cost, &zeros, &treated, &supply)?
            - value_ci(inst, self.cost, &control, &zeros, &supply)?;
        Ok(Estimate { value, degenerate: false })
    }
}

fn solved<'a>(
    state: &'a ExperimentState,
    instance: &'a MatchingInstance,
    cost: CostModel,
    cfg: &ExperimentConfig,
) -> Result<Solved<'a>> {
    check_rho(cfg.rho)?;
    cost.validate(instance)?;
    Ok(Solved { instance, cost, state, rho: cfg.rho, scale: cfg.tau })
}

/// Difference in means of matched value, with pooled cost-excluded flows
/// split between groups by demand share.
pub fn estimate_rct_ce(
    state: &ExperimentState,
    instance: &MatchingInstance,
    cost: CostModel,
    cfg: &ExperimentConfig,
) -> Result<Estimate> {
    let s = solved(state, instance, cost, cfg)?;
    s.rct_ce(&ce_at(instance, state)?)
}

/// Difference in means of matched value under cost-included matching.
pub fn estimate_rct_ci(
    state: &ExperimentState,
    instance: &MatchingInstance,
    cost: CostModel,
    cfg: &ExperimentConfig,
) -> Result<Estimate> {
    let s = solved(state, instance, cost, cfg)?;
    s.rct_ci(&ci_at(instance, cost, state)?)
}

/// Shadow-price estimator under cost-excluded matching, using discounted duals
/// for the treated side.
pub fn estimate_sp_ce(
    state: &ExperimentState,
    instance: &MatchingInstance,
    cost: CostModel,
    cfg: &ExperimentConfig,
) -> Result<Estimate> {
    let s = solved(state, instance, cost, cfg)?;
    s.sp_ce(&ce_at(instance, state)?)
}

/// Shadow-price estimator under cost-included matching.
pub fn estimate_sp_ci(
    state: &ExperimentState,
    instance: &MatchingInstance,
    cost: CostModel,
    cfg: &ExperimentConfig,
) -> Result<Estimate> {
    let s = solved(state, instance, cost, cfg)?;
    s.sp_ci(&ci_at(instance, cost, state)?)
}

/// Two-sided split: each group is rescaled to full demand and matched against
/// all observed supply on its own.
pub fn estimate_sb(
    state: &ExperimentState,
    instance: &MatchingInstance,
    cost: CostModel,
    cfg: &ExperimentConfig,
) -> Result<Estimate> {
    solved(state, instance, cost, cfg)?.sb()
}

/// All five estimators at one state, sharing the underlying solves.
pub fn estimate_all(
    state: &ExperimentState,
    instance: &MatchingInstance,
    cost: CostModel,
    cfg: &ExperimentConfig,
) -> Result<Vec<(EstimatorKind, Estimate)>> {
    let s = solved(state, instance, cost, cfg)?;
    let ce = ce_at(instance, state)?;
    let ci = ci_at(instance, cost, state)?;
    Ok(vec![
        (EstimatorKind::RctCe, s.rct_ce(&ce)?),
        (EstimatorKind::RctCi, s.rct_ci(&ci)?),
        (EstimatorKind::SpCe, s.sp_ce(&ce)?),
        (EstimatorKind::SpCi, s.sp_ci(&ci)?),
        (EstimatorKind::Sb, s.sb()?),
    ])
}

pub fn estimate(
    kind: EstimatorKind,
    state: &ExperimentState,
    instance: &MatchingInstance,
    cost: CostModel,
    cfg: &ExperimentConfig,
) -> Result<Estimate> {
    match kind {
        EstimatorKind::RctCe => estimate_rct_ce(state, instance, cost, cfg),
        EstimatorKind::RctCi => estimate_rct_ci(state, instance, cost, cfg),
        EstimatorKind::SpCe => estimate_sp_ce(state, instance, cost, cfg),
        EstimatorKind::SpCi => estimate_sp_ci(state, instance, cost, cfg),
        EstimatorKind::Sb => estimate_sb(state, instance, cost, cfg),
    }
}

/// Global treatment effect in the large-market limit: value of matching all
/// demand as treated minus value with all demand in control.
pub fn gte_fluid(instance: &MatchingInstance, rates: &Rates, cost: CostModel) -> Result<f64> {
    let zeros = vec![0.0; instance.n_d()];
    let treated = rates.treated_demand();
    Ok(value_ci(instance, cost, &zeros, &treated, &rates.gamma)?
        - value_ci(instance, cost, &rates.lambda, &zeros, &rates.gamma)?)
}

/// The same effect written as matched-value gain minus intervention cost.
pub fn gte_fluid_decomposed(instance: &MatchingInstance, rates: &Rates, cost: CostModel) -> Result<f64> {
    let zeros = vec![0.0; instance.n_d()];
    let treated = rates.treated_demand();
    let global = solve_ci(&CiProblem { instance, cost, control: &zeros, treated: &treated, supply: &rates.gamma })?;
    let paid = intervention_cost(&global, instance, cost);
    Ok(value_ce(instance, &treated, &rates.gamma)? - paid - value_ce(instance, &rates.lambda, &rates.gamma)?)
}

/// Per-unit-scale effect on one coupled draw of the two counterfactual markets.
pub fn gte_sample(instance: &MatchingInstance, cost: CostModel, pair: &GlobalPair, tau: f64) -> Result<f64> {
    let f = |xs: &[u64]| xs.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let zeros = vec![0.0; instance.n_d()];
    let supply = f(&pair.supply);
    Ok((value_ci(instance, cost, &zeros, &f(&pair.treated_demand), &supply)?
        - value_ci(instance, cost, &f(&pair.control_demand), &zeros, &supply)?)
        / tau)
}

/// Monte Carlo mean with its standard error (absent for a single draw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_error: Option<f64>,
    pub draws: usize,
}

impl MonteCarlo {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = (n > 1).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Self { mean, std_error, draws: n }
    }
}

/// Finite-market effect by Monte Carlo.  Draw `k` uses key
/// `(seed, instance_index, k)`; both counterfactual markets share its supply.
pub fn gte_finite_mc(
    instance: &MatchingInstance,
    rates: &Rates,
    cost: CostModel,
    tau: f64,
    n_draws: usize,
    seed: u64,
    instance_index: u64,
) -> Result<MonteCarlo> {
    if n_draws == 0 {
        return Err(config("n_draws", "must be >= 1"));
    }
    let samples = (0..n_draws as u64)
        .map(|k| {
            let pair = sample_global_pair(rates, tau, StreamKey::new(seed, instance_index, k));
            gte_sample(instance, cost, &pair, tau)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MonteCarlo::from_samples(&samples))
}

/// Per-type average of `weights` over flows, relative to per-type demand.
fn average_values(weights: &MatchingInstance, flow: &[Vec<f64>], demand: &[f64]) -> Vec<f64> {
    flow.iter()
        .enumerate()
        .map(|(i, row)| if demand[i] > 0.0 { dot(row, weights.row(i)) / demand[i] } else { 0.0 })
        .collect()
}

/// Large-market limit of an estimator at allocation `rho`.
///
/// Computed from per-type average match values (difference-in-means kinds)
/// or from experiment-point shadow prices (shadow-price kinds), which are taken
/// as the limit from below when the experiment-point optimum is degenerate.
pub fn estimate_fluid(
    kind: EstimatorKind,
    instance: &MatchingInstance,
    rates: &Rates,
    cost: CostModel,
    rho: f64,
) -> Result<Estimate> {
    cost.validate(instance)?;
    if kind == EstimatorKind::Sb && !(rho > 0.0 && rho < 1.0) {
        return Ok(Estimate { value: gte_fluid(instance, rates, cost)?, degenerate: false });
    }
    check_rho(rho)?;
    let state = fluid_state(rates, rho);
    let full = rates.treated_demand();
    let disc = discounted_weights(instance, cost)?;
    match kind {
        EstimatorKind::RctCe => {
            let demand = rates.experiment_demand(rho);
            let ce = solve_ce(&CeProblem { instance, demand: &demand, supply: &rates.gamma })?;
            let avg = average_values(instance, ce.flow(), &demand);
            let avg_treated = average_values(&disc, ce.flow(), &demand);
            Ok(Estimate { value: dot(&avg_treated, &full) - dot(&avg, &rates.lambda), degenerate: ce.degenerate })
        }
        EstimatorKind::RctCi => {
            let ci = ci_at(instance, cost, &state)?;
            let avg_con = average_values(instance, &ci.control().flow, &state.control);
            let avg_tre = average_values(&disc, &ci.treated().flow, &state.treated);
            Ok(Estimate { value: dot(&avg_tre, &full) - dot(&avg_con, &rates.lambda), degenerate: ci.degenerate })
        }
        EstimatorKind::SpCe => {
            let demand = rates.experiment_demand(rho);
            let ce = solve_ce(&CeProblem { instance, demand: &demand, supply: &rates.gamma })?;
            let duals = if ce.degenerate {
                let left = rates.experiment_demand((rho - PATH_STEP).max(0.0));
                solve_ce(&CeProblem { instance, demand: &left, supply: &rates.gamma })?
            } else {
                ce.clone()
            };
            let (a, b) = (duals.demand_duals(), &duals.supply_duals);
            let (at, bt) = discounted_duals(a, b, cost, demand.iter().sum(), rates.total_supply())?;
            Ok(Estimate {
                value: dot(&at, &full) + dot(&bt, &rates.gamma) - dot(a, &rates.lambda) - dot(b, &rates.gamma),
                degenerate: ce.degenerate,
            })
        }
        EstimatorKind::SpCi => {
            let ci = ci_at(instance, cost, &state)?;
            let duals = if ci.degenerate {
                ci_at(instance, cost, &fluid_state(rates, (rho - PATH_STEP).max(0.0)))?
            } else {
                ci.clone()
            };
            Ok(Estimate {
                value: dot(&duals.treated().duals, &full) - dot(&duals.control().duals, &rates.lambda),
                degenerate: ci.degenerate,
            })
        }
        EstimatorKind::Sb => {
            let cfg = ExperimentConfig::new(rho, 1.0)?;
            estimate_sb(&state, instance, cost, &cfg)
        }
    }
}

/// Fluid bias `estimate - effect`.
pub fn fluid_bias(
    kind: EstimatorKind,
    instance: &MatchingInstance,
    rates: &Rates,
    cost: CostModel,
    rho: f64,
) -> Result<f64> {
    Ok(estimate_fluid(kind, instance, rates, cost, rho)?.value - gte_fluid(instance, rates, cost)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{default_rates, gen_geometric, pedagogical, GeometricSpec};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pedagogical_panel_a_fluid_values() {
        let p = pedagogical();
        let (inst, r, c) = (&p.instance, &p.panel_a, p.cost());
        let gte = gte_fluid(inst, r, c).unwrap();
        assert!(close(gte, 4.35625 - 2.0, 1e-12), "{gte}");
        let f = |k| estimate_fluid(k, inst, r, c, 0.5).unwrap().value;
        assert!(close(f(EstimatorKind::RctCe), 3.84, 1e-12));
        assert!(close(f(EstimatorKind::SpCe), 2.175, 1e-12));
        assert!(close(f(EstimatorKind::RctCi), 3.1, 1e-12));
        assert!(close(f(EstimatorKind::SpCi), 2.25, 1e-12));
        assert!(close(f(EstimatorKind::Sb), gte, 1e-12));
    }

    #[test]
    fn pedagogical_panel_b_uses_left_limit_duals() {
        let p = pedagogical();
        let (inst, r, c) = (&p.instance, &p.panel_b, p.cost());
        let sp = estimate_fluid(EstimatorKind::SpCi, inst, r, c, 0.5).unwrap();
        assert!(sp.degenerate);
        assert!(close(sp.value, -0.025, 1e-9), "{}", sp.value);
        let rct = estimate_fluid(EstimatorKind::RctCi, inst, r, c, 0.5).unwrap();
        assert!(close(rct.value, -2.3875, 1e-12));
        assert!(close(gte_fluid(inst, r, c).unwrap(), 4.56875 - 4.5, 1e-12));
    }

    #[test]
    fn decomposed_effect_matches() {
        for seed in 0..5 {
            let g = gen_geometric(GeometricSpec { seed, ..Default::default() }).unwrap();
            for ratio in [0.4, 1.0, 2.5] {
                let r = default_rates(&g.instance, ratio).unwrap();
                for c in crate::instances::default_cost_models(&g.instance) {
                    let a = gte_fluid(&g.instance, &r, c).unwrap();
                    let b = gte_fluid_decomposed(&g.instance, &r, c).unwrap();
                    assert!(close(a, b, 1e-9), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn fluid_forms_match_finite_formulas_on_fluid_states() {
        for seed in 0..4 {
            let g = gen_geometric(GeometricSpec { seed, ..Default::default() }).unwrap();
            for ratio in [0.5, 1.2, 2.8] {
                let r = default_rates(&g.instance, ratio).unwrap();
                for c in crate::instances::default_cost_models(&g.instance) {
                    for rho in [0.1, 0.5] {
                        let state = fluid_state(&r, rho);
                        let cfg = ExperimentConfig::new(rho, 1.0).unwrap();
                        for (kind, est) in estimate_all(&state, &g.instance, c, &cfg).unwrap() {
                            let fl = estimate_fluid(kind, &g.instance, &r, c, rho).unwrap();
                            assert!(close(est.value, fl.value, 1e-9), "{kind} {} vs {}", est.value, fl.value);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn finite_estimates_scale_out() {
        let p = pedagogical();
        let state = fluid_state(&p.panel_a, 0.5);
        let big = ExperimentState {
            control: state.control.iter().map(|x| x * 100.0).collect(),
            treated: state.treated.iter().map(|x| x * 100.0).collect(),
            supply: state.supply.iter().map(|x| x * 100.0).collect(),
        };
        let one = estimate_all(&state, &p.instance, p.cost(), &ExperimentConfig::new(0.5, 1.0).unwrap()).unwrap();
        let hundred = estimate_all(&big, &p.instance, p.cost(), &ExperimentConfig::new(0.5, 100.0).unwrap()).unwrap();
        for ((k, a), (_, b)) in one.iter().zip(&hundred) {
            assert!(close(a.value, b.value, 1e-9), "{k}");
        }
    }

    #[test]
    fn mc_single_draw_has_no_error_bar() {
        let p = pedagogical();
        let mc = gte_finite_mc(&p.instance, &p.panel_a, p.cost(), 1.0, 1, 3, 0).unwrap();
        assert!(mc.std_error.is_none());
        let mc = gte_finite_mc(&p.instance, &p.panel_a, p.cost(), 1.0, 20, 3, 0).unwrap();
        assert!(mc.std_error.unwrap() > 0.0);
    }

    #[test]
    fn rho_out_of_range_is_rejected() {
        let p = pedagogical();
        let err = estimate_fluid(EstimatorKind::RctCe, &p.instance, &p.panel_a, p.cost(), 1.0).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }
}
