//! Matching linear programs and their duals.
//!
//! Two designs share one solver.  The cost-excluded problem has a single
//! demand group; the cost-included problem splits demand into a control group
//! (full match values) and a treated group (discounted match values) that
//! compete for the same supply.  Both are lowered to a [`TransportLp`] and
//! solved exactly with a transportation simplex using Bland's rule.

mod brute;
mod transport;

use serde::{Deserialize, Serialize};

use crate::cost::{discounted_weights, CostModel};
use crate::error::{input, Result};

pub use brute::brute_force_matching;

/// Absolute tolerance used for feasibility and tightness tests, scaled by problem size.
pub const KKT_TOL: f64 = 1e-9;

/// Match values between demand types (rows) and supply types (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingInstance {
    n_d: usize,
    n_s: usize,
    values: Vec<f64>,
}

impl MatchingInstance {
    /// Builds an instance from row-major values; every value must be finite and strictly positive.
    pub fn new(n_d: usize, n_s: usize, values: Vec<f64>) -> Result<Self> {
        if n_d == 0 || n_s == 0 {
            return Err(input("instance needs at least one demand and one supply type"));
        }
        if values.len() != n_d * n_s {
            return Err(input(format!(
                "expected {} match values for a {n_d}x{n_s} instance, got {}",
                n_d * n_s,
                values.len()
            )));
        }
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(input(format!("match value at ({}, {}) must be finite and > 0, got {v}", k / n_s, k % n_s)));
        }
        Ok(Self { n_d, n_s, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_d = rows.len();
        let n_s = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_s) {
            return Err(input("ragged match value rows"));
        }
        Self::new(n_d, n_s, rows.concat())
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_s + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_s..(i + 1) * self.n_s]
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// For each supply type, the largest value any demand type attaches to it.
    pub fn column_max(&self) -> Vec<f64> {
        (0..self.n_s).map(|j| (0..self.n_d).map(|i| self.value(i, j)).fold(f64::MIN, f64::max)).collect()
    }
}

/// Cost-excluded matching: one demand group with full match values.
#[derive(Debug, Clone, Copy)]
pub struct CeProblem<'a> {
    pub instance: &'a MatchingInstance,
    pub demand: &'a [f64],
    pub supply: &'a [f64],
}

/// Cost-included matching: control and treated demand compete for the same supply.
#[derive(Debug, Clone, Copy)]
pub struct CiProblem<'a> {
    pub instance: &'a MatchingInstance,
    pub cost: CostModel,
    pub control: &'a [f64],
    pub treated: &'a [f64],
    pub supply: &'a [f64],
}

/// A solved demand group: its flows (one row per demand type) and demand duals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandGroup {
    pub flow: Vec<Vec<f64>>,
    pub duals: Vec<f64>,
}

impl DemandGroup {
    pub fn matched(&self) -> f64 {
        self.flow.iter().flatten().sum()
    }
}

/// Optimal primal flows and duals of a matching problem.
///
/// A cost-excluded problem has one group.  A cost-included problem has two:
/// control first, then treated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchOutcome {
    pub objective: f64,
    pub groups: Vec<DemandGroup>,
    pub supply_duals: Vec<f64>,
    /// True when the basic optimum may have non-unique duals: fewer positive
    /// flows than tight capacity constraints.
    pub degenerate: bool,
}

impl MatchOutcome {
    /// Flows of the first (or only) demand group.
    pub fn flow(&self) -> &[Vec<f64>] {
        &self.groups[0].flow
    }

    /// Demand duals of the first (or only) demand group.
    pub fn demand_duals(&self) -> &[f64] {
        &self.groups[0].duals
    }

    pub fn control(&self) -> &DemandGroup {
        &self.groups[0]
    }

    /// Treated group of a cost-included outcome.
    ///
    /// # Panics
    /// Panics on a cost-excluded outcome.
    pub fn treated(&self) -> &DemandGroup {
        self.groups.get(1).expect("cost-excluded outcome has no treated group")
    }
}

/// A matching problem lowered to transportation form: weights per (row, supply type).
#[derive(Debug, Clone)]
pub struct TransportLp {
    pub n_s: usize,
    pub group_sizes: Vec<usize>,
    pub weights: Vec<f64>,
    pub demand: Vec<f64>,
    pub supply: Vec<f64>,
}

impl TransportLp {
    pub fn rows(&self) -> usize {
        self.demand.len()
    }

    fn weight(&self, r: usize, j: usize) -> f64 {
        self.weights[r * self.n_s + j]
    }
}

/// Anything that lowers to a transportation LP.
pub trait MatchingProblem {
    fn lower(&self) -> Result<TransportLp>;
}

fn check_quantities(name: &str, q: &[f64], expected: usize) -> Result<()> {
    if q.len() != expected {
        return Err(input(format!("{name} has length {}, expected {expected}", q.len())));
    }
    if let Some((k, x)) = q.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
        return Err(input(format!("{name}[{k}] must be finite and >= 0, got {x}")));
    }
    Ok(())
}

impl MatchingProblem for CeProblem<'_> {
    fn lower(&self) -> Result<TransportLp> {
        let inst = self.instance;
        check_quantities("demand", self.demand, inst.n_d())?;
        check_quantities("supply", self.supply, inst.n_s())?;
        Ok(TransportLp {
            n_s: inst.n_s(),
            group_sizes: vec![inst.n_d()],
            weights: inst.values().to_vec(),
            demand: self.demand.to_vec(),
            supply: self.supply.to_vec(),
        })
    }
}

impl MatchingProblem for CiProblem<'_> {
    fn lower(&self) -> Result<TransportLp> {
        let inst = self.instance;
        check_quantities("control demand", self.control, inst.n_d())?;
        check_quantities("treated demand", self.treated, inst.n_d())?;
        check_quantities("supply", self.supply, inst.n_s())?;
        let treated = discounted_weights(inst, self.cost)?;
        let mut weights = inst.values().to_vec();
        weights.extend_from_slice(treated.values());
        let mut demand = self.control.to_vec();
        demand.extend_from_slice(self.treated);
        Ok(TransportLp {
            n_s: inst.n_s(),
            group_sizes: vec![inst.n_d(), inst.n_d()],
            weights,
            demand,
            supply: self.supply.to_vec(),
        })
    }
}

/// Solves any lowered matching problem.
pub fn solve(problem: &impl MatchingProblem) -> Result<MatchOutcome> {
    let lp = problem.lower()?;
    solve_lowered(&lp)
}

pub fn solve_ce(problem: &CeProblem<'_>) -> Result<MatchOutcome> {
    solve(problem)
}

pub fn solve_ci(problem: &CiProblem<'_>) -> Result<MatchOutcome> {
    solve(problem)
}

/// Optimal value of the cost-excluded problem.
pub fn value_ce(instance: &MatchingInstance, demand: &[f64], supply: &[f64]) -> Result<f64> {
    Ok(solve_ce(&CeProblem { instance, demand, supply })?.objective)
}

/// Optimal value of the cost-included problem.
pub fn value_ci(
    instance: &MatchingInstance,
    cost: CostModel,
    control: &[f64],
    treated: &[f64],
    supply: &[f64],
) -> Result<f64> {
    Ok(solve_ci(&CiProblem { instance, cost, control, treated, supply })?.objective)
}

fn solve_lowered(lp: &TransportLp) -> Result<MatchOutcome> {
    let rows = lp.rows();
    let sol = transport::solve(&lp.weights, rows, lp.n_s, &lp.demand, &lp.supply)?;
    let mut groups = Vec::with_capacity(lp.group_sizes.len());
    let mut r0 = 0;
    for &size in &lp.group_sizes {
        let flow = (r0..r0 + size).map(|r| sol.flow[r * lp.n_s..(r + 1) * lp.n_s].to_vec()).collect();
        let duals = sol.row_duals[r0..r0 + size].to_vec();
        groups.push(DemandGroup { flow, duals });
        r0 += size;
    }
    let degenerate = is_degenerate(lp, &sol.flow);
    Ok(MatchOutcome { objective: sol.objective, groups, supply_duals: sol.col_duals, degenerate })
}

fn tol_for(lp: &TransportLp) -> f64 {
    let mag = lp.demand.iter().chain(&lp.supply).fold(1.0_f64, |acc, x| acc.max(x.abs()));
    KKT_TOL * mag
}

/// A basic optimum of the inequality-form LP has unique duals only if every
/// tight capacity constraint is paired with its own positive flow.
///
/// Zero-capacity constraints are left out: their duals multiply nothing at the
/// solved point.
fn is_degenerate(lp: &TransportLp, flow: &[f64]) -> bool {
    let tol = tol_for(lp);
    let n_s = lp.n_s;
    let positive = flow.iter().filter(|&&x| x > tol).count();
    let tight_rows = (0..lp.rows())
        .filter(|&r| lp.demand[r] > tol && lp.demand[r] - flow[r * n_s..(r + 1) * n_s].iter().sum::<f64>() <= tol)
        .count();
    let tight_cols = (0..n_s)
        .filter(|&j| lp.supply[j] > tol && lp.supply[j] - (0..lp.rows()).map(|r| flow[r * n_s + j]).sum::<f64>() <= tol)
        .count();
    positive < tight_rows + tight_cols
}

/// A violated optimality condition with its residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: String,
    pub residual: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (residual {:e})", self.constraint, self.residual)
    }
}

/// Checks primal feasibility, dual feasibility, complementary slackness and a
/// zero duality gap.  Returns every violation found.
pub fn verify_kkt(problem: &impl MatchingProblem, outcome: &MatchOutcome) -> std::result::Result<(), Vec<Violation>> {
    let lp = match problem.lower() {
        Ok(lp) => lp,
        Err(e) => return Err(vec![Violation { constraint: format!("problem lowering: {e}"), residual: f64::NAN }]),
    };
    let tol = tol_for(&lp);
    let wscale = lp.weights.iter().fold(1.0_f64, |a, w| a.max(w.abs()));
    let dtol = KKT_TOL * wscale;
    let n_s = lp.n_s;
    let mut out = Vec::new();
    let mut bad = |constraint: String, residual: f64| out.push(Violation { constraint, residual });

    let flow: Vec<f64> = outcome.groups.iter().flat_map(|g| g.flow.iter().flatten().copied()).collect();
    let a: Vec<f64> = outcome.groups.iter().flat_map(|g| g.duals.iter().copied()).collect();
    let b = &outcome.supply_duals;
    if flow.len() != lp.rows() * n_s || a.len() != lp.rows() || b.len() != n_s {
        bad("outcome dimensions do not match problem".into(), f64::NAN);
        return Err(out);
    }

    let mut primal = 0.0;
    for r in 0..lp.rows() {
        let used: f64 = flow[r * n_s..(r + 1) * n_s].iter().sum();
        if used - lp.demand[r] > tol {
            bad(format!("demand capacity row {r}"), used - lp.demand[r]);
        }
        if a[r] < -dtol {
            bad(format!("demand dual row {r} >= 0"), a[r]);
        }
        if lp.demand[r] - used > tol && a[r].abs() > dtol {
            bad(format!("slack demand row {r} has nonzero dual"), a[r]);
        }
        for j in 0..n_s {
            let x = flow[r * n_s + j];
            let w = lp.weight(r, j);
            primal += w * x;
            if x < -tol {
                bad(format!("flow ({r}, {j}) >= 0"), x);
            }
            let reduced = a[r] + b[j] - w;
            if reduced < -dtol {
                bad(format!("dual constraint ({r}, {j})"), reduced);
            }
            if x > tol && reduced > dtol {
                bad(format!("positive flow ({r}, {j}) on non-tight dual constraint"), reduced);
            }
        }
    }
    for j in 0..n_s {
        let used: f64 = (0..lp.rows()).map(|r| flow[r * n_s + j]).sum();
        if used - lp.supply[j] > tol {
            bad(format!("supply capacity column {j}"), used - lp.supply[j]);
        }
        if b[j] < -dtol {
            bad(format!("supply dual column {j} >= 0"), b[j]);
        }
        if lp.supply[j] - used > tol && b[j].abs() > dtol {
            bad(format!("slack supply column {j} has nonzero dual"), b[j]);
        }
    }
    let dual: f64 = a.iter().zip(&lp.demand).map(|(x, d)| x * d).sum::<f64>()
        + b.iter().zip(&lp.supply).map(|(x, s)| x * s).sum::<f64>();
    let gap_tol = KKT_TOL * (1.0 + primal.abs());
    if (primal - dual).abs() > gap_tol {
        bad("duality gap".into(), primal - dual);
    }
    if (primal - outcome.objective).abs() > gap_tol {
        bad("reported objective differs from flows".into(), outcome.objective - primal);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pedagogical() -> MatchingInstance {
        MatchingInstance::new(1, 3, vec![2.0, 1.0, 0.25]).unwrap()
    }

    #[test]
    fn single_type_value_function_breakpoints() {
        let inst = pedagogical();
        let s = [1.5, 2.0, 2.0];
        for (d, want) in [(0.0, 0.0), (1.5, 3.0), (2.5, 4.0), (3.5, 5.0), (5.5, 5.5), (7.0, 5.5)] {
            let out = solve_ce(&CeProblem { instance: &inst, demand: &[d], supply: &s }).unwrap();
            assert!((out.objective - want).abs() < 1e-12, "d={d}: {}", out.objective);
        }
    }

    #[test]
    fn interior_point_duals_are_the_local_slope() {
        let inst = pedagogical();
        let p = CeProblem { instance: &inst, demand: &[2.5], supply: &[1.5, 2.0, 2.0] };
        let out = solve_ce(&p).unwrap();
        assert!(!out.degenerate);
        assert!((out.demand_duals()[0] - 1.0).abs() < 1e-12);
        let b = &out.supply_duals;
        assert!((b[0] - 1.0).abs() < 1e-12 && b[1].abs() < 1e-12 && b[2].abs() < 1e-12);
        verify_kkt(&p, &out).unwrap();
    }

    #[test]
    fn kinked_point_is_flagged_degenerate() {
        let inst = pedagogical();
        let p = CeProblem { instance: &inst, demand: &[1.5], supply: &[1.5, 2.0, 2.0] };
        let out = solve_ce(&p).unwrap();
        assert!(out.degenerate);
        verify_kkt(&p, &out).unwrap();
    }

    #[test]
    fn cost_included_split_panel_b() {
        let inst = pedagogical();
        let p = CiProblem {
            instance: &inst,
            cost: CostModel::Proportional { alpha: 0.15 },
            control: &[1.5],
            treated: &[2.5],
            supply: &[1.5, 2.0, 2.0],
        };
        let out = solve_ci(&p).unwrap();
        assert!((out.objective - 4.80625).abs() < 1e-12);
        assert!(out.degenerate, "this point has a range of control duals");
        verify_kkt(&p, &out).unwrap();
    }

    #[test]
    fn zero_quantities_solve_to_zero() {
        let inst = MatchingInstance::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = CeProblem { instance: &inst, demand: &[0.0, 0.0], supply: &[1.0, 1.0] };
        let out = solve_ce(&p).unwrap();
        assert_eq!(out.objective, 0.0);
        verify_kkt(&p, &out).unwrap();
    }

    #[test]
    fn kkt_reports_tampered_duals() {
        let inst = pedagogical();
        let p = CeProblem { instance: &inst, demand: &[2.5], supply: &[1.5, 2.0, 2.0] };
        let mut out = solve_ce(&p).unwrap();
        out.groups[0].duals[0] = 0.5;
        let v = verify_kkt(&p, &out).unwrap_err();
        assert!(v.iter().any(|x| x.constraint.starts_with("dual constraint")));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(MatchingInstance::new(1, 2, vec![1.0]).is_err());
        assert!(MatchingInstance::new(1, 1, vec![0.0]).is_err());
        let inst = pedagogical();
        let p = CeProblem { instance: &inst, demand: &[-1.0], supply: &[1.0, 1.0, 1.0] };
        assert!(solve_ce(&p).is_err());
        let p = CeProblem { instance: &inst, demand: &[1.0], supply: &[1.0] };
        assert!(solve_ce(&p).is_err());
    }
}
