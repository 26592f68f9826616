//! Exhaustive oracle for small integer matching problems.

use std::collections::HashMap;

use super::{MatchingProblem, TransportLp};
use crate::error::{Error, Result};

/// Largest total demand or total supply the oracle accepts.
pub const MAX_UNITS: u32 = 12;

/// Optimal objective by enumerating every integer assignment.
///
/// Rows are assigned one at a time; each row tries every split of up to its
/// demand over the remaining supply.  Results are memoised on the remaining
/// supply vector, so the search is exhaustive but never revisits a state.
pub fn brute_force_matching(problem: &impl MatchingProblem) -> Result<f64> {
    let lp = problem.lower()?;
    let demand = integral(&lp.demand, "demand")?;
    let supply = integral(&lp.supply, "supply")?;
    if demand.iter().sum::<u32>() > MAX_UNITS || supply.iter().sum::<u32>() > MAX_UNITS {
        return Err(Error::OracleScope(format!("total demand and total supply must each be <= {MAX_UNITS}")));
    }
    let mut memo = HashMap::new();
    Ok(best(&lp, &demand, 0, supply, &mut memo))
}

fn integral(q: &[f64], name: &str) -> Result<Vec<u32>> {
    q.iter()
        .map(|&x| {
            let r = x.round();
            if (x - r).abs() > 1e-9 || r < 0.0 {
                Err(Error::OracleScope(format!("{name} quantity {x} is not a non-negative integer")))
            } else {
                Ok(r as u32)
            }
        })
        .collect()
}

fn best(
    lp: &TransportLp,
    demand: &[u32],
    row: usize,
    remaining: Vec<u32>,
    memo: &mut HashMap<(usize, Vec<u32>), f64>,
) -> f64 {
    if row == demand.len() {
        return 0.0;
    }
    if let Some(&v) = memo.get(&(row, remaining.clone())) {
        return v;
    }
    let mut top = f64::NEG_INFINITY;
    let mut alloc = vec![0u32; lp.n_s];
    splits(lp, demand, row, &remaining, 0, demand[row], &mut alloc, 0.0, &mut top, memo);
    memo.insert((row, remaining), top);
    top
}

#[allow(clippy::too_many_arguments)]
fn splits(
    lp: &TransportLp,
    demand: &[u32],
    row: usize,
    remaining: &[u32],
    col: usize,
    left: u32,
    alloc: &mut Vec<u32>,
    gained: f64,
    top: &mut f64,
    memo: &mut HashMap<(usize, Vec<u32>), f64>,
) {
    if col == lp.n_s {
        let rest: Vec<u32> = remaining.iter().zip(alloc.iter()).map(|(r, a)| r - a).collect();
        let total = gained + best(lp, demand, row + 1, rest, memo);
        if total > *top {
            *top = total;
        }
        return;
    }
    for q in 0..=left.min(remaining[col]) {
        alloc[col] = q;
        let w = lp.weights[row * lp.n_s + col];
        splits(lp, demand, row, remaining, col + 1, left - q, alloc, gained + w * f64::from(q), top, memo);
    }
    alloc[col] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{CeProblem, MatchingInstance};

    #[test]
    fn small_assignment() {
        let inst = MatchingInstance::new(2, 2, vec![3.0, 1.0, 2.0, 1.0]).unwrap();
        let p = CeProblem { instance: &inst, demand: &[1.0, 1.0], supply: &[1.0, 1.0] };
        assert_eq!(brute_force_matching(&p).unwrap(), 4.0);
    }

    #[test]
    fn rejects_fractional_and_large() {
        let inst = MatchingInstance::new(1, 1, vec![1.0]).unwrap();
        let p = CeProblem { instance: &inst, demand: &[0.5], supply: &[1.0] };
        assert!(matches!(brute_force_matching(&p), Err(Error::OracleScope(_))));
        let p = CeProblem { instance: &inst, demand: &[13.0], supply: &[1.0] };
        assert!(matches!(brute_force_matching(&p), Err(Error::OracleScope(_))));
    }
}
