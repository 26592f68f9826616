//! Solve a small matching LP, read its shadow prices and check optimality.

use matchlab::lp::{solve_ce, verify_kkt, CeProblem, MatchingInstance};

fn main() -> matchlab::Result<()> {
    // Two demand types, three supply types.
    let instance = MatchingInstance::from_rows(&[vec![3.0, 2.0, 1.0], vec![2.5, 2.4, 0.5]])?;
    let demand = [4.0, 3.0];
    let supply = [2.0, 2.0, 5.0];
    let problem = CeProblem { instance: &instance, demand: &demand, supply: &supply };
    let out = solve_ce(&problem)?;

    println!("objective      {:.4}", out.objective);
    for (i, row) in out.flow().iter().enumerate() {
        println!("demand {i} flow   {row:?}   shadow price {:.4}", out.demand_duals()[i]);
    }
    println!("supply prices  {:?}", out.supply_duals);
    println!("degenerate     {}", out.degenerate);
    match verify_kkt(&problem, &out) {
        Ok(()) => println!("KKT conditions hold"),
        Err(v) => println!("KKT violations: {v:?}"),
    }
    Ok(())
}
