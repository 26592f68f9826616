//! Structural invariants on randomly generated markets.

use proptest::prelude::*;

use matchlab::cost::CostModel;
use matchlab::estimators::{estimate_fluid, gte_fluid, EstimatorKind};
use matchlab::lp::{
    brute_force_matching, solve_ce, solve_ci, value_ce, verify_kkt, CeProblem, CiProblem, MatchingInstance,
};
use matchlab::market::{split_flows, Rates};
use matchlab::rng::poisson_quantile;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// An instance with `n_d x n_s` values in (0.05, 1].
fn instance() -> impl Strategy<Value = MatchingInstance> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(n_d, n_s)| {
        prop::collection::vec(0.05f64..=1.0, n_d * n_s).prop_map(move |v| MatchingInstance::new(n_d, n_s, v).unwrap())
    })
}

fn quantities(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], n)
}

/// Instance with demand and supply vectors of matching sizes.
fn market() -> impl Strategy<Value = (MatchingInstance, Vec<f64>, Vec<f64>)> {
    instance().prop_flat_map(|inst| {
        let (n_d, n_s) = (inst.n_d(), inst.n_s());
        (Just(inst), quantities(n_d), quantities(n_s))
    })
}

fn cost() -> impl Strategy<Value = CostModel> {
    prop_oneof![
        (0.0f64..0.9).prop_map(|alpha| CostModel::Proportional { alpha }),
        (0.0f64..0.04).prop_map(|kappa| CostModel::Fixed { kappa }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimum_satisfies_kkt((inst, d, s) in market()) {
        let p = CeProblem { instance: &inst, demand: &d, supply: &s };
        let out = solve_ce(&p).unwrap();
        prop_assert!(verify_kkt(&p, &out).is_ok(), "{:?}", verify_kkt(&p, &out));
    }

    #[test]
    fn cost_included_optimum_satisfies_kkt((inst, d, s) in market(), c in cost(), share in 0.0f64..=1.0) {
        let treated: Vec<f64> = d.iter().map(|x| x * share).collect();
        let control: Vec<f64> = d.iter().map(|x| x * (1.0 - share)).collect();
        let p = CiProblem { instance: &inst, cost: c, control: &control, treated: &treated, supply: &s };
        let out = solve_ci(&p).unwrap();
        prop_assert!(verify_kkt(&p, &out).is_ok(), "{:?}", verify_kkt(&p, &out));
    }

    #[test]
    fn value_is_positively_homogeneous((inst, d, s) in market(), k in 0.1f64..10.0) {
        let scaled = |q: &[f64]| q.iter().map(|x| x * k).collect::<Vec<_>>();
        let v = value_ce(&inst, &d, &s).unwrap();
        prop_assert!(close(value_ce(&inst, &scaled(&d), &scaled(&s)).unwrap(), k * v));
    }

    #[test]
    fn value_is_concave_in_demand((inst, d, s) in market(), t in 0.0f64..=1.0, other in quantities(4)) {
        let e: Vec<f64> = other.into_iter().cycle().take(d.len()).collect();
        let mid: Vec<f64> = d.iter().zip(&e).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let lhs = value_ce(&inst, &mid, &s).unwrap();
        let rhs = t * value_ce(&inst, &d, &s).unwrap() + (1.0 - t) * value_ce(&inst, &e, &s).unwrap();
        prop_assert!(lhs >= rhs - 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn value_grows_with_supply((inst, d, s) in market(), j in 0usize..4, extra in 0.0f64..5.0) {
        let mut more = s.clone();
        let j = j % more.len();
        more[j] += extra;
        prop_assert!(value_ce(&inst, &d, &more).unwrap() >= value_ce(&inst, &d, &s).unwrap() - 1e-12);
    }

    #[test]
    fn value_saturates_once_supply_is_ample((inst, d, _s) in market()) {
        let total: f64 = d.iter().sum();
        let ample = vec![total + 1.0; inst.n_s()];
        let best: f64 = d.iter().enumerate().map(|(i, x)| x * inst.row(i).iter().copied().fold(0.0, f64::max)).sum();
        prop_assert!(close(value_ce(&inst, &d, &ample).unwrap(), best));
    }

    #[test]
    fn split_flows_conserve_the_pooled_flow((inst, d, s) in market(), share in 0.0f64..=1.0) {
        let out = solve_ce(&CeProblem { instance: &inst, demand: &d, supply: &s }).unwrap();
        let treated: Vec<f64> = d.iter().map(|x| x * share).collect();
        let control: Vec<f64> = d.iter().zip(&treated).map(|(x, t)| x - t).collect();
        let (con, tre) = split_flows(out.flow(), &control, &treated);
        for i in 0..d.len() {
            for j in 0..s.len() {
                let f = out.flow()[i][j];
                if d[i] > 0.0 {
                    prop_assert!(close(con[i][j] + tre[i][j], f));
                }
                prop_assert!(con[i][j] >= 0.0 && tre[i][j] >= 0.0);
            }
        }
    }

    #[test]
    fn matches_enumeration_on_integer_markets(
        n_d in 1usize..=3, n_s in 1usize..=3,
        v in prop::collection::vec(1u8..=9, 9),
        d in prop::collection::vec(0u8..=3, 3),
        s in prop::collection::vec(0u8..=3, 3),
    ) {
        let inst = MatchingInstance::new(n_d, n_s, v[..n_d * n_s].iter().map(|&x| x as f64).collect()).unwrap();
        let d: Vec<f64> = d[..n_d].iter().map(|&x| x as f64).collect();
        let s: Vec<f64> = s[..n_s].iter().map(|&x| x as f64).collect();
        let p = CeProblem { instance: &inst, demand: &d, supply: &s };
        prop_assert_eq!(solve_ce(&p).unwrap().objective, brute_force_matching(&p).unwrap());
    }

    #[test]
    fn poisson_quantile_is_monotone(rate in 0.0f64..200.0, u in 0.0f64..1.0, w in 0.0f64..1.0, bump in 0.0f64..5.0) {
        let (lo, hi) = if u <= w { (u, w) } else { (w, u) };
        prop_assert!(poisson_quantile(rate, lo) <= poisson_quantile(rate, hi));
        prop_assert!(poisson_quantile(rate, u) <= poisson_quantile(rate + bump, u));
    }
}

fn rates_for(inst: &MatchingInstance) -> impl Strategy<Value = Rates> {
    let (n_d, n_s) = (inst.n_d(), inst.n_s());
    (
        prop::collection::vec(0.1f64..5.0, n_d),
        prop::collection::vec(0.0f64..3.0, n_d),
        prop::collection::vec(0.1f64..8.0, n_s),
    )
        .prop_map(|(l, b, g)| Rates::new(l, b, g).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fluid_estimators_scale_with_the_market(
        (inst, rates) in instance().prop_flat_map(|i| { let r = rates_for(&i); (Just(i), r) }),
        c in prop_oneof![(0.0f64..0.9).prop_map(|alpha| CostModel::Proportional { alpha })],
        rho in 0.05f64..0.95,
        k in 0.5f64..4.0,
    ) {
        let scaled = Rates::new(
            rates.lambda.iter().map(|x| x * k).collect(),
            rates.beta.iter().map(|x| x * k).collect(),
            rates.gamma.iter().map(|x| x * k).collect(),
        ).unwrap();
        for kind in EstimatorKind::ALL {
            let a = estimate_fluid(kind, &inst, &rates, c, rho).unwrap().value;
            let b = estimate_fluid(kind, &inst, &scaled, c, rho).unwrap().value;
            prop_assert!((b - k * a).abs() <= 1e-7 * (1.0 + (k * a).abs()), "{kind}: {b} vs {}", k * a);
        }
    }

    #[test]
    fn difference_in_means_never_underestimates_and_split_is_exact(
        (inst, rates) in instance().prop_flat_map(|i| { let r = rates_for(&i); (Just(i), r) }),
        c in cost(),
        rho in 0.05f64..0.95,
    ) {
        let gte = gte_fluid(&inst, &rates, c).unwrap();
        let dm = estimate_fluid(EstimatorKind::RctCe, &inst, &rates, c, rho).unwrap().value;
        let sb = estimate_fluid(EstimatorKind::Sb, &inst, &rates, c, rho).unwrap().value;
        prop_assert!(dm - gte >= -1e-9 * (1.0 + gte.abs()));
        prop_assert!((sb - gte).abs() <= 1e-9 * (1.0 + gte.abs()));
    }
}
