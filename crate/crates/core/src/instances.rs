//! Seeded market instances.
//!
//! Geometric instances place demand and supply types uniformly in the unit
//! square and value a match by `exp(-distance)`.  The pedagogical instance is a
//! single demand type facing three supply types of decreasing value.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{config, Result};
use crate::lp::MatchingInstance;
use crate::market::Rates;
use crate::rng::{streams, StreamKey};

/// Control demand rate per type in the default market.
pub const DEFAULT_LAMBDA: f64 = 13.0;
/// Demand lift per type in the default market.
pub const DEFAULT_BETA: f64 = 3.0;
/// Relative fixed-cost levels, as fractions of the smallest match value.
pub const KAPPA_FRACTIONS: [f64; 3] = [0.1, 0.3, 0.5];
/// Proportional cost levels used by the default sweeps.
pub const ALPHA_LEVELS: [f64; 3] = [0.05, 0.10, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricSpec {
    pub n_d: usize,
    pub n_s: usize,
    pub seed: u64,
    pub index: u64,
}

impl Default for GeometricSpec {
    fn default() -> Self {
        Self { n_d: 10, n_s: 10, seed: 0, index: 0 }
    }
}

/// Locations of demand and supply types in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Locations {
    pub demand: Vec<[f64; 2]>,
    pub supply: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations: Option<Locations>,
}

/// Serialized form of an instance: dimensions, row-major values and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n_d: usize,
    pub n_s: usize,
    pub v: Vec<f64>,
    pub meta: InstanceMeta,
}

impl InstanceFile {
    pub fn instance(&self) -> Result<MatchingInstance> {
        MatchingInstance::new(self.n_d, self.n_s, self.v.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricInstance {
    pub instance: MatchingInstance,
    pub locations: Locations,
    pub spec: GeometricSpec,
}

impl GeometricInstance {
    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            n_d: self.instance.n_d(),
            n_s: self.instance.n_s(),
            v: self.instance.values().to_vec(),
            meta: InstanceMeta {
                seed: self.spec.seed,
                index: Some(self.spec.index),
                locations: Some(self.locations.clone()),
            },
        }
    }
}

/// Draws a geometric instance; the same spec always yields the same instance.
pub fn gen_geometric(spec: GeometricSpec) -> Result<GeometricInstance> {
    if spec.n_d == 0 || spec.n_s == 0 {
        return Err(config("n_d/n_s", "instance needs at least one type on each side"));
    }
    let mut rng = StreamKey::new(spec.seed, spec.index, 0).rng(streams::GEOMETRY);
    let mut point = || [rng.random::<f64>(), rng.random::<f64>()];
    let demand: Vec<[f64; 2]> = (0..spec.n_d).map(|_| point()).collect();
    let supply: Vec<[f64; 2]> = (0..spec.n_s).map(|_| point()).collect();
    let values =
        demand.iter().flat_map(|d| supply.iter().map(move |s| (-(d[0] - s[0]).hypot(d[1] - s[1])).exp())).collect();
    Ok(GeometricInstance {
        instance: MatchingInstance::new(spec.n_d, spec.n_s, values)?,
        locations: Locations { demand, supply },
        spec,
    })
}

/// Rates with uniform control demand and lift, and uniform supply set so that
/// each supply type's rate is `gamma_ratio * lambda`.
pub fn rates_with_levels(instance: &MatchingInstance, lambda: f64, beta: f64, gamma_ratio: f64) -> Result<Rates> {
    if !(gamma_ratio.is_finite() && gamma_ratio > 0.0) {
        return Err(config("gamma_ratio", format!("must be finite and > 0, got {gamma_ratio}")));
    }
    Rates::new(vec![lambda; instance.n_d()], vec![beta; instance.n_d()], vec![gamma_ratio * lambda; instance.n_s()])
}

/// Default market: `lambda = 13`, `beta = 3`, supply `gamma_ratio * 13` per type.
pub fn default_rates(instance: &MatchingInstance, gamma_ratio: f64) -> Result<Rates> {
    rates_with_levels(instance, DEFAULT_LAMBDA, DEFAULT_BETA, gamma_ratio)
}

/// `n` supply ratios evenly spaced over `[lo, hi]`.
pub fn gamma_ratio_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// The default 30-point supply ratio grid on `[0.3, 3]`.
pub fn default_gamma_ratios() -> Vec<f64> {
    gamma_ratio_grid(0.3, 3.0, 30)
}

/// Fixed cost levels `{0.1, 0.3, 0.5} * min v`.
pub fn fixed_kappa_levels(instance: &MatchingInstance) -> [f64; 3] {
    KAPPA_FRACTIONS.map(|f| f * instance.min_value())
}

/// The six cost models of the default study: three proportional, three fixed.
pub fn default_cost_models(instance: &MatchingInstance) -> Vec<CostModel> {
    ALPHA_LEVELS
        .iter()
        .map(|&alpha| CostModel::Proportional { alpha })
        .chain(fixed_kappa_levels(instance).iter().map(|&kappa| CostModel::Fixed { kappa }))
        .collect()
}

/// The single-demand-type walkthrough market.
#[derive(Debug, Clone, PartialEq)]
pub struct Pedagogical {
    pub instance: MatchingInstance,
    /// Mild lift: `lambda = 1`, `beta = 3`.
    pub panel_a: Rates,
    /// Saturating lift: `lambda = 3`, `beta = 2`.
    pub panel_b: Rates,
    pub alpha: f64,
    pub rho: f64,
}

impl Pedagogical {
    pub fn cost(&self) -> CostModel {
        CostModel::Proportional { alpha: self.alpha }
    }
}

pub fn pedagogical() -> Pedagogical {
    let instance = MatchingInstance::new(1, 3, vec![2.0, 1.0, 0.25]).expect("valid constants");
    let gamma = vec![1.5, 2.0, 2.0];
    Pedagogical {
        instance,
        panel_a: Rates::new(vec![1.0], vec![3.0], gamma.clone()).expect("valid constants"),
        panel_b: Rates::new(vec![3.0], vec![2.0], gamma).expect("valid constants"),
        alpha: 0.15,
        rho: 0.5,
    }
}

/// One demand and one supply type of unit value with no control demand, one
/// unit of lift and supply `(1 - zeta) / (2 - zeta)`.  At this supply level the
/// allocation threshold for the shadow-price estimator's advantage is tight.
pub fn tightness_instance(zeta: f64) -> Result<(MatchingInstance, Rates)> {
    if !(0.0..1.0).contains(&zeta) {
        return Err(config("zeta", format!("must lie in [0, 1), got {zeta}")));
    }
    let inst = MatchingInstance::new(1, 1, vec![1.0])?;
    let rates = Rates::new(vec![0.0], vec![1.0], vec![(1.0 - zeta) / (2.0 - zeta)])?;
    Ok((inst, rates))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_is_reproducible_and_bounded() {
        let spec = GeometricSpec { seed: 42, ..Default::default() };
        let a = gen_geometric(spec).unwrap();
        let b = gen_geometric(spec).unwrap();
        assert_eq!(a, b);
        let c = gen_geometric(GeometricSpec { index: 1, ..spec }).unwrap();
        assert_ne!(a.instance, c.instance);
        let floor = (-(2.0_f64).sqrt()).exp();
        assert!(a.instance.values().iter().all(|&v| v > floor && v <= 1.0));
    }

    #[test]
    fn values_follow_locations() {
        let g = gen_geometric(GeometricSpec { n_d: 3, n_s: 4, seed: 7, index: 2 }).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let (d, s) = (g.locations.demand[i], g.locations.supply[j]);
                let want = (-((d[0] - s[0]).powi(2) + (d[1] - s[1]).powi(2)).sqrt()).exp();
                assert!((g.instance.value(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn default_grid_and_rates() {
        let grid = default_gamma_ratios();
        assert_eq!(grid.len(), 30);
        assert_eq!(grid[0], 0.3);
        assert!((grid[29] - 3.0).abs() < 1e-15);
        let g = gen_geometric(GeometricSpec::default()).unwrap();
        let r = default_rates(&g.instance, 2.0).unwrap();
        assert_eq!(r.gamma, vec![26.0; 10]);
        assert_eq!(r.lambda, vec![13.0; 10]);
        assert_eq!(r.beta, vec![3.0; 10]);
    }

    #[test]
    fn kappa_levels_scale_with_min_value() {
        let g = gen_geometric(GeometricSpec::default()).unwrap();
        let m = g.instance.min_value();
        assert_eq!(fixed_kappa_levels(&g.instance), [0.1 * m, 0.3 * m, 0.5 * m]);
        assert_eq!(default_cost_models(&g.instance).len(), 6);
    }

    #[test]
    fn instance_file_round_trip() {
        let g = gen_geometric(GeometricSpec { n_d: 2, n_s: 3, seed: 1, index: 0 }).unwrap();
        let text = serde_json::to_string(&g.to_file()).unwrap();
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.instance().unwrap(), g.instance);
        assert!(serde_json::from_str::<InstanceFile>(r#"{"n_d":1,"n_s":1,"v":[1],"meta":{"seed":0},"x":1}"#).is_err());
    }
}
