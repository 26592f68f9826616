use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{config, Result};
use crate::instances::{default_gamma_ratios, ALPHA_LEVELS, DEFAULT_BETA, DEFAULT_LAMBDA};
use crate::lp::MatchingInstance;

/// A cost model as configured: fixed costs are given relative to each
/// instance's smallest match value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CostSpec {
    Proportional { alpha: f64 },
    Fixed { kappa_fraction: f64 },
}

impl CostSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            CostSpec::Proportional { .. } => "proportional",
            CostSpec::Fixed { .. } => "fixed",
        }
    }

    /// `alpha`, or `kappa` as a fraction of the smallest match value.
    pub fn param(&self) -> f64 {
        match *self {
            CostSpec::Proportional { alpha } => alpha,
            CostSpec::Fixed { kappa_fraction } => kappa_fraction,
        }
    }

    pub fn resolve(&self, instance: &MatchingInstance) -> CostModel {
        match *self {
            CostSpec::Proportional { alpha } => CostModel::Proportional { alpha },
            CostSpec::Fixed { kappa_fraction } => CostModel::Fixed { kappa: kappa_fraction * instance.min_value() },
        }
    }
}

/// Which effect the `bias` column is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GteSource {
    /// Finite-market Monte Carlo on draws coupled to each replication.
    #[default]
    Finite,
    /// Large-market limit.
    Fluid,
}

/// Parameters of a finite-sample sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub seed: u64,
    pub n_instances: usize,
    pub n_replications: usize,
    pub n_d: usize,
    pub n_s: usize,
    pub lambda: f64,
    pub beta: f64,
    pub gamma_ratios: Vec<f64>,
    pub rhos: Vec<f64>,
    pub costs: Vec<CostSpec>,
    pub tau: f64,
    /// Global-effect draws averaged per replication.
    pub gte_draws: usize,
    pub gte_source: GteSource,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_instances: 50,
            n_replications: 50,
            n_d: 10,
            n_s: 10,
            lambda: DEFAULT_LAMBDA,
            beta: DEFAULT_BETA,
            gamma_ratios: default_gamma_ratios(),
            rhos: vec![0.1, 0.3, 0.5],
            costs: ALPHA_LEVELS.iter().map(|&alpha| CostSpec::Proportional { alpha }).collect(),
            tau: 1.0,
            gte_draws: 1,
            gte_source: GteSource::Finite,
        }
    }
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: usize| {
            if x == 0 {
                Err(config(name, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        positive("n_instances", self.n_instances)?;
        positive("n_replications", self.n_replications)?;
        positive("n_d", self.n_d)?;
        positive("n_s", self.n_s)?;
        positive("gte_draws", self.gte_draws)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(config("lambda", "must be finite and >= 0"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(config("beta", "must be finite and >= 0"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(config("tau", "must be finite and > 0"));
        }
        if self.gamma_ratios.is_empty() || self.gamma_ratios.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(config("gamma_ratios", "must be a non-empty list of finite values > 0"));
        }
        if self.rhos.is_empty() || self.rhos.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(config("rhos", "must be a non-empty list of values in (0, 1)"));
        }
        if self.costs.is_empty() {
            return Err(config("costs", "must list at least one cost model"));
        }
        for c in &self.costs {
            match *c {
                CostSpec::Proportional { alpha } if !(0.0..1.0).contains(&alpha) => {
                    return Err(config("costs.alpha", format!("must lie in [0, 1), got {alpha}")))
                }
                CostSpec::Fixed { kappa_fraction } if !(0.0..1.0).contains(&kappa_fraction) => {
                    return Err(config("costs.kappa_fraction", format!("must lie in [0, 1), got {kappa_fraction}")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn defaults_match_the_reference_study() {
        let c = SweepConfig::default();
        assert_eq!((c.n_instances, c.n_replications, c.n_d, c.n_s), (50, 50, 10, 10));
        assert_eq!(c.gamma_ratios.len(), 30);
        assert_eq!(c.rhos, vec![0.1, 0.3, 0.5]);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = SweepConfig::from_json(r#"{"n_instances": 2, "costs": [{"kind": "fixed", "kappa_fraction": 0.3}]}"#)
            .unwrap();
        assert_eq!(c.n_instances, 2);
        assert_eq!(c.costs, vec![CostSpec::Fixed { kappa_fraction: 0.3 }]);
    }

    #[test]
    fn unknown_and_bad_fields_are_named() {
        let err = SweepConfig::from_json(r#"{"n_instance": 2}"#).unwrap_err();
        assert!(err.to_string().contains("n_instance"), "{err}");
        let err = SweepConfig::from_json(r#"{"rhos": [0.0]}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "rhos"));
        let err = SweepConfig::from_json(r#"{"n_replications": 0}"#).unwrap_err();
        assert!(err.to_string().contains("n_replications"));
    }
}
