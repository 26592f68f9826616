//! Arrival rates, experiment configuration and sampled market states.

use serde::{Deserialize, Serialize};

use crate::error::{config, input, Result};
use crate::rng::{sample_poisson, streams, StreamKey};

/// Per-type arrival rates: control demand `lambda`, demand lift under
/// treatment `beta`, and supply `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Rates {
    /// Validates shapes and signs.  Control rates may be zero (a type that only
    /// arrives under treatment); supply rates must be positive.
    pub fn new(lambda: Vec<f64>, beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if lambda.len() != beta.len() {
            return Err(input("lambda and beta must have the same length"));
        }
        let nonneg = |name: &str, xs: &[f64]| -> Result<()> {
            match xs.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                Some(k) => Err(input(format!("{name}[{k}] must be finite and >= 0"))),
                None => Ok(()),
            }
        };
        nonneg("lambda", &lambda)?;
        nonneg("beta", &beta)?;
        if let Some(k) = gamma.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(input(format!("gamma[{k}] must be finite and > 0")));
        }
        Ok(Self { lambda, beta, gamma })
    }

    pub fn n_d(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_s(&self) -> usize {
        self.gamma.len()
    }

    /// Total supply rate.
    pub fn total_supply(&self) -> f64 {
        self.gamma.iter().sum()
    }

    /// Demand under global treatment, `lambda + beta`.
    pub fn treated_demand(&self) -> Vec<f64> {
        self.lambda.iter().zip(&self.beta).map(|(l, b)| l + b).collect()
    }

    /// Total demand seen by a cost-excluded experiment, `lambda + rho * beta`.
    pub fn experiment_demand(&self, rho: f64) -> Vec<f64> {
        self.lambda.iter().zip(&self.beta).map(|(l, b)| l + rho * b).collect()
    }

    /// Demand along the treatment path at allocation `eta`.
    pub fn path_demand(&self, eta: f64) -> Vec<f64> {
        self.experiment_demand(eta)
    }

    /// Same supply profile rescaled to a new total.
    pub fn with_total_supply(&self, total: f64) -> Self {
        let f = total / self.total_supply();
        Self { lambda: self.lambda.clone(), beta: self.beta.clone(), gamma: self.gamma.iter().map(|g| g * f).collect() }
    }
}

/// Treatment allocation `rho` and market scale `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub rho: f64,
    pub tau: f64,
}

impl ExperimentConfig {
    pub fn new(rho: f64, tau: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(config("rho", format!("must lie in (0, 1), got {rho}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(config("tau", format!("must be finite and > 0, got {tau}")));
        }
        Ok(Self { rho, tau })
    }
}

/// Demand and supply quantities observed during an experiment.
///
/// Quantities may be counts (a sampled market) or rates (a fluid market).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentState {
    pub control: Vec<f64>,
    pub treated: Vec<f64>,
    pub supply: Vec<f64>,
}

impl ExperimentState {
    /// Pooled demand `control + treated`.
    pub fn pooled(&self) -> Vec<f64> {
        self.control.iter().zip(&self.treated).map(|(c, t)| c + t).collect()
    }

    /// The state this experiment implies at another allocation `eta`: control
    /// demand scaled by `(1 - eta) / (1 - rho)`, treated by `eta / rho`.
    pub fn along_path(&self, rho: f64, eta: f64) -> ExperimentState {
        let fc = (1.0 - eta) / (1.0 - rho);
        let ft = eta / rho;
        ExperimentState {
            control: self.control.iter().map(|x| x * fc).collect(),
            treated: self.treated.iter().map(|x| x * ft).collect(),
            supply: self.supply.clone(),
        }
    }

    /// True when either group has no demand at all.
    pub fn has_empty_group(&self) -> bool {
        self.control.iter().sum::<f64>() == 0.0 || self.treated.iter().sum::<f64>() == 0.0
    }
}

/// Poisson-sampled experiment counts together with the key that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampledState {
    pub control: Vec<u64>,
    pub treated: Vec<u64>,
    pub supply: Vec<u64>,
    #[serde(skip)]
    pub key: StreamKey,
}

impl SampledState {
    pub fn to_state(&self) -> ExperimentState {
        let f = |xs: &[u64]| xs.iter().map(|&x| x as f64).collect();
        ExperimentState { control: f(&self.control), treated: f(&self.treated), supply: f(&self.supply) }
    }
}

fn draw(rates: impl Iterator<Item = f64>, key: &StreamKey, stream: u64) -> Vec<u64> {
    let mut rng = key.rng(stream);
    rates.map(|r| sample_poisson(r, &mut rng)).collect()
}

/// Samples one experiment: control demand `Poisson(tau (1 - rho) lambda)`,
/// treated demand `Poisson(tau rho (lambda + beta))`, supply `Poisson(tau gamma)`.
pub fn sample_state(rates: &Rates, cfg: &ExperimentConfig, key: StreamKey) -> SampledState {
    let (rho, tau) = (cfg.rho, cfg.tau);
    SampledState {
        control: draw(rates.lambda.iter().map(|l| tau * (1.0 - rho) * l), &key, streams::CONTROL),
        treated: draw(rates.lambda.iter().zip(&rates.beta).map(|(l, b)| tau * rho * (l + b)), &key, streams::TREATED),
        supply: draw(rates.gamma.iter().map(|g| tau * g), &key, streams::SUPPLY),
        key,
    }
}

/// Global control and global treatment demand sharing one supply draw.
///
/// Uses the same streams as [`sample_state`] under the same key, so the
/// counterfactual markets are coupled to the experiment through common uniforms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalPair {
    pub control_demand: Vec<u64>,
    pub treated_demand: Vec<u64>,
    pub supply: Vec<u64>,
}

pub fn sample_global_pair(rates: &Rates, tau: f64, key: StreamKey) -> GlobalPair {
    GlobalPair {
        control_demand: draw(rates.lambda.iter().map(|l| tau * l), &key, streams::CONTROL),
        treated_demand: draw(rates.lambda.iter().zip(&rates.beta).map(|(l, b)| tau * (l + b)), &key, streams::TREATED),
        supply: draw(rates.gamma.iter().map(|g| tau * g), &key, streams::SUPPLY),
    }
}

/// Fluid experiment state at unit scale: `((1 - rho) lambda, rho (lambda + beta), gamma)`.
pub fn fluid_state(rates: &Rates, rho: f64) -> ExperimentState {
    ExperimentState {
        control: rates.lambda.iter().map(|l| (1.0 - rho) * l).collect(),
        treated: rates.lambda.iter().zip(&rates.beta).map(|(l, b)| rho * (l + b)).collect(),
        supply: rates.gamma.clone(),
    }
}

/// Splits pooled flows between groups in proportion to each type's demand share.
/// Types with no demand contribute nothing to either group.
pub fn split_flows(flow: &[Vec<f64>], control: &[f64], treated: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut con = Vec::with_capacity(flow.len());
    let mut tre = Vec::with_capacity(flow.len());
    for (i, row) in flow.iter().enumerate() {
        let total = control[i] + treated[i];
        let share = if total > 0.0 { treated[i] / total } else { 0.0 };
        let c_share = if total > 0.0 { control[i] / total } else { 0.0 };
        tre.push(row.iter().map(|x| x * share).collect());
        con.push(row.iter().map(|x| x * c_share).collect());
    }
    (con, tre)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates() -> Rates {
        Rates::new(vec![13.0, 13.0], vec![3.0, 3.0], vec![10.0, 20.0, 5.0]).unwrap()
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = ExperimentConfig::new(0.3, 1.0).unwrap();
        let a = sample_state(&rates(), &cfg, StreamKey::new(4, 1, 2));
        let b = sample_state(&rates(), &cfg, StreamKey::new(4, 1, 2));
        let c = sample_state(&rates(), &cfg, StreamKey::new(4, 1, 3));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_means_track_rates() {
        let r = rates();
        let cfg = ExperimentConfig::new(0.3, 2.0).unwrap();
        let n = 4000;
        let mut sums = [0.0; 3];
        for rep in 0..n {
            let s = sample_state(&r, &cfg, StreamKey::new(1, 0, rep));
            sums[0] += s.control[0] as f64;
            sums[1] += s.treated[1] as f64;
            sums[2] += s.supply[1] as f64;
        }
        let want = [2.0 * 0.7 * 13.0, 2.0 * 0.3 * 16.0, 40.0];
        for k in 0..3 {
            let mean = sums[k] / n as f64;
            let se = (want[k] / n as f64).sqrt();
            assert!((mean - want[k]).abs() < 5.0 * se, "{k}: {mean} vs {}", want[k]);
        }
    }

    #[test]
    fn global_pair_shares_supply_with_experiment() {
        let r = rates();
        let key = StreamKey::new(3, 0, 0);
        let exp = sample_state(&r, &ExperimentConfig::new(0.5, 1.0).unwrap(), key);
        let pair = sample_global_pair(&r, 1.0, key);
        assert_eq!(exp.supply, pair.supply);
        for i in 0..2 {
            assert!(pair.control_demand[i] >= exp.control[i]);
            assert!(pair.treated_demand[i] >= exp.treated[i]);
        }
    }

    #[test]
    fn split_conserves_flow() {
        let flow = vec![vec![1.0, 2.0], vec![0.0, 0.0]];
        let (c, t) = split_flows(&flow, &[1.0, 0.0], &[3.0, 0.0]);
        assert_eq!(c[0], vec![0.25, 0.5]);
        assert_eq!(t[0], vec![0.75, 1.5]);
        assert_eq!(c[1], vec![0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::new(0.0, 1.0).is_err());
        assert!(ExperimentConfig::new(0.5, 0.0).is_err());
        assert!(Rates::new(vec![1.0], vec![1.0], vec![0.0]).is_err());
        assert!(Rates::new(vec![0.0], vec![1.0], vec![1.0]).is_ok());
    }
}
