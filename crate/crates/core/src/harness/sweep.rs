use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{CostSpec, GteSource, SweepConfig};
use super::with_pool;
use crate::error::Result;
use crate::estimators::{estimate_all, gte_fluid, gte_sample, EstimatorKind, MonteCarlo};
use crate::instances::{gen_geometric, rates_with_levels, GeometricInstance, GeometricSpec};
use crate::market::{sample_global_pair, sample_state, ExperimentConfig};
use crate::rng::StreamKey;

/// One estimator evaluated on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub instance_id: u64,
    pub gamma_ratio: f64,
    pub rho: f64,
    pub cost_kind: &'static str,
    pub cost_param: f64,
    pub replication: u64,
    pub estimator: EstimatorKind,
    pub estimate: f64,
    pub gte: f64,
    pub bias: f64,
    pub empty_group_flag: bool,
    pub degenerate_flag: bool,
}

/// Mean and standard error over replications for one instance, cell and estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub instance_id: u64,
    pub gamma_ratio: f64,
    pub rho: f64,
    pub cost_kind: &'static str,
    pub cost_param: f64,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub mean_estimate: f64,
    pub mean_gte: f64,
    pub gte_fluid: f64,
    pub mean_bias: f64,
    pub std_error: Option<f64>,
}

/// Mean and standard error pooled over instances and replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledRow {
    pub gamma_ratio: f64,
    pub rho: f64,
    pub cost_kind: &'static str,
    pub cost_param: f64,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub mean_bias: f64,
    pub std_error: Option<f64>,
    pub mean_abs_bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub pooled: Vec<PooledRow>,
}

struct Cell {
    instance: usize,
    gamma: usize,
    rho: usize,
    cost: usize,
}

fn gte_key(cfg: &SweepConfig, instance: u64, rep: u64, draw: u64) -> StreamKey {
    let seed = if draw == 0 { cfg.seed } else { cfg.seed ^ 0xD1B5_4A32_D192_ED03_u64.wrapping_mul(draw) };
    StreamKey::new(seed, instance, rep)
}

fn run_cell(cfg: &SweepConfig, inst: &GeometricInstance, cell: &Cell) -> Result<(Vec<RunRow>, f64)> {
    let id = inst.spec.index;
    let ratio = cfg.gamma_ratios[cell.gamma];
    let rho = cfg.rhos[cell.rho];
    let spec: CostSpec = cfg.costs[cell.cost];
    let cost = spec.resolve(&inst.instance);
    let rates = rates_with_levels(&inst.instance, cfg.lambda, cfg.beta, ratio)?;
    let exp = ExperimentConfig::new(rho, cfg.tau)?;
    let fluid = gte_fluid(&inst.instance, &rates, cost)?;
    let mut rows = Vec::with_capacity(cfg.n_replications * EstimatorKind::ALL.len());
    for rep in 0..cfg.n_replications as u64 {
        let sampled = sample_state(&rates, &exp, StreamKey::new(cfg.seed, id, rep));
        let state = sampled.to_state();
        let gte = match cfg.gte_source {
            GteSource::Fluid => fluid,
            GteSource::Finite => {
                let draws = (0..cfg.gte_draws as u64)
                    .map(|g| {
                        let pair = sample_global_pair(&rates, cfg.tau, gte_key(cfg, id, rep, g));
                        gte_sample(&inst.instance, cost, &pair, cfg.tau)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                draws.iter().sum::<f64>() / draws.len() as f64
            }
        };
        let empty = state.has_empty_group();
        for (kind, est) in estimate_all(&state, &inst.instance, cost, &exp)? {
            rows.push(RunRow {
                instance_id: id,
                gamma_ratio: ratio,
                rho,
                cost_kind: spec.kind(),
                cost_param: spec.param(),
                replication: rep,
                estimator: kind,
                estimate: est.value,
                gte,
                bias: est.value - gte,
                empty_group_flag: empty,
                degenerate_flag: est.degenerate,
            });
        }
    }
    Ok((rows, fluid))
}

/// Runs every (instance, supply ratio, allocation, cost model) cell.
///
/// Cells run in parallel; rows come back in canonical order, so the output
/// does not depend on the thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let instances = (0..cfg.n_instances as u64)
        .map(|index| gen_geometric(GeometricSpec { n_d: cfg.n_d, n_s: cfg.n_s, seed: cfg.seed, index }))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for instance in 0..cfg.n_instances {
        for gamma in 0..cfg.gamma_ratios.len() {
            for rho in 0..cfg.rhos.len() {
                for cost in 0..cfg.costs.len() {
                    cells.push(Cell { instance, gamma, rho, cost });
                }
            }
        }
    }
    let results: Vec<(Vec<RunRow>, f64)> =
        with_pool(|| cells.par_iter().map(|c| run_cell(cfg, &instances[c.instance], c)).collect::<Result<Vec<_>>>())?;

    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for (rows, fluid) in results {
        for kind in EstimatorKind::ALL {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| r.estimator == kind).collect();
            let first = mine[0];
            let biases: Vec<f64> = mine.iter().map(|r| r.bias).collect();
            let mc = MonteCarlo::from_samples(&biases);
            let n = mine.len() as f64;
            summary.push(SummaryRow {
                instance_id: first.instance_id,
                gamma_ratio: first.gamma_ratio,
                rho: first.rho,
                cost_kind: first.cost_kind,
                cost_param: first.cost_param,
                estimator: kind,
                n: mine.len(),
                mean_estimate: mine.iter().map(|r| r.estimate).sum::<f64>() / n,
                mean_gte: mine.iter().map(|r| r.gte).sum::<f64>() / n,
                gte_fluid: fluid,
                mean_bias: mc.mean,
                std_error: mc.std_error,
            });
        }
        runs.extend(rows);
    }
    let pooled = pool_rows(cfg, &runs);
    Ok(SweepOutput { runs, summary, pooled })
}

fn pool_rows(cfg: &SweepConfig, runs: &[RunRow]) -> Vec<PooledRow> {
    type Key = (usize, usize, usize, EstimatorKind);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let index = |xs: &[f64], x: f64| xs.iter().position(|&y| y == x).expect("value from config");
    let params: Vec<(&str, f64)> = cfg.costs.iter().map(|c| (c.kind(), c.param())).collect();
    for r in runs {
        let cost = params.iter().position(|&(k, p)| k == r.cost_kind && p == r.cost_param).expect("cost from config");
        let key = (index(&cfg.gamma_ratios, r.gamma_ratio), index(&cfg.rhos, r.rho), cost, r.estimator);
        groups.entry(key).or_default().push(r.bias);
    }
    groups
        .into_iter()
        .map(|((g, rho, c, kind), biases)| {
            let mc = MonteCarlo::from_samples(&biases);
            PooledRow {
                gamma_ratio: cfg.gamma_ratios[g],
                rho: cfg.rhos[rho],
                cost_kind: params[c].0,
                cost_param: params[c].1,
                estimator: kind,
                n: biases.len(),
                mean_bias: mc.mean,
                std_error: mc.std_error,
                mean_abs_bias: mc.mean.abs(),
            }
        })
        .collect()
}

/// Missing standard errors are written as this marker.
pub const ABSENT: &str = "NA";

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| ABSENT.to_string(), |v| v.to_string())
}

/// Writes `runs.csv`, `summary.csv` and `pooled.csv` into `dir`.
pub fn write_sweep(out: &SweepOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    for r in &out.runs {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "instance_id",
        "gamma_ratio",
        "rho",
        "cost_kind",
        "cost_param",
        "estimator",
        "n",
        "mean_estimate",
        "mean_gte",
        "gte_fluid",
        "mean_bias",
        "std_error",
    ])?;
    for r in &out.summary {
        w.write_record([
            r.instance_id.to_string(),
            r.gamma_ratio.to_string(),
            r.rho.to_string(),
            r.cost_kind.to_string(),
            r.cost_param.to_string(),
            r.estimator.to_string(),
            r.n.to_string(),
            r.mean_estimate.to_string(),
            r.mean_gte.to_string(),
            r.gte_fluid.to_string(),
            r.mean_bias.to_string(),
            fmt_opt(r.std_error),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("pooled.csv"))?;
    w.write_record([
        "gamma_ratio",
        "rho",
        "cost_kind",
        "cost_param",
        "estimator",
        "n",
        "mean_bias",
        "std_error",
        "mean_abs_bias",
    ])?;
    for r in &out.pooled {
        w.write_record([
            r.gamma_ratio.to_string(),
            r.rho.to_string(),
            r.cost_kind.to_string(),
            r.cost_param.to_string(),
            r.estimator.to_string(),
            r.n.to_string(),
            r.mean_bias.to_string(),
            fmt_opt(r.std_error),
            r.mean_abs_bias.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
