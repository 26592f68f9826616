//! Data behind each figure, written as one or more CSV files per key.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{CostSpec, GteSource, SweepConfig};
use super::sweep::{run_sweep, SweepOutput};
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::estimators::{estimate_fluid, gte_fluid, EstimatorKind};
use crate::fluid::{check_thm_bias_ratio_bound, path_profile, sp_ce_rho_threshold, tightness_study};
use crate::instances::{
    default_gamma_ratios, default_rates, gamma_ratio_grid, gen_geometric, pedagogical, GeometricSpec,
};
use crate::lp::{solve_ce, CeProblem};
use crate::market::Rates;

/// Every figure key accepted by [`reproduce_figures`], in output order.
pub const FIGURE_KEYS: [&str; 10] =
    ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig_bias", "fig_reduction", "fig_thm3", "fig_thm4"];

const GRID: usize = 201;

fn write_rows<T: Serialize>(path: PathBuf, rows: &[T]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path)
}

fn unit_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| k as f64 / (n - 1) as f64)
}

fn panels() -> [(&'static str, Rates); 2] {
    let p = pedagogical();
    [("a", p.panel_a), ("b", p.panel_b)]
}

#[derive(Serialize)]
struct ValueRow {
    demand: f64,
    value: f64,
    marginal_value: f64,
}

/// Matching value of the walkthrough market as a function of total demand.
/// The grid includes every cumulative supply level, where the curve kinks.
fn value_curve(dir: &Path) -> Result<Vec<PathBuf>> {
    let p = pedagogical();
    let supply = &p.panel_a.gamma;
    let top = 1.25 * supply.iter().sum::<f64>();
    let kinks: Vec<f64> = supply
        .iter()
        .scan(0.0, |acc, g| {
            *acc += g;
            Some(*acc)
        })
        .collect();
    let mut grid: Vec<f64> =
        (0..GRID).map(|k| top * k as f64 / (GRID - 1) as f64).chain(kinks.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let point = |demand: f64| -> Result<ValueRow> {
        let out = solve_ce(&CeProblem { instance: &p.instance, demand: &[demand], supply })?;
        Ok(ValueRow { demand, value: out.objective, marginal_value: out.demand_duals()[0] })
    };
    let rows = grid.into_iter().map(point).collect::<Result<Vec<_>>>()?;
    let corners = kinks.into_iter().map(point).collect::<Result<Vec<_>>>()?;
    Ok(vec![write_rows(dir.join("fig2_value.csv"), &rows)?, write_rows(dir.join("fig2_breakpoints.csv"), &corners)?])
}

#[derive(Serialize)]
struct PathRow {
    panel: &'static str,
    eta: f64,
    value: f64,
    control_value: f64,
    treated_value: f64,
    left_slope: f64,
    right_slope: f64,
}

#[derive(Serialize)]
struct BreakpointRow {
    panel: &'static str,
    breakpoint: f64,
}

fn path_panels(dir: &Path, stem: &str, with_breakpoints: bool) -> Result<Vec<PathBuf>> {
    let p = pedagogical();
    let mut rows = Vec::new();
    let mut kinks = Vec::new();
    for (panel, rates) in panels() {
        let prof = path_profile(&p.instance, &rates, p.cost(), GRID)?;
        for k in 0..prof.eta.len() {
            rows.push(PathRow {
                panel,
                eta: prof.eta[k],
                value: prof.value[k],
                control_value: prof.control_value[k],
                treated_value: prof.treated_value[k],
                left_slope: prof.left_slope[k],
                right_slope: prof.right_slope[k],
            });
        }
        kinks.extend(prof.breakpoints.iter().map(|&breakpoint| BreakpointRow { panel, breakpoint }));
    }
    let mut files = vec![write_rows(dir.join(format!("{stem}_path.csv")), &rows)?];
    if with_breakpoints {
        files.push(write_rows(dir.join(format!("{stem}_breakpoints.csv")), &kinks)?);
    }
    Ok(files)
}

#[derive(Serialize)]
struct EstimatorRow {
    panel: &'static str,
    rho: f64,
    estimator: EstimatorKind,
    estimate: f64,
    gte: f64,
    bias: f64,
}

fn estimator_lines(dir: &Path, file: &str, kinds: &[EstimatorKind]) -> Result<Vec<PathBuf>> {
    let p = pedagogical();
    let mut rows = Vec::new();
    for (panel, rates) in panels() {
        let gte = gte_fluid(&p.instance, &rates, p.cost())?;
        for k in 1..20 {
            let rho = k as f64 / 20.0;
            for &kind in kinds {
                let estimate = estimate_fluid(kind, &p.instance, &rates, p.cost(), rho)?.value;
                rows.push(EstimatorRow { panel, rho, estimator: kind, estimate, gte, bias: estimate - gte });
            }
        }
    }
    Ok(vec![write_rows(dir.join(file), &rows)?])
}

#[derive(Serialize)]
struct CePathRow {
    panel: &'static str,
    eta: f64,
    value: f64,
    tangent: f64,
}

/// Cost-excluded path value with the tangent used by the shadow-price
/// estimator at the walkthrough allocation.
fn tangents(dir: &Path) -> Result<Vec<PathBuf>> {
    let p = pedagogical();
    let mut rows = Vec::new();
    for (panel, rates) in panels() {
        let at = |eta: f64| -> Result<f64> {
            Ok(solve_ce(&CeProblem { instance: &p.instance, demand: &rates.path_demand(eta), supply: &rates.gamma })?
                .objective)
        };
        let anchor = at(p.rho)?;
        let slope = estimate_fluid(EstimatorKind::SpCe, &p.instance, &rates, p.cost(), p.rho)?.value;
        for eta in unit_grid(GRID) {
            rows.push(CePathRow { panel, eta, value: at(eta)?, tangent: anchor + slope * (eta - p.rho) });
        }
    }
    let mut files = vec![write_rows(dir.join("fig5_path.csv"), &rows)?];
    files.extend(estimator_lines(dir, "fig5_estimators.csv", &[EstimatorKind::SpCe, EstimatorKind::RctCe])?);
    Ok(files)
}

fn desk_sweep() -> Result<SweepOutput> {
    run_sweep(&SweepConfig {
        n_instances: 10,
        n_replications: 10,
        gamma_ratios: gamma_ratio_grid(0.3, 3.0, 10),
        rhos: vec![0.3],
        costs: vec![CostSpec::Proportional { alpha: 0.10 }, CostSpec::Fixed { kappa_fraction: 0.3 }],
        gte_source: GteSource::Finite,
        ..SweepConfig::default()
    })
}

#[derive(Serialize)]
struct ReductionRow {
    gamma_ratio: f64,
    cost_kind: &'static str,
    cost_param: f64,
    design: &'static str,
    shadow_price_abs_bias: f64,
    difference_in_means_abs_bias: f64,
    ratio: f64,
}

fn reduction(out: &SweepOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::new();
    for sp in out.pooled.iter().filter(|r| matches!(r.estimator, EstimatorKind::SpCe | EstimatorKind::SpCi)) {
        let (partner, design) = match sp.estimator {
            EstimatorKind::SpCe => (EstimatorKind::RctCe, "cost_excluded"),
            _ => (EstimatorKind::RctCi, "cost_included"),
        };
        let rct = out
            .pooled
            .iter()
            .find(|r| {
                r.estimator == partner
                    && r.gamma_ratio == sp.gamma_ratio
                    && r.rho == sp.rho
                    && r.cost_kind == sp.cost_kind
                    && r.cost_param == sp.cost_param
            })
            .expect("pooled rows cover every estimator");
        rows.push(ReductionRow {
            gamma_ratio: sp.gamma_ratio,
            cost_kind: sp.cost_kind,
            cost_param: sp.cost_param,
            design,
            shadow_price_abs_bias: sp.mean_abs_bias,
            difference_in_means_abs_bias: rct.mean_abs_bias,
            ratio: sp.mean_abs_bias / rct.mean_abs_bias,
        });
    }
    Ok(vec![write_rows(dir.join("fig_reduction.csv"), &rows)?])
}

fn bias_curves(out: &SweepOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    #[derive(Serialize)]
    struct Row<'a> {
        gamma_ratio: f64,
        rho: f64,
        cost_kind: &'a str,
        cost_param: f64,
        estimator: EstimatorKind,
        n: usize,
        mean_bias: f64,
        std_error: f64,
    }
    let rows: Vec<Row> = out
        .pooled
        .iter()
        .map(|r| Row {
            gamma_ratio: r.gamma_ratio,
            rho: r.rho,
            cost_kind: r.cost_kind,
            cost_param: r.cost_param,
            estimator: r.estimator,
            n: r.n,
            mean_bias: r.mean_bias,
            std_error: r.std_error.unwrap_or(f64::NAN),
        })
        .collect();
    Ok(vec![write_rows(dir.join("fig_bias.csv"), &rows)?])
}

#[derive(Serialize)]
struct ThresholdRow {
    cost_kind: &'static str,
    cost_size: f64,
    rho: f64,
    threshold: f64,
    sp_ce_bias: f64,
    rct_ce_bias: f64,
}

/// Both cost-excluded biases across allocations on the one-type tightness market.
fn threshold_study(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::new();
    for (kind, fixed) in [("proportional", false), ("fixed", true)] {
        for size in [0.05, 0.15, 0.3] {
            for rho in unit_grid(101).filter(|r| *r > 0.0 && *r < 1.0) {
                let t = tightness_study(size, fixed, rho)?;
                rows.push(ThresholdRow {
                    cost_kind: kind,
                    cost_size: size,
                    rho,
                    threshold: t.limit,
                    sp_ce_bias: t.sp_ce_bias,
                    rct_ce_bias: t.rct_ce_bias,
                });
            }
        }
    }
    Ok(vec![write_rows(dir.join("fig_thm3.csv"), &rows)?])
}

#[derive(Serialize)]
struct RatioRow {
    instance_id: u64,
    gamma_ratio: f64,
    cost_kind: &'static str,
    cost_param: f64,
    rho: f64,
    rho_threshold: f64,
    bound: f64,
    realized_ratio: f64,
}

/// Bias-ratio bound against the realized ratio on geometric markets.
fn ratio_bound(dir: &Path) -> Result<Vec<PathBuf>> {
    let grid = default_gamma_ratios();
    let mut rows = Vec::new();
    for index in 0..10u64 {
        let g = gen_geometric(GeometricSpec { index, ..Default::default() })?;
        for &ratio in grid.iter().step_by(3) {
            let rates = default_rates(&g.instance, ratio)?;
            for cost in
                [CostModel::Proportional { alpha: 0.10 }, CostModel::Fixed { kappa: 0.3 * g.instance.min_value() }]
            {
                for rho in [0.1, 0.3, 0.5] {
                    let rep = check_thm_bias_ratio_bound(&g.instance, &rates, cost, rho, "")?;
                    if !rep.applicable {
                        continue;
                    }
                    rows.push(RatioRow {
                        instance_id: index,
                        gamma_ratio: ratio,
                        cost_kind: cost.kind(),
                        cost_param: cost.param(),
                        rho,
                        rho_threshold: sp_ce_rho_threshold(&g.instance, cost),
                        bound: rep.witnesses["bound"],
                        realized_ratio: rep.witnesses["realized_ratio"],
                    });
                }
            }
        }
    }
    Ok(vec![write_rows(dir.join("fig_thm4.csv"), &rows)?])
}

/// Writes the data for `which` (a key from [`FIGURE_KEYS`] or `"all"`) into
/// `out_dir` and returns the files written.
pub fn reproduce_figures(which: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let keys: Vec<&str> = if which == "all" {
        FIGURE_KEYS.to_vec()
    } else if FIGURE_KEYS.contains(&which) {
        vec![which]
    } else {
        return Err(Error::UnknownFigure(which.into()));
    };
    std::fs::create_dir_all(out_dir)?;
    let mut sweep: Option<SweepOutput> = None;
    let mut files = Vec::new();
    for key in keys {
        if matches!(key, "fig_bias" | "fig_reduction") && sweep.is_none() {
            sweep = Some(desk_sweep()?);
        }
        files.extend(match key {
            "fig2" => value_curve(out_dir)?,
            "fig3" => path_panels(out_dir, "fig3", false)?,
            "fig4" => estimator_lines(out_dir, "fig4.csv", &[EstimatorKind::RctCe])?,
            "fig5" => tangents(out_dir)?,
            "fig6" => path_panels(out_dir, "fig6", true)?,
            "fig7" => estimator_lines(out_dir, "fig7.csv", &[EstimatorKind::SpCi, EstimatorKind::RctCi])?,
            "fig_bias" => bias_curves(sweep.as_ref().expect("computed above"), out_dir)?,
            "fig_reduction" => reduction(sweep.as_ref().expect("computed above"), out_dir)?,
            "fig_thm3" => threshold_study(out_dir)?,
            "fig_thm4" => ratio_bound(out_dir)?,
            _ => unreachable!("key checked against FIGURE_KEYS"),
        });
    }
    Ok(files)
}
