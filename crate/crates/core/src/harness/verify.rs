use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::with_pool;
use crate::cost::CostModel;
use crate::error::Result;
use crate::estimators::{estimate_fluid, gte_fluid, EstimatorKind};
use crate::fluid::{
    check_ci_top_match, check_sb_unbiased, check_thm_bias_ratio_bound, check_thm_design_unbiasedness,
    check_thm_rct_ce_positive, check_thm_rct_ci_regimes, check_thm_sp_ce_reduction, check_thm_sp_ci,
    rct_ce_positive_report, sp_ce_rho_threshold, TheoremReport,
};
use crate::instances::{
    default_cost_models, default_gamma_ratios, default_rates, gen_geometric, pedagogical, tightness_instance,
    GeometricSpec,
};
use crate::lp::MatchingInstance;
use crate::market::Rates;

/// Deliberate defects used to confirm that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the cost-excluded difference-in-means estimate.
    FlipRctCeSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub n_instances: usize,
    pub rhos: Vec<f64>,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0, n_instances: 50, rhos: vec![0.1, 0.3, 0.5], fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub not_applicable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub summary: VerifySummary,
    pub reports: Vec<TheoremReport>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &TheoremReport> {
        self.reports.iter().filter(|r| !r.ok())
    }
}

fn market_reports(
    instance: &MatchingInstance,
    rates: &Rates,
    costs: &[CostModel],
    rhos: &[f64],
    subject: &str,
    fault: Option<Fault>,
) -> Result<Vec<TheoremReport>> {
    let mut out = Vec::new();
    for &cost in costs {
        let label = format!("{subject} {}={}", cost.kind(), cost.param());
        for &rho in rhos {
            out.push(match fault {
                Some(Fault::FlipRctCeSign) => {
                    let est = estimate_fluid(EstimatorKind::RctCe, instance, rates, cost, rho)?.value;
                    rct_ce_positive_report(-est - gte_fluid(instance, rates, cost)?, rho, &label)
                }
                None => check_thm_rct_ce_positive(instance, rates, cost, rho, &label)?,
            });
            out.push(check_sb_unbiased(instance, rates, cost, rho, &label)?);
            out.push(check_thm_sp_ce_reduction(instance, rates, cost, rho, &label)?);
            out.push(check_thm_bias_ratio_bound(instance, rates, cost, rho, &label)?);
            out.push(check_thm_rct_ci_regimes(instance, rates, cost, rho, &label)?);
            out.push(check_thm_sp_ci(instance, rates, cost, rho, &label)?);
        }
        out.push(check_thm_design_unbiasedness(instance, rates, cost, &label)?);
        out.push(check_ci_top_match(instance, rates, cost, &label)?);
    }
    Ok(out)
}

/// Runs the property suite and returns every report.
pub fn run_suite(opts: &VerifyOptions) -> Result<VerifyReport> {
    let grid = default_gamma_ratios();
    let geometric: Vec<Vec<TheoremReport>> = with_pool(|| {
        (0..opts.n_instances as u64)
            .into_par_iter()
            .map(|index| {
                let g = gen_geometric(GeometricSpec { seed: opts.seed, index, ..Default::default() })?;
                let ratio = grid[index as usize % grid.len()];
                let rates = default_rates(&g.instance, ratio)?;
                let subject = format!("geometric seed={} index={index} gamma_ratio={ratio}", opts.seed);
                market_reports(&g.instance, &rates, &default_cost_models(&g.instance), &opts.rhos, &subject, opts.fault)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut reports: Vec<TheoremReport> = geometric.into_iter().flatten().collect();

    let p = pedagogical();
    for (name, rates) in [("pedagogical panel a", &p.panel_a), ("pedagogical panel b", &p.panel_b)] {
        reports.extend(market_reports(&p.instance, rates, &[p.cost()], &[p.rho], name, opts.fault)?);
    }
    for alpha in [0.05, 0.15, 0.3] {
        let (inst, rates) = tightness_instance(alpha)?;
        let cost = CostModel::Proportional { alpha };
        let rho = sp_ce_rho_threshold(&inst, cost);
        reports.push(check_thm_sp_ce_reduction(&inst, &rates, cost, rho, &format!("tightness alpha={alpha}"))?);
    }

    let failed = reports.iter().filter(|r| !r.ok()).count();
    let not_applicable = reports.iter().filter(|r| !r.applicable).count();
    let total = reports.len();
    Ok(VerifyReport {
        passed: failed == 0,
        summary: VerifySummary { total, passed: total - failed - not_applicable, failed, not_applicable },
        reports,
    })
}

/// Runs the suite with `opts` and writes the JSON report to `out_path`.
pub fn verify_with(opts: &VerifyOptions, out_path: &Path) -> Result<VerifyReport> {
    let report = run_suite(opts)?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out_path, serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Runs the default suite and writes the JSON report to `out_path`.
pub fn verify_theorems(out_path: &Path) -> Result<VerifyReport> {
    verify_with(&VerifyOptions::default(), out_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_and_fault_is_caught() {
        let opts = VerifyOptions { n_instances: 2, rhos: vec![0.3], ..Default::default() };
        let good = run_suite(&opts).unwrap();
        let failures: Vec<_> = good.failures().collect();
        assert!(good.passed, "{failures:#?}");
        let bad = run_suite(&VerifyOptions { fault: Some(Fault::FlipRctCeSign), ..opts }).unwrap();
        assert!(!bad.passed);
        let f = bad.failures().next().unwrap();
        assert_eq!(f.property, "rct_ce_nonnegative_bias");
        assert!(f.witnesses["rct_ce_bias"] < 0.0);
    }
}
