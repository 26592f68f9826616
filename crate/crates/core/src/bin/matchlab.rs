use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use matchlab::cost::CostModel;
use matchlab::harness::{reproduce_figures, run_sweep, verify_theorems, write_sweep, SweepConfig};
use matchlab::instances::{gen_geometric, pedagogical, GeometricSpec, InstanceFile, InstanceMeta};
use matchlab::lp::{solve_ce, solve_ci, verify_kkt, CeProblem, CiProblem, MatchOutcome, Violation};

#[derive(Parser)]
#[command(name = "matchlab", version, about = "Estimator bias experiments on matching marketplaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit an instance as JSON.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value_t = 10)]
        n_d: usize,
        #[arg(long, default_value_t = 10)]
        n_s: usize,
        /// Emit the one-demand-type walkthrough market instead.
        #[arg(long)]
        pedagogical: bool,
        /// Output file (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one matching LP described by a JSON request and print primal and dual.
    Solve {
        /// Request file (stdin if absent).
        input: Option<PathBuf>,
    },
    /// Run a finite-sample sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write plot-ready CSVs for one figure key or `all`.
    Figures {
        #[arg(long, default_value = "all")]
        which: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the property suite and write a JSON report; exits 1 on any failure.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
}

/// `{"design": "ce", "instance": {...}, "demand": [...], "supply": [...]}` or
/// `{"design": "ci", "instance": {...}, "cost": {...}, "control": [...], "treated": [...], "supply": [...]}`.
#[derive(Deserialize)]
#[serde(tag = "design", rename_all = "lowercase", deny_unknown_fields)]
enum SolveRequest {
    Ce { instance: InstanceFile, demand: Vec<f64>, supply: Vec<f64> },
    Ci { instance: InstanceFile, cost: CostModel, control: Vec<f64>, treated: Vec<f64>, supply: Vec<f64> },
}

#[derive(Serialize)]
struct SolveResponse<'a> {
    outcome: &'a MatchOutcome,
    kkt_violations: Vec<Violation>,
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen { seed, index, n_d, n_s, pedagogical: walkthrough, out } => {
            let file = if walkthrough {
                let p = pedagogical();
                InstanceFile {
                    n_d: 1,
                    n_s: 3,
                    v: p.instance.values().to_vec(),
                    meta: InstanceMeta { seed: 0, index: None, locations: None },
                }
            } else {
                gen_geometric(GeometricSpec { n_d, n_s, seed, index })?.to_file()
            };
            emit(&serde_json::to_string_pretty(&file)?, out.as_ref())?;
        }
        Command::Solve { input } => {
            let text = match &input {
                Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
                None => std::io::read_to_string(std::io::stdin())?,
            };
            let req: SolveRequest = serde_json::from_str(&text).context("parsing solve request")?;
            let (outcome, kkt) = match req {
                SolveRequest::Ce { instance, demand, supply } => {
                    let instance = instance.instance()?;
                    let p = CeProblem { instance: &instance, demand: &demand, supply: &supply };
                    let o = solve_ce(&p)?;
                    let k = verify_kkt(&p, &o).err().unwrap_or_default();
                    (o, k)
                }
                SolveRequest::Ci { instance, cost, control, treated, supply } => {
                    let instance = instance.instance()?;
                    let p =
                        CiProblem { instance: &instance, cost, control: &control, treated: &treated, supply: &supply };
                    let o = solve_ci(&p)?;
                    let k = verify_kkt(&p, &o).err().unwrap_or_default();
                    (o, k)
                }
            };
            let ok = kkt.is_empty();
            emit(&serde_json::to_string_pretty(&SolveResponse { outcome: &outcome, kkt_violations: kkt })?, None)?;
            return Ok(ok);
        }
        Command::Sweep { config, out } => {
            let text =
                std::fs::read_to_string(&config).with_context(|| format!("reading config {}", config.display()))?;
            let cfg = SweepConfig::from_json(&text)?;
            let result = run_sweep(&cfg)?;
            write_sweep(&result, &out)?;
            eprintln!("wrote {} rows to {}", result.runs.len(), out.display());
        }
        Command::Figures { which, out } => {
            for f in reproduce_figures(&which, &out)? {
                println!("{}", f.display());
            }
        }
        Command::Verify { out } => {
            let report = verify_theorems(&out)?;
            let s = &report.summary;
            eprintln!(
                "{} checks: {} passed, {} failed, {} not applicable",
                s.total, s.passed, s.failed, s.not_applicable
            );
            for f in report.failures() {
                eprintln!("FAILED {} on {}", f.property, f.subject);
            }
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
