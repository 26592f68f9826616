//! Experiment harness: seeded sweeps, figure data and the property suite.
//!
//! Parallel sections run on a rayon pool sized by the `MATCHLAB_THREADS`
//! environment variable (default: all cores).  Outputs are assembled in a fixed
//! order, so files are byte-identical for any thread count.

pub mod config;
pub mod figures;
pub mod sweep;
pub mod verify;

pub use config::{CostSpec, GteSource, SweepConfig};
pub use figures::{reproduce_figures, FIGURE_KEYS};
pub use sweep::{run_sweep, write_sweep, PooledRow, RunRow, SummaryRow, SweepOutput};
pub use verify::{verify_theorems, verify_with, Fault, VerifyOptions, VerifyReport};

/// Environment variable that sets the worker count.
pub const THREADS_ENV: &str = "MATCHLAB_THREADS";

pub(crate) fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse::<usize>().ok());
    match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}
