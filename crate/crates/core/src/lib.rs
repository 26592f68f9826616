//! Bias of treatment-effect estimators in matching marketplaces.
//!
//! A marketplace is a bipartite set of demand and supply types with a value
//! per pair.  Matching is a linear program whose shadow prices drive the
//! shadow-price estimators; the difference-in-means estimators use realized
//! match values instead.  The crate covers:
//!
//! - [`lp`]: the matching LP with primal, duals, degeneracy flags and a KKT checker.
//! - [`cost`]: intervention cost models and their effect on weights and duals.
//! - [`market`] and [`rng`]: seeded Poisson marketplaces and experiment splits.
//! - [`estimators`]: five estimators, finite and large-market forms, and the global effect.
//! - [`fluid`]: path profiles, supply regimes and structural property checks.
//! - [`instances`]: geometric and hand-built markets.
//! - [`harness`]: parallel sweeps, figure data and the verification suite.
//!
//! Runnable walkthroughs live in `examples/`:
//! `solve_matching`, `cost_models`, `sample_marketplace`,
//! `pedagogical_estimators`, `path_profile`, `theorem_checks`,
//! `finite_sample_sweep` and `reproduce_figures`.

pub mod cost;
pub mod error;
pub mod estimators;
pub mod fluid;
pub mod harness;
pub mod instances;
pub mod lp;
pub mod market;
pub mod rng;

pub use error::{Error, Result};
