//! Constrained derivative-free optimization: MADS with a progressive
//! barrier, the cross-entropy method, and a cross-entropy search step inside
//! MADS, plus a benchmark harness computing data profiles.
//!
//! ```
//! use cemads::{problems, solve, CeSearchConfig, MadsConfig};
//!
//! let spec = problems::spec("BRANIN").unwrap();
//! let cfg = MadsConfig::new(300, 1).with_ce(CeSearchConfig::for_dimension(spec.n));
//! let run = solve(&spec.problem(), &spec.start, &cfg).unwrap();
//! assert!(run.evaluations() <= 300);
//! ```

pub mod bench;
pub mod blackbox;
pub mod cache;
pub mod ce;
pub mod cli;
pub mod error;
pub mod mads;
pub mod mesh;
pub mod problems;
pub mod util;

pub use blackbox::{BoundBox, EvalOutput, EvalStatus, Evaluation, Problem};
pub use cache::{Cache, CacheEntry};
pub use ce::{ce_optimize, CeParams, CeSearchConfig};
pub use error::{Error, Result};
pub use mads::{solve, solve_with, MadsConfig, RunHistory, SearchStep, Source};
pub use mesh::MeshState;
