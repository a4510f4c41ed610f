//! Random key graphs intersected with Erdős–Rényi graphs: exact isolated-node
//! analytics, seeded Monte Carlo sampling, brute-force enumeration on tiny
//! instances, and the experiment harness behind the `keygraph-lab` CLI.
//!
//! Module map:
//!
//! * [`keymath`]: key-ring probabilities `v(θ; r)`, `q(θ)`, `p(θ, α)`, the
//!   two-ring overlap law and the `Ψ` function.
//! * [`graphgen`]: seeded sampling of key rings, the on/off channel overlay
//!   and their intersection; parallel trial runner.
//! * [`moments`]: closed-form first and second moments of the isolated-node
//!   count, the moment-method bounds on `P(I = 0)` and the `R` bound chain.
//! * [`scaling`]: integer dimensioning of `(K, P)` against critical scalings
//!   and finite-n regime diagnostics.
//! * [`oracle`]: exhaustive enumeration of the law of `I` on tiny instances.
//! * [`harness`]: configuration, sweeps and CSV/JSON emission for the CLI.

pub mod error;
pub mod format;
pub mod graphgen;
pub mod harness;
pub mod keymath;
pub mod moments;
pub mod oracle;
pub mod scaling;
pub mod summation;

pub use error::{Error, Result};
pub use graphgen::{GraphSample, ModelParams, RngSpec, TrialSummary};
pub use keymath::{EdgeProb, LogProb, Theta};
pub use moments::MomentReport;
pub use oracle::ExactResult;
pub use scaling::{DeviationSpec, ScalingSchedule};
