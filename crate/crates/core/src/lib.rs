//! Analysis of a multiclass single-server queue whose arrival rates depend
//! on the class of the job currently in service.
//!
//! The crate is organised around one validated [`Model`]:
//!
//! - [`model`]: queue description, mean offspring matrix, Perron root and
//!   the stability verdict.
//! - [`fluid`]: exact piecewise-linear fluid trajectories, the Lyapunov drain
//!   time and weak-instability witnesses.
//! - [`branching`]: the multitype Galton–Watson view of a busy period, closed
//!   form expectations and heavy-tail constants.
//! - [`lst`]: the busy-period Laplace–Stieltjes transform fixed point.
//! - [`sim`]: an event-driven simulator of the queue itself.
//!
//! Every stochastic routine takes an explicit seed; replication `r` draws from
//! its own ChaCha stream so results do not depend on thread count.

pub mod branching;
pub mod error;
pub mod fluid;
pub mod lst;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    Model, ModelSpec, OffspringMatrix, ServiceDistribution, StabilityReport, Verdict,
    Violation,
};
