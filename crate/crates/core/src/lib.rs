//! Adaptive gradient methods (RMSProp-style) viewed as preconditioned SGD.
//!
//! The crate keeps two concerns apart:
//!
//! * **Preconditioned SGD** with an arbitrary preconditioner `A(x)`
//!   ([`optimizer`]), analysed through a handful of scalar constants
//!   ([`preconditioner::PreconditionerConstants`]).
//! * **Online estimation** of the preconditioner from an exponential moving
//!   average of `g gᵀ` ([`preconditioner::EmaEstimator`], [`estimation`]).
//!
//! [`problems`] provides the stochastic test problems, [`linalg`] the dense
//! symmetric-matrix numerics, and [`theory_checks`] computable forms of the
//! inequalities the convergence analysis relies on.

pub mod error;
pub mod estimation;
pub mod linalg;
pub mod optimizer;
pub mod preconditioner;
pub mod problems;
pub mod rng;
pub mod theory_checks;

pub use error::{Error, Result};
pub use linalg::{EigenDecomposition, SymMatrix};
pub use optimizer::{
    BetaMode, HyperParams, LargeStepConfig, PreconditionerSource, RunFailure, RunOptions,
    StationarityReport, StepKind, StepSchedule, Trajectory, TrajectoryRecord,
};
pub use preconditioner::{
    EmaEstimator, Exponent, PreconditionerConstants, PreconditionerKind, PreconditionerVariant,
};
pub use problems::{ProblemSmoothness, StochasticProblem};
pub use rng::{run_rng, RunRng};
pub use theory_checks::InequalityCase;
