//! Input-to-state stability of identified models: assembly of the matrix
//! inequalities, a self-contained feasibility engine, and a numerical audit
//! of the resulting certificate through its Lyapunov function.

mod certificate;
mod lmi;
mod lyapunov;
mod solver;

use thiserror::Error;

use crate::matlib::LinalgError;

pub use certificate::{certify, compute_margins, IssCertificate, Margin, UpsilonEntry};
pub use lmi::{
    assemble, assemble_extended, assemble_plain, AffineSym, ConstraintKind, ExtendedOptions,
    LmiConstraint, LmiPath, LmiProblem, LmiStructure, LmiValues, VarBlock, Variable,
};
pub use lyapunov::{
    check_certificate, gradient_check, sample_states, CheckReport, DerivativeTerms, GradientReport,
    LyapunovEvaluator, Witness, GRADIENT_TOLERANCE, IDENTITY_TOLERANCE,
};
pub use solver::{solve, solve_feasibility, Solution, SolverDiagnostics, SolverOptions, Verdict};

#[derive(Debug, Error)]
pub enum IssError {
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("malformed certificate: {0}")]
    Format(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
