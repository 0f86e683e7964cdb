//! SMT-LIB encoding of deployment problems and the external solver driver.

pub mod driver;
pub mod encoder;

pub use driver::{solve, SolveStatus, SolverConfig, SolverOutcome, DEFAULT_SOLVER, SOLVER_ENV};
pub use encoder::{encode, heaviside_indicator, SmtScript, SoftConstraint, SoftTerm, VarIndex};
