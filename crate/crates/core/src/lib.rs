//! Component-to-VM deployment planning.
//!
//! Problems are compiled to SMT-LIB optimization scripts and solved by an
//! external solver. A relational GCN trained on solved instances can add
//! soft constraints that steer the solver toward likely placements.

pub mod bench;
pub mod cases;
pub mod dataset;
pub mod error;
pub mod gnn;
pub mod hetgraph;
pub mod model;
pub mod oracle;
pub mod price;
pub mod refine;
pub mod sexpr;
pub mod smt;

pub use cases::{case_study, catalog_cloud20, catalog_droplet27, synthetic_catalog, CaseStudy};
pub use error::{Error, Result};
pub use model::{
    validate, Application, Bound, BoundKind, BoundOp, Component, Constraint, DeploymentProblem, GroupBound,
    HardwareVector, RequireProvide, RequireProvideForm, Resource, Solution, Violation, VmOffer,
};
pub use oracle::{brute_force, OracleCaps};
pub use price::Price;
