//! Jacobi fields as a symplectic vector space: interval indices of Lagrangian
//! subspaces, the transverse reduction by an isotropic subspace, and index and
//! dimension bounds evaluated on model geometries.

pub mod certificate;
pub mod error;
pub mod field;
pub mod index;
pub mod linalg;
pub mod models;
pub mod ode;
pub mod system;
pub mod transverse;
pub mod verdict;

pub use error::{Error, ErrorClass, Result};
pub use field::{
    intersection_dimension, symplectic_form, vanishing_lagrangian, vanishing_lagrangian_of, FieldSubspace,
    FieldVector, IsotropyWitness, SubspaceKind,
};
pub use ode::{parallel_frame, DenseMode, FundamentalSolution, ParallelFrame, SpanPath, SubspacePath, Tolerances};
pub use system::{CurvatureKind, JacobiSystem};
pub use certificate::rate_certificate;
pub use index::{
    conjugate_radius, first_conjugate_time, index_at_time, index_on_interval, verify_inequality,
    verify_span_property, zero_times, Inequality, IndexReport, IntervalSpec, ScanOptions, ZeroTime,
};
pub use verdict::VerdictRecord;
pub use transverse::{a_operator, horizontal_frame, wbar_basis, AOperator, TransverseSystem};
