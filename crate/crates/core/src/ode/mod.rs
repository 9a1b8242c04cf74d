//! Adaptive integration of the matrix Jacobi equation and of frame transport.

pub mod dop853;
pub mod flow;
pub mod frame;

pub use dop853::{DenseMode, MatrixRhs, Tolerances, Trajectory};
pub use flow::FundamentalSolution;
pub use frame::{parallel_frame, ParallelFrame, SpanPath, SubspacePath};
