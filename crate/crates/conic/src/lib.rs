//! A small dense conic solver for linear, second-order and semidefinite
//! programs, with a modelling layer that lowers quadratic constraints to
//! second-order cones and complex Hermitian variables to real embeddings.
//!
//! ```
//! use nalgebra::DMatrix;
//! use surveil_conic::{ConicProblem, SolverSettings};
//!
//! // smallest eigenvalue of diag(2, 1) as an SDP
//! let mut p = ConicProblem::new();
//! let x = p.add_psd("X", 2).unwrap();
//! let c = DMatrix::from_diagonal(&nalgebra::dvector![2.0, 1.0]);
//! p.minimize(p.trace_with(x, &c).unwrap()).unwrap();
//! p.add_eq(p.trace(x).unwrap() - 1.0).unwrap();
//! let sol = p.solve(&SolverSettings::default());
//! assert!(sol.is_optimal());
//! assert!((sol.objective - 1.0).abs() < 1e-6);
//! ```

mod cone;
mod dump;
mod embed;
mod error;
mod ipm;
mod problem;

pub use cone::{smat, svec, svec_index, svec_len};
pub use embed::{hermitian_embed, hermitian_unembed};
pub use error::ConicError;
pub use ipm::{SolveStatus, SolverSettings};
pub use problem::{BlockShape, ConicProblem, ConicSolution, LinExpr, VarId};
