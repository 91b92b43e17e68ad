//! Generalized periods of Laplace eigenfunctions along closed geodesics and
//! geodesic circles, computed through explicit models of the principal series
//! of PGL(2,R).

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Reference constants keep the digits they were computed with.
#![allow(clippy::excessive_precision)]

pub mod error;
pub mod eigen;
pub mod hypgeom;
pub mod io;
pub mod modelrep;
pub mod periods;
pub mod quad;
pub mod specfun;
pub mod verify;

pub use error::{Error, Result};
