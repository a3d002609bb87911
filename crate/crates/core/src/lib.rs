//! Finite-element toolkit for optimal control of quasilinear elliptic
//! equations whose coefficient has a kink at one state value.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::should_implement_trait
)]

pub mod curvature;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod green;
pub mod levelset;
pub mod mesh;
pub mod optimize;
pub mod pde;
pub mod real;
pub mod sparse;

pub use error::{Error, Result};
pub use real::Real;

pub type Mesh = mesh::TriMesh<f64>;
pub type Field = mesh::NodalField<f64>;
pub type Domain = mesh::PolygonDomain<f64>;
pub type Matrix = sparse::CsrMatrix<f64>;
