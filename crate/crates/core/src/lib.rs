//! Elastic Calderón problem for resonant inclusion clusters: kernels,
//! quadrature, layer and volume operators, the effective-medium model,
//! Foldy–Lax solves, Neumann-to-Dirichlet maps, linearized inversion and
//! CGO reconstruction.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cgo;
pub mod error;
pub mod experiment;
pub mod foldy_lax;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod linearization;
pub mod nd_maps;
pub mod norms;
pub mod operators;
pub mod resonance;
pub mod sphere;
pub mod vec3;

pub use error::{EclError, Result};
pub use geometry::{ClusterGeometry, Domain, QuadratureRule, ShapeB};
pub use kernels::{ElasticBackground, Tensor3, Waves};
pub use num_complex::Complex64 as C64;
