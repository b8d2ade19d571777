//! Physics-constrained convolutional solver for steady PDEs on irregular 2-D
//! domains.
//!
//! An irregular physical domain is mapped onto a uniform reference rectangle
//! by an elliptic coordinate transformation ([`meshgen`]). PDE residuals are
//! rewritten on that rectangle with metric-weighted finite-difference
//! operators ([`stencil`]), boundary conditions are imposed exactly on every
//! forward pass ([`bcpad`]), and a small per-variable convolutional network
//! ([`model`]) is trained to drive the residual loss ([`physics`]) to zero
//! without any labelled data. A classical finite-difference solver
//! ([`oracle`]) provides reference solutions for checking the result.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcpad;
pub mod cases;
pub mod error;
pub mod fieldio;
pub mod gpfield;
pub mod grid;
pub mod meshgen;
pub mod model;
pub mod oracle;
pub mod physics;
pub mod stencil;
pub mod tape;

pub use error::{Error, Result};
pub use grid::{Edge, GridField, NodeClass, ReferenceGrid};
pub use meshgen::{BoundaryCurves, CurvilinearMesh, TransformMetrics};
