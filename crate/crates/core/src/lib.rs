//! Analysis toolkit for finite quasi-metric measure spaces: regularization,
//! geometric constants, fractional gradients and minimal seminorms, bump and
//! chain constructions, embedding inequalities and geometry recovery.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bumps;
pub mod embeddings;
pub mod error;
pub mod generate;
pub mod geometry;
pub mod gradients;
pub mod recovery;
pub mod regularization;
pub mod report;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
pub use space::{Ball, Distance, PointId, QuasiMetricSpace};
