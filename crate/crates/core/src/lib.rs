//! Richardson-extrapolated Gaussian kernel density estimation.
//!
//! A single-bandwidth Gaussian KDE has pointwise bias of order `h^2`. Combining
//! `r` estimates taken at distinct bandwidths `h_1 < ... < h_r` with signed
//! weights `c` that satisfy
//!
//! ```text
//! sum_i c_i = 1,    sum_i c_i h_i^(2j) = 0   for j = 1..r-1
//! ```
//!
//! cancels the bias terms through `h^(2r-2)`. The weights are computed from the
//! Lagrange closed form `c_i = prod_{j != i} -h_j^2 / (h_i^2 - h_j^2)`, which
//! avoids inverting the ill-conditioned Vandermonde system in `h^2`.
//!
//! Modules:
//!
//! * [`kernel`] - samples, evaluation grids, and the base estimator.
//! * [`extrapolation`] - bandwidth sets, weights, and the combined estimator.
//! * [`selection`] - optimal bandwidth and extrapolation order (Lambert W).
//! * [`reference`] - Gaussian reference densities with seeded samplers.
//! * [`analysis`] - Monte Carlo bias/variance/MSE, risk matrices, rate fits.
//! * [`cli`] - the `richkde` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
mod error;
pub mod extrapolation;
pub mod kernel;
pub mod matrix;
pub mod reference;
pub mod selection;

pub use error::{Error, Result};
pub use extrapolation::{BandwidthSet, ExtrapolatedEstimator, WeightVector};
pub use kernel::{EvaluationGrid, Sample};
pub use matrix::SquareMatrix;
pub use reference::ReferenceDistribution;
