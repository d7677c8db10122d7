//! Gaussian kernel and the single-bandwidth density estimator
//!
//! `p(x) = 1/(n h^d) * sum_i K((x - X_i) / h)` with
//! `K(u) = exp(-|u|^2 / 2) / (2 pi)^(d/2)`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Exponent beyond which a kernel term is flushed to exactly zero.
const UNDERFLOW_EXPONENT: f64 = 700.0;

/// An `n x d` matrix of finite observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    dim: usize,
}

impl Sample {
    /// Builds a sample from row-major data with `dim` columns.
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        let data = check_matrix(data, dim, "sample")?;
        Ok(Self { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let (data, dim) = flatten_rows(rows, "sample")?;
        Self::new(data, dim)
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false; a sample holds at least one row.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Query points at which an estimator is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    points: Vec<f64>,
    dim: usize,
}

impl EvaluationGrid {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        let points = check_matrix(points, dim, "grid")?;
        Ok(Self { points, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let (data, dim) = flatten_rows(rows, "grid")?;
        Self::new(data, dim)
    }

    /// A one-dimensional grid.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }
}

fn check_matrix(data: Vec<f64>, dim: usize, what: &str) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(invalid(format!("{what} dimension must be at least 1")));
    }
    if data.is_empty() {
        return Err(invalid(format!("{what} must contain at least one row")));
    }
    if !data.len().is_multiple_of(dim) {
        return Err(invalid(format!(
            "{what} data length {} is not a multiple of dimension {dim}",
            data.len()
        )));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!(
            "{what} entry at row {}, column {} is not finite",
            pos / dim,
            pos % dim
        )));
    }
    Ok(data)
}

fn flatten_rows<R: AsRef<[f64]>>(rows: &[R], what: &str) -> Result<(Vec<f64>, usize)> {
    let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let mut data = Vec::with_capacity(rows.len() * dim);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(invalid(format!(
                "{what} row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
        data.extend_from_slice(row);
    }
    Ok((data, dim))
}

/// `(2 pi)^(-d/2)`.
pub(crate) fn gaussian_normalizer(dim: usize) -> f64 {
    (2.0 * PI).powf(-(dim as f64) / 2.0)
}

/// Standard Gaussian kernel `exp(-|u|^2/2) / (2 pi)^(d/2)`.
pub fn gaussian_kernel(u: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || u.len() != dim {
        return Err(invalid(format!(
            "kernel argument has length {}, expected dimension {dim}",
            u.len()
        )));
    }
    let half_sq = 0.5 * u.iter().map(|v| v * v).sum::<f64>();
    Ok(gaussian_normalizer(dim) * unnormalized(half_sq))
}

#[inline]
fn unnormalized(half_sq: f64) -> f64 {
    if half_sq > UNDERFLOW_EXPONENT {
        0.0
    } else {
        (-half_sq).exp()
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!(
            "bandwidth must be positive and finite, got {h}"
        )));
    }
    Ok(())
}

/// Kernel sum at `x` without the `1/(n h^d (2pi)^(d/2))` prefactor.
///
/// Terms are accumulated in sample order (Neumaier-compensated) so results
/// never depend on how the caller parallelizes across points, and row order
/// changes the sum by at most a couple of ulps.
fn kernel_sum(sample: &Sample, h: f64, x: &[f64]) -> f64 {
    let inv_h = 1.0 / h;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for row in sample.rows() {
        let sq: f64 = row
            .iter()
            .zip(x)
            .map(|(xi, q)| {
                let u = (q - xi) * inv_h;
                u * u
            })
            .sum();
        let term = unnormalized(0.5 * sq);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn prefactor(sample: &Sample, h: f64) -> f64 {
    let d = sample.dim();
    gaussian_normalizer(d) / (sample.len() as f64 * h.powi(d as i32))
}

/// Base KDE at a single point.
pub fn kde_evaluate(sample: &Sample, h: f64, x: &[f64]) -> Result<f64> {
    check_bandwidth(h)?;
    if x.len() != sample.dim() {
        return Err(invalid(format!(
            "query point has dimension {}, sample has {}",
            x.len(),
            sample.dim()
        )));
    }
    Ok(prefactor(sample, h) * kernel_sum(sample, h, x))
}

/// Base KDE at every grid point, in grid order.
pub fn kde_evaluate_grid(sample: &Sample, h: f64, grid: &EvaluationGrid) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    check_grid(sample, grid)?;
    let scale = prefactor(sample, h);
    Ok(grid
        .points
        .par_chunks_exact(grid.dim)
        .map(|x| scale * kernel_sum(sample, h, x))
        .collect())
}

pub(crate) fn check_grid(sample: &Sample, grid: &EvaluationGrid) -> Result<()> {
    if grid.dim() != sample.dim() {
        return Err(invalid(format!(
            "grid has dimension {}, sample has {}",
            grid.dim(),
            sample.dim()
        )));
    }
    Ok(())
}
