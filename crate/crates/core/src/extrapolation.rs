//! Richardson-extrapolated estimator `p_r(x) = sum_i c_i p_{h_i}(x)`.
//!
//! The weights solve the Vandermonde-type system in `h^2`
//!
//! ```text
//! [ 1        1        ...  1        ] [c_1]   [1]
//! [ h_1^2    h_2^2    ...  h_r^2    ] [c_2] = [0]
//! [ ...                              ] [...]   [.]
//! [ h_1^2(r-1)        ...  h_r^2(r-1)] [c_r]   [0]
//! ```
//!
//! whose solution is the constant term of the Lagrange basis polynomials:
//! `c_i = prod_{j != i} -h_j^2 / (h_i^2 - h_j^2)`. [`lagrange_weights`] uses
//! that product directly; [`solve_weights_linear`] does the dense solve and is
//! kept as a conditioning oracle.

use crate::error::{invalid, Error, Result};
use crate::kernel::{check_grid, kde_evaluate, kde_evaluate_grid, EvaluationGrid, Sample};
use crate::matrix::SquareMatrix;

/// Minimum `min_{i!=j} |h_i^2 - h_j^2| / max_k h_k^2` accepted by default.
pub const SEPARATION_THRESHOLD: f64 = 1e-6;

/// Largest weight magnitude an estimator may be built with.
pub const MAX_WEIGHT_MAGNITUDE: f64 = 1e8;

/// Bound on `|sum c_i - 1|` for Richardson weights.
pub const SUM_TOLERANCE: f64 = 1e-10;

/// Bound on each relative moment residual for Richardson weights.
pub const MOMENT_TOLERANCE: f64 = 1e-8;

/// Strictly positive, pairwise-distinct bandwidths, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSet {
    values: Vec<f64>,
}

impl BandwidthSet {
    /// Validates and sorts `values`, enforcing [`SEPARATION_THRESHOLD`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_threshold(values, SEPARATION_THRESHOLD)
    }

    /// Like [`BandwidthSet::new`] with a caller-chosen separation threshold.
    ///
    /// A threshold of zero only rejects exact duplicates. Sets built this way
    /// can still be rejected later by [`lagrange_weights`].
    pub fn with_threshold(mut values: Vec<f64>, threshold: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("at least one bandwidth is required"));
        }
        if let Some(h) = values.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(invalid(format!(
                "bandwidths must be positive and finite, got {h}"
            )));
        }
        values.sort_by(f64::total_cmp);
        let set = Self { values };
        if set.values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::IllConditionedBandwidths(
                "bandwidths must be pairwise distinct".into(),
            ));
        }
        set.check_separation(threshold)?;
        Ok(set)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Extrapolation order `r`.
    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// Conditioning gauge `min_{i!=j} |h_i^2 - h_j^2| / max_k h_k^2`.
    ///
    /// Infinite for a single bandwidth. Because the values are sorted, the
    /// minimum is attained by a neighbouring pair.
    pub fn separation(&self) -> f64 {
        let max_sq = self.values[self.values.len() - 1].powi(2);
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]) * (w[1] + w[0]) / max_sq)
            .fold(f64::INFINITY, f64::min)
    }

    fn check_separation(&self, threshold: f64) -> Result<()> {
        let sep = self.separation();
        if sep < threshold {
            return Err(Error::IllConditionedBandwidths(format!(
                "relative separation {sep:e} of squared bandwidths is below {threshold:e}; spread the bandwidths further apart"
            )));
        }
        Ok(())
    }
}

/// Signed combination weights `c_1..c_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("weight vector must not be empty"));
        }
        if weights.iter().any(|c| !c.is_finite()) {
            return Err(Error::NumericalFailure("weights must be finite".into()));
        }
        Ok(Self { weights })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Lagrange closed-form weights. Never forms the matrix.
pub fn lagrange_weights(bandwidths: &BandwidthSet) -> Result<WeightVector> {
    bandwidths.check_separation(SEPARATION_THRESHOLD)?;
    let h = bandwidths.values();
    let weights = (0..h.len())
        .map(|i| {
            (0..h.len())
                .filter(|&j| j != i)
                .map(|j| -(h[j] * h[j]) / ((h[i] - h[j]) * (h[i] + h[j])))
                .product()
        })
        .collect();
    WeightVector::new(weights)
}

/// Raw dense-solve weights together with their constraint residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    pub weights: WeightVector,
    /// Output of [`constraint_residual`] for `weights`.
    pub residual: Vec<f64>,
}

impl LinearWeights {
    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when any residual exceeds the Richardson tolerances or a weight
    /// exceeds [`MAX_WEIGHT_MAGNITUDE`]. Nearly equal bandwidths can give
    /// huge weights whose rounded residual is still exactly zero.
    pub fn is_flagged(&self) -> bool {
        !residual_within_tolerance(&self.residual) || self.weights.max_abs() > MAX_WEIGHT_MAGNITUDE
    }
}

/// Solves `R c = e_1` by LU with partial pivoting and returns the raw solution.
///
/// The separation threshold is not enforced here; this is the comparison
/// route that exhibits the ill-conditioning of `R`. Check
/// [`LinearWeights::is_flagged`] before trusting the result.
pub fn solve_weights_linear(bandwidths: &BandwidthSet) -> Result<LinearWeights> {
    let h = bandwidths.values();
    let r = h.len();
    let sq: Vec<f64> = h.iter().map(|v| v * v).collect();
    let matrix = SquareMatrix::from_fn(r, |row, col| sq[col].powi(row as i32));
    let mut rhs = vec![0.0; r];
    rhs[0] = 1.0;
    let solution = matrix.solve(&rhs)?;
    if solution.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularSystem("solution is not finite".into()));
    }
    let weights = WeightVector::new(solution)?;
    let residual = constraint_residual(bandwidths, &weights)?;
    Ok(LinearWeights { weights, residual })
}

/// Entry 0 is `sum c_i - 1`; entry `j >= 1` is the relative moment residual
/// `sum c_i h_i^2j / sum |c_i| h_i^2j`.
pub fn constraint_residual(bandwidths: &BandwidthSet, weights: &WeightVector) -> Result<Vec<f64>> {
    let h = bandwidths.values();
    let c = weights.as_slice();
    if h.len() != c.len() {
        return Err(invalid(format!(
            "{} weights for {} bandwidths",
            c.len(),
            h.len()
        )));
    }
    let mut out = Vec::with_capacity(h.len());
    out.push(c.iter().sum::<f64>() - 1.0);
    for j in 1..h.len() {
        let (signed, total) = h.iter().zip(c).fold((0.0, 0.0), |(s, t), (hi, ci)| {
            let p = hi.powi(2 * j as i32);
            (s + ci * p, t + ci.abs() * p)
        });
        out.push(if total == 0.0 { 0.0 } else { signed / total });
    }
    Ok(out)
}

fn residual_within_tolerance(residual: &[f64]) -> bool {
    residual[0].abs() <= SUM_TOLERANCE && residual[1..].iter().all(|v| v.abs() <= MOMENT_TOLERANCE)
}

/// Which constraints an estimator's weights are validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintCheck {
    /// Sum-to-one plus every moment row.
    Richardson,
    /// Sum-to-one only, for weights from [`solve_constrained_weights`] or
    /// other experimental schemes.
    SumToOne,
}

/// A sample, its bandwidths, and the combination weights.
#[derive(Debug, Clone)]
pub struct ExtrapolatedEstimator {
    sample: Sample,
    bandwidths: BandwidthSet,
    weights: WeightVector,
}

impl ExtrapolatedEstimator {
    /// Builds an estimator whose weights must satisfy every Richardson row.
    pub fn new(sample: Sample, bandwidths: BandwidthSet, weights: WeightVector) -> Result<Self> {
        Self::with_check(sample, bandwidths, weights, ConstraintCheck::Richardson)
    }

    /// Builds an estimator with Lagrange weights for `bandwidths`.
    pub fn with_lagrange_weights(sample: Sample, bandwidths: BandwidthSet) -> Result<Self> {
        let weights = lagrange_weights(&bandwidths)?;
        Self::new(sample, bandwidths, weights)
    }

    pub fn with_check(
        sample: Sample,
        bandwidths: BandwidthSet,
        weights: WeightVector,
        check: ConstraintCheck,
    ) -> Result<Self> {
        validate_weights(&bandwidths, &weights, check)?;
        Ok(Self {
            sample,
            bandwidths,
            weights,
        })
    }

    pub fn sample(&self) -> &Sample {
        &self.sample
    }

    pub fn bandwidths(&self) -> &BandwidthSet {
        &self.bandwidths
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        extrapolated_evaluate(self, x)
    }

    pub fn evaluate_grid(&self, grid: &EvaluationGrid) -> Result<Vec<f64>> {
        extrapolated_evaluate_grid(self, grid)
    }
}

/// Checks lengths, the magnitude guard, and the constraints selected by `check`.
pub fn validate_weights(
    bandwidths: &BandwidthSet,
    weights: &WeightVector,
    check: ConstraintCheck,
) -> Result<()> {
    let residual = constraint_residual(bandwidths, weights)?;
    let max_c = weights.max_abs();
    if max_c > MAX_WEIGHT_MAGNITUDE {
        return Err(Error::IllConditionedBandwidths(format!(
            "max |c_i| = {max_c:e} exceeds {MAX_WEIGHT_MAGNITUDE:e}"
        )));
    }
    let ok = match check {
        ConstraintCheck::Richardson => residual_within_tolerance(&residual),
        ConstraintCheck::SumToOne => residual[0].abs() <= SUM_TOLERANCE,
    };
    if !ok {
        return Err(Error::NumericalFailure(format!(
            "weights violate the constraints, residual {residual:?}"
        )));
    }
    Ok(())
}

/// `sum_i c_i p_{h_i}(x)`; the signed value is returned unclamped.
pub fn extrapolated_evaluate(est: &ExtrapolatedEstimator, x: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (h, c) in est.bandwidths.values().iter().zip(est.weights.as_slice()) {
        total += c * kde_evaluate(&est.sample, *h, x)?;
    }
    Ok(total)
}

/// Batched [`extrapolated_evaluate`]; elementwise identical to it.
pub fn extrapolated_evaluate_grid(
    est: &ExtrapolatedEstimator,
    grid: &EvaluationGrid,
) -> Result<Vec<f64>> {
    check_grid(&est.sample, grid)?;
    let mut total = vec![0.0; grid.len()];
    for (h, c) in est.bandwidths.values().iter().zip(est.weights.as_slice()) {
        let values = kde_evaluate_grid(&est.sample, *h, grid)?;
        for (t, v) in total.iter_mut().zip(values) {
            *t += c * v;
        }
    }
    Ok(total)
}

/// Presentation helper: clamps negative densities to zero and rescales so the
/// clamped values keep the raw total. Not used by any error measurement.
pub fn clamp_and_renormalize(values: &[f64]) -> Vec<f64> {
    let raw: f64 = values.iter().sum();
    let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let kept: f64 = clamped.iter().sum();
    if kept > 0.0 && raw > 0.0 {
        let scale = raw / kept;
        clamped.into_iter().map(|v| v * scale).collect()
    } else {
        clamped
    }
}

/// Two-bandwidth weights with `c_1 + c_2 = 1` and `c^T V c = c^T B c`.
///
/// With `c_2 = 1 - c_1` the second condition is a quadratic in `c_1`. Among
/// its real roots the one minimizing `c^T V c + c^T B c` is returned. If the
/// quadratic vanishes identically every point on the line qualifies and the
/// Lagrange weights are returned.
pub fn solve_constrained_weights(
    bandwidths: &BandwidthSet,
    v: &SquareMatrix,
    b: &SquareMatrix,
) -> Result<WeightVector> {
    if bandwidths.order() != 2 || v.dim() != 2 || b.dim() != 2 {
        return Err(invalid(
            "constrained weights are implemented for two bandwidths only",
        ));
    }
    if !v.is_symmetric(1e-12) || !b.is_symmetric(1e-12) {
        return Err(invalid("V and B must be symmetric"));
    }
    let m = |i, j| v.get(i, j) - b.get(i, j);
    let quad = m(0, 0) - 2.0 * m(0, 1) + m(1, 1);
    let lin = 2.0 * (m(0, 1) - m(1, 1));
    let cst = m(1, 1);
    let negligible = 1e-14 * v.max_abs().max(b.max_abs());

    let roots: Vec<f64> = if quad.abs() < negligible {
        if lin.abs() < negligible {
            if cst.abs() < negligible {
                return lagrange_weights(bandwidths);
            }
            return Err(Error::NoFeasibleWeights(
                "constraint reduces to a nonzero constant".into(),
            ));
        }
        vec![-cst / lin]
    } else {
        let disc = lin * lin - 4.0 * quad * cst;
        if disc < 0.0 {
            return Err(Error::NoFeasibleWeights(format!(
                "quadratic has no real root (discriminant {disc:e})"
            )));
        }
        let q = -0.5 * (lin + lin.signum() * disc.sqrt());
        if q == 0.0 {
            vec![0.0]
        } else {
            vec![q / quad, cst / q]
        }
    };

    let polish = |mut c1: f64| {
        for _ in 0..3 {
            let f = (quad * c1 + lin) * c1 + cst;
            let df = 2.0 * quad * c1 + lin;
            if df == 0.0 {
                break;
            }
            c1 -= f / df;
        }
        c1
    };

    let proxy = |c: &[f64]| v.quadratic_form(c) + b.quadratic_form(c);
    let best = roots
        .into_iter()
        .filter(|c1| c1.is_finite())
        .map(polish)
        .map(|c1| [c1, 1.0 - c1])
        .min_by(|x, y| proxy(x).total_cmp(&proxy(y)))
        .ok_or_else(|| Error::NoFeasibleWeights("no finite root".into()))?;

    let (var, bias) = (v.quadratic_form(&best), b.quadratic_form(&best));
    if (var - bias).abs() > 1e-10 * var.abs().max(bias.abs()) {
        return Err(Error::NumericalFailure(format!(
            "constrained root does not balance: c'Vc = {var:e}, c'Bc = {bias:e}"
        )));
    }
    WeightVector::new(best.to_vec())
}
