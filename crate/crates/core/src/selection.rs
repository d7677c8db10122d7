//! Optimal bandwidth and extrapolation order for Gaussian references.
//!
//! Balancing squared bias `(l_r h^2r / 2)^2` (with `l_r ~ (2r/e)^r`) against
//! variance `1 / (n h^d)` gives
//!
//! ```text
//! h*(n, d, r) = n^(-1/(4r+d)) * (e / (2r))^(2r/(4r+d))
//! ```
//!
//! and minimizing the resulting MSE over `r` gives the stationarity condition
//! `-2 ln n + 4r + d ln r + d ln 2 = 0`, solved by
//! `r = (d/4) W(2 n^(2/d) / d)` with `W` the principal Lambert W branch.

use std::f64::consts::E;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::error::{invalid, Error, Result};
use crate::extrapolation::BandwidthSet;
use crate::kernel::gaussian_normalizer;

const LAMBERT_MAX_ITER: usize = 50;
const INV_E: f64 = 1.0 / E;

/// Default geometric ratio between neighbouring bandwidths.
pub const DEFAULT_SPREAD_RATIO: f64 = 1.2;

/// Principal branch `W_0(x)`, the solution of `w e^w = x` with `w >= -1`.
///
/// Halley iteration from `ln(1 + x)` for `x >= 0`, or from the branch-point
/// series for `x < 0`. Converged when `|w e^w - x| <= 1e-12 max(1, |x|)`.
pub fn lambert_w(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E {
        return Err(Error::Domain(format!(
            "lambert_w is defined for x >= -1/e, got {x}"
        )));
    }
    if x.is_infinite() {
        return Err(Error::Domain("lambert_w argument must be finite".into()));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    // p = sqrt(2 (e x + 1)) is the distance from the branch point
    let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
    if x < 0.0 && p < 1e-5 {
        // the series error is O(p^4), far below the contract
        return Ok(-1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p);
    }
    let mut w = if x >= 0.0 {
        x.ln_1p()
    } else {
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    };
    let tol = 1e-12 * x.abs().max(1.0);
    for _ in 0..LAMBERT_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= tol {
            return Ok(w);
        }
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        if !step.is_finite() {
            break;
        }
        w -= step;
    }
    let f = w * w.exp() - x;
    if f.abs() <= tol {
        Ok(w)
    } else {
        Err(Error::NumericalFailure(format!(
            "lambert_w({x}) did not converge in {LAMBERT_MAX_ITER} iterations (residual {f:e})"
        )))
    }
}

/// `h*(n, d, r) = n^(-1/(4r+d)) (e/(2r))^(2r/(4r+d))`.
pub fn optimal_bandwidth(n: u64, d: usize, r: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("optimal bandwidth needs n >= 2, got {n}")));
    }
    if d == 0 || r == 0 {
        return Err(invalid("dimension and order must be positive"));
    }
    let (rf, df) = (r as f64, d as f64);
    let denom = 4.0 * rf + df;
    Ok((n as f64).powf(-1.0 / denom) * (E / (2.0 * rf)).powf(2.0 * rf / denom))
}

/// Result of [`optimal_order`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderSelection {
    pub n: u64,
    pub d: usize,
    /// `2 n^(2/d) / d`
    pub alpha: f64,
    /// Unrounded `(d/4) W(alpha)`.
    pub r_real: f64,
    /// `max(1, round(r_real))`
    pub r: usize,
    pub h_star: f64,
}

impl OrderSelection {
    /// `-2 ln n + 4 r + d ln r + d ln 2` at `r = r_real`; zero at the optimum.
    pub fn stationarity_residual(&self) -> f64 {
        stationarity(self.n, self.d, self.r_real)
    }
}

pub(crate) fn stationarity(n: u64, d: usize, r: f64) -> f64 {
    let df = d as f64;
    -2.0 * (n as f64).ln() + 4.0 * r + df * r.ln() + df * 2f64.ln()
}

/// Optimal extrapolation order and the matching bandwidth.
pub fn optimal_order(n: u64, d: usize) -> Result<OrderSelection> {
    if n < 2 {
        return Err(invalid(format!("optimal order needs n >= 2, got {n}")));
    }
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let df = d as f64;
    let alpha = 2.0 * (n as f64).powf(2.0 / df) / df;
    let r_real = df / 4.0 * lambert_w(alpha)?;
    let r = (r_real.round() as usize).max(1);
    Ok(OrderSelection {
        n,
        d,
        alpha,
        r_real,
        r,
        h_star: optimal_bandwidth(n, d, r)?,
    })
}

/// Largest odd argument accepted by [`double_factorial`].
pub const MAX_DOUBLE_FACTORIAL_ARG: u32 = 299;

/// `m!! = m (m-2) ... 3 1` for odd `m <= 299`, exact.
pub fn double_factorial(m: u32) -> Result<BigUint> {
    if m.is_multiple_of(2) || m > MAX_DOUBLE_FACTORIAL_ARG {
        return Err(invalid(format!(
            "double factorial needs odd m in 1..={MAX_DOUBLE_FACTORIAL_ARG}, got {m}"
        )));
    }
    Ok((1..=m)
        .step_by(2)
        .fold(BigUint::one(), |acc, k| acc * BigUint::from(k)))
}

/// Standard-normal bias constant `l_r = (2r - 1)!! / (2 pi)^(d/2)`.
///
/// This is the Gaussian reference value only; other densities have different
/// constants.
pub fn gaussian_bias_constant(r: usize, d: usize) -> Result<f64> {
    if r == 0 || r > 150 {
        return Err(invalid(format!(
            "bias constant needs 1 <= r <= 150, got {r}"
        )));
    }
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let df = double_factorial(2 * r as u32 - 1)?;
    let value = df.to_f64().unwrap_or(f64::INFINITY) * gaussian_normalizer(d);
    if !value.is_finite() {
        return Err(Error::NumericalOverflow(format!(
            "l_r overflows for r = {r}, d = {d}"
        )));
    }
    Ok(value)
}

/// Bias magnitude model `sum_i l_r h_i^2r / 2` for the standard normal.
pub fn gaussian_bias_model(bandwidths: &BandwidthSet, d: usize) -> Result<f64> {
    let r = bandwidths.order();
    let l = gaussian_bias_constant(r, d)?;
    Ok(bandwidths
        .values()
        .iter()
        .map(|h| l * h.powi(2 * r as i32) / 2.0)
        .sum())
}

/// `r` bandwidths `h* ratio^(i - (r+1)/2)`, geometrically centred on `h_star`.
pub fn spread_bandwidths(h_star: f64, r: usize, ratio: f64) -> Result<BandwidthSet> {
    if !(h_star > 0.0 && h_star.is_finite()) {
        return Err(invalid(format!("h* must be positive, got {h_star}")));
    }
    if r == 0 {
        return Err(invalid("order must be at least 1"));
    }
    if !(ratio >= 1.0 + 1e-3) || !ratio.is_finite() {
        return Err(invalid(format!(
            "spread ratio must be at least 1.001, got {ratio}"
        )));
    }
    let center = (r as f64 + 1.0) / 2.0;
    let values = (1..=r)
        .map(|i| h_star * ratio.powf(i as f64 - center))
        .collect();
    BandwidthSet::new(values)
}
