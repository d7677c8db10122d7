//! Monte Carlo error measurement against a reference density, plus the
//! closed-form variance and risk-matrix models of the combined estimator.
//!
//! Trial `t` of a run seeded with `s` draws its sample with seed
//! [`derive_seed`]`(s, t)`. Trials may run in parallel; their results are
//! collected in trial order and reduced sequentially, so reports are
//! identical for any thread count.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::extrapolation::{
    lagrange_weights, solve_constrained_weights, validate_weights, BandwidthSet, ConstraintCheck,
    ExtrapolatedEstimator, WeightVector,
};
use crate::kernel::EvaluationGrid;
use crate::matrix::SquareMatrix;
use crate::reference::ReferenceDistribution;
use crate::selection::{optimal_bandwidth, spread_bandwidths};

/// `2^64 / golden ratio`, the SplitMix64 increment.
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` of a run seeded with `seed`:
/// `mix64(seed ^ (GOLDEN_GAMMA * index))`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ GOLDEN_GAMMA.wrapping_mul(index))
}

/// Monte Carlo statistics at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointStats {
    pub mean_estimate: f64,
    pub bias: f64,
    /// Population variance over trials (divisor `T`), so that
    /// `mse = variance + bias^2` holds in sample form.
    pub variance: f64,
    pub mse: f64,
    /// Sample standard deviation of the squared errors over `sqrt(T)`.
    pub mc_standard_error: f64,
}

/// Settings echoed into every report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub bandwidths: Vec<f64>,
    pub weights: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub grid: EvaluationGrid,
    pub trials: usize,
    pub points: Vec<PointStats>,
    pub config: ReportConfig,
    /// Standard error of the grid-averaged MSE, from the per-trial
    /// grid-averaged squared errors.
    pub mean_mse_stderr: f64,
}

impl MseReport {
    /// Uniform average of the pointwise MSE over the grid.
    pub fn mean_mse(&self) -> f64 {
        self.points.iter().map(|p| p.mse).sum::<f64>() / self.points.len() as f64
    }

    /// Largest violation of `|mse - (variance + bias^2)| / max(mse, 1e-300)`.
    pub fn identity_defect(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.mse - (p.variance + p.bias * p.bias)).abs() / p.mse.max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// Pointwise bias, variance, and MSE of `sum_i c_i p_{h_i}` over `trials`
/// independent samples of size `n`.
///
/// Weights only need to sum to one (plus the magnitude guard), so any linear
/// combination can be measured, not just Richardson weights.
pub fn empirical_mse(
    dist: &ReferenceDistribution,
    n: usize,
    bandwidths: &BandwidthSet,
    weights: &WeightVector,
    grid: &EvaluationGrid,
    trials: usize,
    seed: u64,
) -> Result<MseReport> {
    if trials < 2 {
        return Err(invalid(format!(
            "at least 2 trials are required, got {trials}"
        )));
    }
    let seeds: Vec<u64> = (0..trials as u64).map(|t| derive_seed(seed, t)).collect();
    let mut report = empirical_mse_with_seeds(dist, n, bandwidths, weights, grid, &seeds)?;
    report.config.seed = seed;
    Ok(report)
}

/// [`empirical_mse`] with explicit per-trial seeds. The report's seed is the
/// first trial seed.
pub fn empirical_mse_with_seeds(
    dist: &ReferenceDistribution,
    n: usize,
    bandwidths: &BandwidthSet,
    weights: &WeightVector,
    grid: &EvaluationGrid,
    seeds: &[u64],
) -> Result<MseReport> {
    let trials = seeds.len();
    if trials < 2 {
        return Err(invalid(format!(
            "at least 2 trials are required, got {trials}"
        )));
    }
    if grid.dim() != dist.dim() {
        return Err(invalid(format!(
            "grid dimension {} does not match distribution dimension {}",
            grid.dim(),
            dist.dim()
        )));
    }
    validate_weights(bandwidths, weights, ConstraintCheck::SumToOne)?;
    let truth: Vec<f64> = grid
        .points()
        .map(|x| dist.true_density(x))
        .collect::<Result<_>>()?;

    let estimates: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&s| {
            let sample = dist.sample(n, s)?;
            let est = ExtrapolatedEstimator::with_check(
                sample,
                bandwidths.clone(),
                weights.clone(),
                ConstraintCheck::SumToOne,
            )?;
            est.evaluate_grid(grid)
        })
        .collect::<Result<_>>()?;

    let tf = trials as f64;
    let points = truth
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let column = || estimates.iter().map(move |e| e[k]);
            let mean = column().sum::<f64>() / tf;
            let variance = column().map(|e| (e - mean).powi(2)).sum::<f64>() / tf;
            let sq_err: Vec<f64> = column().map(|e| (e - p).powi(2)).collect();
            let mse = sq_err.iter().sum::<f64>() / tf;
            PointStats {
                mean_estimate: mean,
                bias: mean - p,
                variance,
                mse,
                mc_standard_error: sample_std(&sq_err) / tf.sqrt(),
            }
        })
        .collect();

    let per_trial_mean: Vec<f64> = estimates
        .iter()
        .map(|e| {
            e.iter()
                .zip(&truth)
                .map(|(v, p)| (v - p).powi(2))
                .sum::<f64>()
                / truth.len() as f64
        })
        .collect();

    Ok(MseReport {
        grid: grid.clone(),
        trials,
        points,
        config: ReportConfig {
            n,
            d: dist.dim(),
            r: bandwidths.order(),
            bandwidths: bandwidths.values().to_vec(),
            weights: weights.as_slice().to_vec(),
            seed: seeds[0],
        },
        mean_mse_stderr: sample_std(&per_trial_mean) / tf.sqrt(),
    })
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Closed-form leading-order variance of the two-bandwidth estimator:
///
/// ```text
/// p(x) / (n (2 pi)^(d/2)) * ( c1^2/h1^d + c2^2/h2^d + 2 sqrt(2) c1 c2 / (h1^2 + h2^2)^(d/2) )
/// ```
///
/// The cross-term constant is taken as published; Monte Carlo comparisons
/// report the measured ratio rather than assume it.
pub fn theoretical_variance_r2(
    p_at_x: f64,
    n: usize,
    bandwidths: &BandwidthSet,
    weights: &WeightVector,
    d: usize,
) -> Result<f64> {
    if bandwidths.order() != 2 || weights.len() != 2 {
        return Err(invalid("two bandwidths and two weights are required"));
    }
    if !(p_at_x > 0.0) || n == 0 || d == 0 {
        return Err(invalid("p(x), n and d must be positive"));
    }
    let [h1, h2] = [bandwidths.values()[0], bandwidths.values()[1]];
    let [c1, c2] = [weights.as_slice()[0], weights.as_slice()[1]];
    let df = d as f64;
    let bracket = c1 * c1 / h1.powf(df)
        + c2 * c2 / h2.powf(df)
        + 2.0 * 2f64.sqrt() * c1 * c2 / (h1 * h1 + h2 * h2).powf(df / 2.0);
    Ok(p_at_x / (n as f64 * (2.0 * PI).powf(df / 2.0)) * bracket)
}

/// Variance and bias matrices of the weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrices {
    /// `V_ii = 1/(n h_i^d)`, `V_ij = sqrt(2) / (n (h_i^2 + h_j^2)^(d/2))`.
    pub v: SquareMatrix,
    /// `B_ij = h_i^2 h_j^2`.
    pub b: SquareMatrix,
    pub n: usize,
    pub d: usize,
}

/// Builds `V` and `B` without any density-dependent prefactor.
pub fn risk_matrices(bandwidths: &BandwidthSet, n: usize, d: usize) -> Result<RiskMatrices> {
    if n == 0 || d == 0 {
        return Err(invalid("n and d must be positive"));
    }
    let h = bandwidths.values();
    let (nf, df) = (n as f64, d as f64);
    let v = SquareMatrix::from_fn(h.len(), |i, j| {
        if i == j {
            1.0 / (nf * h[i].powf(df))
        } else {
            2f64.sqrt() / (nf * (h[i] * h[i] + h[j] * h[j]).powf(df / 2.0))
        }
    });
    let b = SquareMatrix::from_fn(h.len(), |i, j| h[i] * h[i] * h[j] * h[j]);
    Ok(RiskMatrices { v, b, n, d })
}

/// `sum_ij c_i M_ij c_j`.
pub fn quadratic_form(weights: &WeightVector, m: &SquareMatrix) -> Result<f64> {
    if weights.len() != m.dim() {
        return Err(invalid(format!(
            "{} weights for a {}x{} matrix",
            weights.len(),
            m.dim(),
            m.dim()
        )));
    }
    Ok(m.quadratic_form(weights.as_slice()))
}

/// Ordinary least-squares fit of `ln(mse)` against `ln(n)`: `(slope, intercept)`.
pub fn fit_log_log(ns: &[usize], mses: &[f64]) -> Result<(f64, f64)> {
    if ns.len() != mses.len() || ns.len() < 2 {
        return Err(invalid("need at least two (n, mse) pairs of equal length"));
    }
    if mses.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::NumericalFailure(
            "MSE values must be positive".into(),
        ));
    }
    let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = mses.iter().map(|m| m.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Settings for [`convergence_sweep`].
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub dist: ReferenceDistribution,
    pub r: usize,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub grid: EvaluationGrid,
    pub seed: u64,
    pub spread_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n: usize,
    pub h_star: f64,
    pub bandwidths: BandwidthSet,
    pub weights: WeightVector,
    pub report: MseReport,
}

impl SweepRow {
    pub fn mse(&self) -> f64 {
        self.report.mean_mse()
    }

    pub fn stderr(&self) -> f64 {
        self.report.mean_mse_stderr
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub slope: f64,
    pub intercept: f64,
    pub rows: Vec<SweepRow>,
}

/// Measures grid-averaged MSE at each `n` using `h*(n, d, r)`, spread
/// bandwidths and Lagrange weights, then fits the log-log slope.
///
/// The run for sample size `n` is seeded with `derive_seed(seed, n)`, so
/// sweeps that differ only in `r` share their samples.
pub fn convergence_sweep(cfg: &SweepConfig) -> Result<ConvergenceResult> {
    if cfg.n_list.len() < 4 {
        return Err(invalid(
            "a convergence sweep needs at least four sample sizes",
        ));
    }
    if cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("sample sizes must be strictly increasing"));
    }
    let d = cfg.dist.dim();
    let rows = cfg
        .n_list
        .iter()
        .map(|&n| {
            let h_star = optimal_bandwidth(n as u64, d, cfg.r)?;
            let bandwidths = spread_bandwidths(h_star, cfg.r, cfg.spread_ratio)?;
            let weights = lagrange_weights(&bandwidths)?;
            let report = empirical_mse(
                &cfg.dist,
                n,
                &bandwidths,
                &weights,
                &cfg.grid,
                cfg.trials,
                derive_seed(cfg.seed, n as u64),
            )?;
            Ok(SweepRow {
                n,
                h_star,
                bandwidths,
                weights,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mses: Vec<f64> = rows.iter().map(SweepRow::mse).collect();
    let (slope, intercept) = fit_log_log(&cfg.n_list, &mses)?;
    Ok(ConvergenceResult {
        slope,
        intercept,
        rows,
    })
}

/// How the pair sweep chooses weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Richardson,
    Constrained,
}

#[derive(Debug, Clone)]
pub struct PairSweepConfig {
    pub dist: ReferenceDistribution,
    pub n: usize,
    pub h1_list: Vec<f64>,
    pub h2_list: Vec<f64>,
    pub trials: usize,
    pub grid: EvaluationGrid,
    pub seed: u64,
    pub mode: WeightMode,
}

#[derive(Debug, Clone)]
pub struct PairCellValue {
    pub bandwidths: BandwidthSet,
    pub weights: WeightVector,
    pub report: MseReport,
}

#[derive(Debug, Clone)]
pub struct PairCell {
    pub h1: f64,
    pub h2: f64,
    /// `Err` marks a missing cell together with the reason.
    pub outcome: Result<PairCellValue>,
}

impl PairCell {
    pub fn mse(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|v| v.report.mean_mse())
    }
}

/// Grid-averaged MSE for every `(h1, h2)` pair, row-major over `h1_list`.
///
/// Every cell uses the same seed, so swapping `h1` and `h2` reproduces the
/// same cell exactly. Inadmissible or failing cells are reported, not fatal.
pub fn h_pair_sweep(cfg: &PairSweepConfig) -> Result<Vec<PairCell>> {
    check_list(&cfg.h1_list)?;
    check_list(&cfg.h2_list)?;
    let d = cfg.dist.dim();
    let mut cells = Vec::with_capacity(cfg.h1_list.len() * cfg.h2_list.len());
    for &h1 in &cfg.h1_list {
        for &h2 in &cfg.h2_list {
            let outcome = pair_cell(cfg, d, h1, h2);
            cells.push(PairCell { h1, h2, outcome });
        }
    }
    Ok(cells)
}

fn pair_cell(cfg: &PairSweepConfig, d: usize, h1: f64, h2: f64) -> Result<PairCellValue> {
    let bandwidths = BandwidthSet::new(vec![h1, h2])?;
    let weights = match cfg.mode {
        WeightMode::Richardson => lagrange_weights(&bandwidths)?,
        WeightMode::Constrained => {
            let risk = risk_matrices(&bandwidths, cfg.n, d)?;
            solve_constrained_weights(&bandwidths, &risk.v, &risk.b)?
        }
    };
    let report = empirical_mse(
        &cfg.dist,
        cfg.n,
        &bandwidths,
        &weights,
        &cfg.grid,
        cfg.trials,
        cfg.seed,
    )?;
    Ok(PairCellValue {
        bandwidths,
        weights,
        report,
    })
}

/// Single-bandwidth (r = 1) grid-averaged MSE for each `h`, with the same
/// seeding as [`h_pair_sweep`].
pub fn single_bandwidth_sweep(
    dist: &ReferenceDistribution,
    n: usize,
    h_list: &[f64],
    trials: usize,
    grid: &EvaluationGrid,
    seed: u64,
) -> Result<Vec<(f64, Result<MseReport>)>> {
    check_list(h_list)?;
    Ok(h_list
        .iter()
        .map(|&h| {
            let report = BandwidthSet::new(vec![h]).and_then(|bw| {
                let w = lagrange_weights(&bw)?;
                empirical_mse(dist, n, &bw, &w, grid, trials, seed)
            });
            (h, report)
        })
        .collect())
}

fn check_list(list: &[f64]) -> Result<()> {
    if list.is_empty() || list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(invalid("bandwidth lists must be non-empty and positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::optimal_bandwidth;

    fn normal1() -> ReferenceDistribution {
        ReferenceDistribution::standard_normal(1).unwrap()
    }

    fn bw(v: &[f64]) -> BandwidthSet {
        BandwidthSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mixer_reference_values() {
        // SplitMix64 finalizer on the first SplitMix64 state for seed 0
        assert_eq!(mix64(GOLDEN_GAMMA), 0xE220_A839_7B1D_CDAF);
        assert_eq!(derive_seed(0, 0), 0);
        assert_ne!(derive_seed(42, 1), derive_seed(42, 2));
    }

    #[test]
    fn identical_seeds_give_zero_variance() {
        let h = bw(&[0.4]);
        let w = lagrange_weights(&h).unwrap();
        let grid = EvaluationGrid::from_values(&[-1.0, 0.0, 0.5]).unwrap();
        let rep = empirical_mse_with_seeds(&normal1(), 200, &h, &w, &grid, &[7, 7]).unwrap();
        for p in &rep.points {
            assert_eq!(p.variance, 0.0);
            assert_eq!(p.mse, p.bias * p.bias);
        }
    }

    #[test]
    fn report_identity_and_determinism() {
        let h = bw(&[0.25, 0.3]);
        let w = lagrange_weights(&h).unwrap();
        let grid = EvaluationGrid::from_values(&[-2.0, -0.5, 0.0, 1.5]).unwrap();
        let a = empirical_mse(&normal1(), 300, &h, &w, &grid, 40, 11).unwrap();
        let b = empirical_mse(&normal1(), 300, &h, &w, &grid, 40, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.identity_defect() <= 1e-10);
        assert_eq!(a.config.r, 2);
        assert_eq!(a.config.seed, 11);
        for p in &a.points {
            assert!(p.variance >= 0.0 && p.mc_standard_error >= 0.0);
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let h = bw(&[0.3]);
        let w = lagrange_weights(&h).unwrap();
        let grid = EvaluationGrid::from_values(&[0.0, 1.0]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| empirical_mse(&normal1(), 500, &h, &w, &grid, 16, 5).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn empirical_mse_rejects_bad_input() {
        let h = bw(&[0.3]);
        let w = lagrange_weights(&h).unwrap();
        let g1 = EvaluationGrid::from_values(&[0.0]).unwrap();
        assert!(empirical_mse(&normal1(), 100, &h, &w, &g1, 1, 0).is_err());
        let g2 = EvaluationGrid::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(empirical_mse(&normal1(), 100, &h, &w, &g2, 4, 0).is_err());
        let off = WeightVector::new(vec![0.9]).unwrap();
        assert!(empirical_mse(&normal1(), 100, &h, &off, &g1, 4, 0).is_err());
    }

    #[test]
    fn independent_seeds_agree_within_noise() {
        let h = bw(&[optimal_bandwidth(1000, 1, 1).unwrap()]);
        let w = lagrange_weights(&h).unwrap();
        let g = EvaluationGrid::from_values(&[0.0]).unwrap();
        let a = empirical_mse(&normal1(), 1000, &h, &w, &g, 500, 1).unwrap();
        let b = empirical_mse(&normal1(), 1000, &h, &w, &g, 500, 2).unwrap();
        let (pa, pb) = (a.points[0], b.points[0]);
        let se = (pa.mc_standard_error.powi(2) + pb.mc_standard_error.powi(2)).sqrt();
        assert!(
            (pa.mse - pb.mse).abs() <= 3.0 * se,
            "{} vs {}",
            pa.mse,
            pb.mse
        );
    }

    #[test]
    fn doubling_trials_is_stable() {
        let h = bw(&[0.3]);
        let w = lagrange_weights(&h).unwrap();
        let g = EvaluationGrid::from_values(&[0.0]).unwrap();
        let a = empirical_mse(&normal1(), 800, &h, &w, &g, 200, 3).unwrap();
        let b = empirical_mse(&normal1(), 800, &h, &w, &g, 400, 3).unwrap();
        assert!((a.mean_mse() - b.mean_mse()).abs() < 5.0 * a.points[0].mc_standard_error);
    }

    #[test]
    fn variance_formula_reductions() {
        let h = bw(&[0.3, 0.5]);
        let unit = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let v = theoretical_variance_r2(0.4, 1000, &h, &unit, 1).unwrap();
        let want = 0.4 / (1000.0 * 0.3 * (2.0 * PI).sqrt());
        assert!((v - want).abs() <= 1e-15 * want);

        let c = lagrange_weights(&h).unwrap();
        let v1 = theoretical_variance_r2(0.4, 1000, &h, &c, 1).unwrap();
        let v2 = theoretical_variance_r2(0.4, 2000, &h, &c, 1).unwrap();
        assert_eq!(v1, 2.0 * v2);
        assert!(theoretical_variance_r2(0.4, 10, &bw(&[0.3]), &unit, 1).is_err());
    }

    #[test]
    fn variance_formula_positive_for_lagrange_weights() {
        for d in 1..=3 {
            for k in 0..40 {
                let ratio = 1.05 + (3.0 - 1.05) * k as f64 / 39.0;
                for h1 in [0.05, 0.2, 0.7] {
                    let h = bw(&[h1, h1 * ratio]);
                    let c = lagrange_weights(&h).unwrap();
                    assert!(theoretical_variance_r2(0.3, 500, &h, &c, d).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn risk_matrix_examples() {
        let one = risk_matrices(&bw(&[0.4]), 50, 2).unwrap();
        assert!((one.v.get(0, 0) - 1.0 / (50.0 * 0.16)).abs() < 1e-15);
        assert!((one.b.get(0, 0) - 0.4f64.powi(4)).abs() < 1e-16);

        let two = risk_matrices(&bw(&[1.0, 2.0]), 10, 1).unwrap();
        let off = 2f64.sqrt() / 5f64.sqrt() / 10.0;
        assert!((two.v.get(0, 0) - 0.1).abs() < 1e-16);
        assert!((two.v.get(1, 1) - 0.05).abs() < 1e-16);
        assert!((two.v.get(0, 1) - off).abs() < 1e-16);
        assert_eq!(two.v.get(0, 1), two.v.get(1, 0));
        assert_eq!(
            two.b,
            SquareMatrix::from_rows(&[[1.0, 4.0], [4.0, 16.0]]).unwrap()
        );
        let det = two.b.get(0, 0) * two.b.get(1, 1) - two.b.get(0, 1) * two.b.get(1, 0);
        assert_eq!(det, 0.0);
    }

    #[test]
    fn quadratic_form_examples() {
        let m = SquareMatrix::from_rows(&[[1.0, 2.0], [2.0, 3.0]]).unwrap();
        let e1 = WeightVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(quadratic_form(&e1, &m).unwrap(), 1.0);
        let ones = WeightVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(quadratic_form(&ones, &m).unwrap(), 8.0);
        assert!(quadratic_form(&WeightVector::new(vec![1.0]).unwrap(), &m).is_err());
    }

    #[test]
    fn bias_form_is_squared_moment() {
        for r in 2..=5 {
            let h = crate::selection::spread_bandwidths(0.3, r, 1.3).unwrap();
            let risk = risk_matrices(&h, 100, 1).unwrap();
            let c = lagrange_weights(&h).unwrap();
            let bias = quadratic_form(&c, &risk.b).unwrap();
            let scale: f64 = h
                .values()
                .iter()
                .zip(c.as_slice())
                .map(|(hv, cv)| (cv * hv * hv).abs())
                .sum();
            assert!(bias.abs() <= 1e-14 * scale * scale, "r={r} {bias}");

            let arbitrary = WeightVector::new((0..r).map(|i| i as f64 - 1.3).collect()).unwrap();
            let moment: f64 = h
                .values()
                .iter()
                .zip(arbitrary.as_slice())
                .map(|(hv, cv)| cv * hv * hv)
                .sum();
            let q = quadratic_form(&arbitrary, &risk.b).unwrap();
            assert!((q - moment * moment).abs() <= 1e-12 * q.abs());
        }
    }

    #[test]
    fn log_log_fit_recovers_power_law() {
        let ns = [250, 500, 1000, 2000, 4000, 8000];
        let mses: Vec<f64> = ns.iter().map(|n| 3.7 / *n as f64).collect();
        let (slope, intercept) = fit_log_log(&ns, &mses).unwrap();
        assert!((slope + 1.0).abs() <= 1e-12);
        assert!((intercept - 3.7f64.ln()).abs() <= 1e-11);
        assert!(fit_log_log(&ns, &[1.0; 3]).is_err());
        assert!(fit_log_log(&[1, 2], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn sweep_validation() {
        let cfg = SweepConfig {
            dist: normal1(),
            r: 1,
            n_list: vec![100, 200, 400],
            trials: 4,
            grid: EvaluationGrid::from_values(&[0.0]).unwrap(),
            seed: 1,
            spread_ratio: 1.2,
        };
        assert!(convergence_sweep(&cfg).is_err());
        let cfg = SweepConfig {
            n_list: vec![100, 200, 200, 400],
            ..cfg
        };
        assert!(convergence_sweep(&cfg).is_err());
    }

    #[test]
    fn pair_sweep_diagonal_missing_and_symmetric() {
        let hs = vec![0.2, 0.35, 0.5];
        let cfg = PairSweepConfig {
            dist: normal1(),
            n: 200,
            h1_list: hs.clone(),
            h2_list: hs.clone(),
            trials: 8,
            grid: EvaluationGrid::from_values(&[0.0, 1.0]).unwrap(),
            seed: 3,
            mode: WeightMode::Richardson,
        };
        let cells = h_pair_sweep(&cfg).unwrap();
        assert_eq!(cells.len(), 9);
        for i in 0..3 {
            assert!(matches!(
                cells[i * 3 + i].outcome,
                Err(Error::IllConditionedBandwidths(_))
            ));
            for j in 0..3 {
                assert_eq!(cells[i * 3 + j].mse(), cells[j * 3 + i].mse());
            }
        }
    }

    #[test]
    fn constrained_pair_cells_balance() {
        let cfg = PairSweepConfig {
            dist: normal1(),
            n: 1000,
            h1_list: vec![0.2, 0.5],
            h2_list: vec![0.3, 0.6],
            trials: 4,
            grid: EvaluationGrid::from_values(&[0.0]).unwrap(),
            seed: 3,
            mode: WeightMode::Constrained,
        };
        for cell in h_pair_sweep(&cfg).unwrap() {
            if let Ok(v) = &cell.outcome {
                let risk = risk_matrices(&v.bandwidths, 1000, 1).unwrap();
                let var = quadratic_form(&v.weights, &risk.v).unwrap();
                let bias = quadratic_form(&v.weights, &risk.b).unwrap();
                assert!((var - bias).abs() <= 1e-10 * var.max(bias));
            }
        }
    }
}
