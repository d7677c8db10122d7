//! `richkde` command-line front end.
//!
//! Exit codes: 0 success, 2 input-format or usage error, 3 numerical
//! configuration error (ill-conditioned bandwidths, infeasible weights, ...),
//! 4 I/O error. `RICHKDE_THREADS` caps the worker threads used for Monte
//! Carlo trials and grid evaluation; output never depends on it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analysis::{
    convergence_sweep, h_pair_sweep, single_bandwidth_sweep, PairSweepConfig, SweepConfig,
    WeightMode,
};
use crate::error::Error as NumError;
use crate::extrapolation::{
    clamp_and_renormalize, constraint_residual, lagrange_weights, BandwidthSet,
    ExtrapolatedEstimator,
};
use crate::kernel::{EvaluationGrid, Sample};
use crate::reference::{MixtureComponent, ReferenceDistribution};
use crate::selection::{optimal_bandwidth, optimal_order, spread_bandwidths, DEFAULT_SPREAD_RATIO};

pub const THREADS_ENV: &str = "RICHKDE_THREADS";

/// Default one-dimensional evaluation grid: -2 to 2 in steps of 0.5.
pub const DEFAULT_GRID_1D: &str = "-2:0.5:2";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Input { line: Option<u64>, msg: String },

    #[error(transparent)]
    Numerical(NumError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn input(msg: impl Into<String>) -> Self {
        CliError::Input {
            line: None,
            msg: msg.into(),
        }
    }

    fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::InvalidArgument(msg) => CliError::Input { line: None, msg },
            other => CliError::Numerical(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "richkde",
    version,
    about = "Richardson-extrapolated kernel density estimation"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a density estimate of a CSV sample on a grid.
    Eval(EvalArgs),
    /// Print weights and constraint residuals for a bandwidth set.
    Weights(WeightsArgs),
    /// Measure MSE against a reference density over a range of sample sizes.
    Benchmark(BenchmarkArgs),
    /// Measure MSE over a grid of bandwidth pairs.
    Sweep(SweepArgs),
    /// Draw a seeded sample from a reference distribution.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Input CSV, one observation per line.
    #[arg(long)]
    pub input: PathBuf,
    /// The first line of the input is a header.
    #[arg(long)]
    pub header: bool,
    /// Single bandwidth (plain KDE).
    #[arg(long, conflicts_with_all = ["bandwidths", "r"])]
    pub h: Option<f64>,
    /// Explicit bandwidths h1,h2,...
    #[arg(long, conflicts_with = "r")]
    pub bandwidths: Option<String>,
    /// Extrapolation order; bandwidths are spread around the optimal h.
    /// Defaults to the optimal order for the sample size.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SPREAD_RATIO)]
    pub ratio: f64,
    /// Grid spec "start:step:stop" per dimension, comma-joined.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Clamp negative values to zero and rescale (display only).
    #[arg(long)]
    pub clamp: bool,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub bandwidths: Option<String>,
    #[arg(long, required_unless_present = "bandwidths")]
    pub n: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SPREAD_RATIO)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// "normal" or "mixture:W|M1,..,Md|SD;W|...|SD".
    #[arg(long, default_value = "normal", allow_hyphen_values = true)]
    pub dist: String,
    /// Dimension (for the standard normal).
    #[arg(long, default_value_t = 1)]
    pub d: usize,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long)]
    pub r: usize,
    /// Comma-separated, strictly increasing sample sizes.
    #[arg(long)]
    pub n_list: String,
    #[arg(long)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SPREAD_RATIO)]
    pub ratio: f64,
    /// Defaults to -2:0.5:2 for d = 1 and the origin otherwise.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Richardson,
    Constrained,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long)]
    pub n: usize,
    /// First bandwidth values: "start:step:stop" or a comma list.
    #[arg(long)]
    pub h1: String,
    /// Second bandwidth values; defaults to the first list.
    #[arg(long)]
    pub h2: Option<String>,
    #[arg(long)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Richardson)]
    pub mode: ModeArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("richkde: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed configuration inside a pool sized by `RICHKDE_THREADS`.
pub fn execute(config: RunConfig) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let threads: usize =
            raw.trim().parse().ok().filter(|t| *t > 0).ok_or_else(|| {
                CliError::input(format!("{THREADS_ENV} must be a positive integer"))
            })?;
        pool = pool.num_threads(threads);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::input(format!("cannot start worker threads: {e}")))?;
    pool.install(|| match config.command {
        Command::Eval(a) => cmd_eval(&a),
        Command::Weights(a) => cmd_weights(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Sample(a) => cmd_sample(&a),
    })
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let mut text = String::new();
    File::open(&args.input)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::io(&args.input, e))?;
    let sample = parse_sample_csv(&text, args.header)?;
    let d = sample.dim();
    let grid = parse_grid_spec(&args.grid, d)?;

    let bandwidths = if let Some(h) = args.h {
        BandwidthSet::new(vec![h])?
    } else if let Some(list) = &args.bandwidths {
        BandwidthSet::new(parse_f64_list(list)?)?
    } else {
        let n = sample.len() as u64;
        if n < 2 {
            return Err(CliError::input(
                "a single observation needs an explicit --h or --bandwidths",
            ));
        }
        let r = match args.r {
            Some(r) => r,
            None => optimal_order(n, d)?.r,
        };
        spread_bandwidths(optimal_bandwidth(n, d, r)?, r, args.ratio)?
    };
    let est = ExtrapolatedEstimator::with_lagrange_weights(sample, bandwidths)?;
    let mut values = est.evaluate_grid(&grid)?;
    if args.clamp {
        values = clamp_and_renormalize(&values);
    }

    let mut out = String::new();
    let header: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
    let _ = writeln!(out, "{},density", header.join(","));
    for (x, v) in grid.points().zip(&values) {
        let coords: Vec<String> = x.iter().map(|c| format_number(*c)).collect();
        let _ = writeln!(out, "{},{}", coords.join(","), format_number(*v));
    }
    write_output(args.output.as_deref(), &out)
}

pub fn cmd_weights(args: &WeightsArgs) -> CliResult<()> {
    let mut out = String::new();
    let bandwidths = if let Some(list) = &args.bandwidths {
        BandwidthSet::new(parse_f64_list(list)?)?
    } else {
        let n = args.n.expect("clap enforces --n without --bandwidths");
        let r = match args.r {
            Some(r) => r,
            None => {
                let sel = optimal_order(n, args.d)?;
                let _ = writeln!(out, "# alpha = {}", format_number(sel.alpha));
                let _ = writeln!(out, "# r_real = {}", format_number(sel.r_real));
                sel.r
            }
        };
        let h_star = optimal_bandwidth(n, args.d, r)?;
        let _ = writeln!(out, "# h_star = {}", format_number(h_star));
        spread_bandwidths(h_star, r, args.ratio)?
    };
    let weights = lagrange_weights(&bandwidths)?;
    let residual = constraint_residual(&bandwidths, &weights)?;
    let _ = writeln!(out, "# order = {}", bandwidths.order());
    let _ = writeln!(out, "index,bandwidth,weight,residual");
    for (i, ((h, c), res)) in bandwidths
        .values()
        .iter()
        .zip(weights.as_slice())
        .zip(&residual)
        .enumerate()
    {
        let _ = writeln!(
            out,
            "{i},{},{},{}",
            format_number(*h),
            format_number(*c),
            format_number(*res)
        );
    }
    let _ = writeln!(out, "max_abs_weight,{}", format_number(weights.max_abs()));
    write_output(None, &out)
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult<()> {
    let dist = parse_dist(&args.dist.dist, args.dist.d)?;
    let d = dist.dim();
    let grid_spec = args.grid.clone().unwrap_or_else(|| default_grid_spec(d));
    let n_list = parse_usize_list(&args.n_list)?;
    let cfg = SweepConfig {
        dist,
        r: args.r,
        n_list,
        trials: args.trials,
        grid: parse_grid_spec(&grid_spec, d)?,
        seed: args.seed,
        spread_ratio: args.ratio,
    };
    let result = convergence_sweep(&cfg)?;

    let mut kv = vec![
        ("config.command".to_string(), "benchmark".to_string()),
        ("config.dist".into(), args.dist.dist.clone()),
    ];
    kv.push(("config.d".into(), d.to_string()));
    kv.push(("config.r".into(), cfg.r.to_string()));
    kv.push((
        "config.n_list".into(),
        join(cfg.n_list.iter().map(|n| n.to_string())),
    ));
    kv.push(("config.trials".into(), cfg.trials.to_string()));
    kv.push(("config.seed".into(), cfg.seed.to_string()));
    kv.push(("config.ratio".into(), format_number(cfg.spread_ratio)));
    kv.push(("config.grid".into(), grid_spec));
    for (i, row) in result.rows.iter().enumerate() {
        kv.push((format!("table.{i}.n"), row.n.to_string()));
        kv.push((format!("table.{i}.h_star"), format_number(row.h_star)));
        kv.push((format!("table.{i}.mse"), format_number(row.mse())));
        kv.push((format!("table.{i}.stderr"), format_number(row.stderr())));
    }
    kv.push(("slope".into(), format_number(result.slope)));
    kv.push(("intercept".into(), format_number(result.intercept)));

    let mut out = String::from("# richkde benchmark report v1\n");
    for (k, v) in kv {
        let _ = writeln!(out, "{k} = {v}");
    }
    write_output(args.output.as_deref(), &out)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let dist = parse_dist(&args.dist.dist, args.dist.d)?;
    let d = dist.dim();
    let grid = parse_grid_spec(
        &args.grid.clone().unwrap_or_else(|| default_grid_spec(d)),
        d,
    )?;
    let h1_list = parse_value_spec(&args.h1)?;
    let h2_list = match &args.h2 {
        Some(s) => parse_value_spec(s)?,
        None => h1_list.clone(),
    };
    let cfg = PairSweepConfig {
        dist,
        n: args.n,
        h1_list,
        h2_list,
        trials: args.trials,
        grid,
        seed: args.seed,
        mode: match args.mode {
            ModeArg::Richardson => WeightMode::Richardson,
            ModeArg::Constrained => WeightMode::Constrained,
        },
    };
    let cells = h_pair_sweep(&cfg)?;

    let mut singles: Vec<f64> = cfg.h1_list.iter().chain(&cfg.h2_list).copied().collect();
    singles.sort_by(f64::total_cmp);
    singles.dedup();
    let baseline =
        single_bandwidth_sweep(&cfg.dist, cfg.n, &singles, cfg.trials, &cfg.grid, cfg.seed)?;

    let mut out = String::from("h1,h2,mse\n");
    for cell in &cells {
        let mse = cell.mse().map(format_number).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{mse}",
            format_number(cell.h1),
            format_number(cell.h2)
        );
    }
    for (h, report) in &baseline {
        let mse = report
            .as_ref()
            .map(|r| format_number(r.mean_mse()))
            .unwrap_or_default();
        let _ = writeln!(out, "{},,{mse}", format_number(*h));
    }
    write_output(args.output.as_deref(), &out)
}

pub fn cmd_sample(args: &SampleArgs) -> CliResult<()> {
    let dist = parse_dist(&args.dist.dist, args.dist.d)?;
    let sample = dist.sample(args.n, args.seed)?;
    let mut out = String::new();
    for row in sample.rows() {
        let _ = writeln!(out, "{}", join(row.iter().map(|v| format_number(*v))));
    }
    write_output(args.output.as_deref(), &out)
}

fn default_grid_spec(d: usize) -> String {
    if d == 1 {
        DEFAULT_GRID_1D.to_string()
    } else {
        vec!["0"; d].join(",")
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(file);
            w.write_all(text.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .and_then(|_| lock.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}

/// Shortest representation that parses back to the same `f64`; scientific
/// notation outside `[1e-5, 1e16)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Reads one observation per line. Blank lines are skipped; line numbers in
/// errors are 1-based file lines.
pub fn parse_sample_csv(text: &str, header: bool) -> CliResult<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut dim = None;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input {
            line: e.position().map(|p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *dim.get_or_insert(record.len());
        if record.len() != expected {
            return Err(CliError::Input {
                line,
                msg: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| CliError::Input {
                line,
                msg: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(CliError::Input {
                    line,
                    msg: format!("value {field:?} is not finite"),
                });
            }
            data.push(v);
        }
    }
    let dim = dim.ok_or_else(|| CliError::input("input contains no observations"))?;
    Ok(Sample::new(data, dim)?)
}

/// Points `start + k*step` for `k = 0, 1, ...` up to `stop`. A step of zero
/// (or a bare number) yields the single point `start`.
pub fn parse_range(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::input(format!("malformed range {spec:?}")))?;
    if nums.iter().any(|v| !v.is_finite()) {
        return Err(CliError::input(format!(
            "range {spec:?} has non-finite values"
        )));
    }
    match nums.as_slice() {
        [x] => Ok(vec![*x]),
        [start, step, _] if *step == 0.0 => Ok(vec![*start]),
        [start, step, stop] => {
            let span = (stop - start) / step;
            if span < -1e-9 {
                return Err(CliError::input(format!(
                    "range {spec:?} never reaches its stop"
                )));
            }
            let count = (span + 1e-9).floor() as usize + 1;
            if count > 10_000_000 {
                return Err(CliError::input(format!(
                    "range {spec:?} has too many points"
                )));
            }
            Ok((0..count).map(|k| start + k as f64 * step).collect())
        }
        _ => Err(CliError::input(format!(
            "range {spec:?} must look like start:step:stop"
        ))),
    }
}

/// Grid from one range per dimension, comma-joined; the Cartesian product
/// is enumerated with the last dimension varying fastest.
pub fn parse_grid_spec(spec: &str, dim: usize) -> CliResult<EvaluationGrid> {
    let axes: Vec<Vec<f64>> = spec.split(',').map(parse_range).collect::<CliResult<_>>()?;
    if axes.len() != dim {
        return Err(CliError::input(format!(
            "grid spec has {} axes, data has dimension {dim}",
            axes.len()
        )));
    }
    let total: usize = axes.iter().map(Vec::len).product();
    let mut points = Vec::with_capacity(total * dim);
    for idx in 0..total {
        let mut rem = idx;
        let mut point = vec![0.0; dim];
        for (k, axis) in axes.iter().enumerate().rev() {
            point[k] = axis[rem % axis.len()];
            rem /= axis.len();
        }
        points.extend(point);
    }
    Ok(EvaluationGrid::new(points, dim)?)
}

/// Either a range `start:step:stop` or a comma-separated list.
pub fn parse_value_spec(spec: &str) -> CliResult<Vec<f64>> {
    if spec.contains(':') {
        parse_range(spec)
    } else {
        parse_f64_list(spec)
    }
}

pub fn parse_f64_list(spec: &str) -> CliResult<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::input(format!("cannot parse {s:?} as a number")))
        })
        .collect()
}

fn parse_usize_list(spec: &str) -> CliResult<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::input(format!("cannot parse {s:?} as a count")))
        })
        .collect()
}

/// `normal` (dimension from `d`) or `mixture:W|M|SD;...` where `M` is a
/// comma-separated mean vector.
pub fn parse_dist(spec: &str, d: usize) -> CliResult<ReferenceDistribution> {
    let spec = spec.trim();
    if spec == "normal" {
        return Ok(ReferenceDistribution::standard_normal(d)?);
    }
    let body = spec
        .strip_prefix("mixture:")
        .ok_or_else(|| CliError::input(format!("unknown distribution {spec:?}")))?;
    let components = body
        .split(';')
        .map(|part| {
            let fields: Vec<&str> = part.split('|').collect();
            let [w, mean, sd] = fields.as_slice() else {
                return Err(CliError::input(format!(
                    "mixture component {part:?} must be weight|mean|stdev"
                )));
            };
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::input(format!("cannot parse {s:?} in {part:?}")))
            };
            Ok(MixtureComponent {
                weight: num(w)?,
                mean: parse_f64_list(mean)?,
                stdev: num(sd)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let dist = ReferenceDistribution::mixture(components)?;
    Ok(dist)
}

/// Parses a benchmark report into its key/value pairs.
pub fn parse_report(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once(" = ").ok_or_else(|| CliError::Input {
            line: Some(i as u64 + 1),
            msg: "expected `key = value`".into(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}
