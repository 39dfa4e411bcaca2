//! `momderiv` — command-line front end for the derivative-estimation
//! library: coefficient fits, index derivatives, density and quantile
//! applications, and the Monte Carlo study tables.
//!
//! Single-result commands print a JSON document embedding the fully
//! resolved configuration (every default materialized, seed included) so
//! each run is replayable from its own output; grid and simulation commands
//! emit CSV.  Exit codes: 0 success, 1 usage error, 2 numerical failure.
//!
//! All estimation logic lives in the library; this binary only parses
//! arguments, loads data, dispatches, and serializes.

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use momderiv::apps::{
    auction_quantile, density_quantile, dr_density, qpe_from_process, qpe_grid, qr_cdf,
    qr_cdf_grid, qr_density_from_process, AuctionSpec, EvalPoint, DEFAULT_EPSILON,
    DEFAULT_GRID_STEP, DEFAULT_QPE_GRID,
};
use momderiv::data::{load_csv, Dataset, IndexInterval};
use momderiv::deriv::{dr_theta_u, dr_variance, qr_theta_u, qr_variance, DerivEstimate};
use momderiv::dr::{dr_fit, dr_process};
use momderiv::kernel::{KernelFamily, KernelSpec};
use momderiv::mc::{run_study, Method, Model, StudyConfig, TruthConvention};
use momderiv::qr::{qr_fit, qr_process};

/// Output schema version embedded in every JSON document.
const SCHEMA_VERSION: u32 = 1;

/// Default variance-simulation draw count.
const DEFAULT_S_DRAWS: usize = 1000;

/// Default seed for anything stochastic (variance simulation, studies).
const DEFAULT_SEED: u64 = 0;

/// Default curve resolution for `--grid-out`.
const DEFAULT_CURVE_POINTS: usize = 33;

/// Order-statistic trim fraction (each side) for the default QPE index
/// interval: thresholds at or beyond every observation would separate the
/// distribution-regression likelihood.
const QPE_TRIM_FRACTION: f64 = 0.02;

// ════════════════════════════════════════════════════════════════════════
// Argument surface
// ════════════════════════════════════════════════════════════════════════

#[derive(Parser)]
#[command(
    name = "momderiv",
    version,
    about = "Derivative estimation for quantile and distribution regression",
    after_help = "Exit codes: 0 success, 1 usage error, 2 numerical failure."
)]
struct Cli {
    /// Worker threads (default: all cores; env fallback MOMDERIV_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: CommandLine,
}

#[derive(Subcommand)]
enum CommandLine {
    /// Fit quantile-regression coefficients at one level.
    QrFit {
        #[command(flatten)]
        data: DataArgs,
        /// Quantile level in (0, 1).
        #[arg(long)]
        u: f64,
    },
    /// Fit distribution-regression coefficients at one threshold.
    DrFit {
        #[command(flatten)]
        data: DataArgs,
        /// Response-scale threshold.
        #[arg(long, allow_negative_numbers = true)]
        u: f64,
    },
    /// Estimate the quantile-regression coefficient derivative.
    QrDeriv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Quantile level in (0, 1).
        #[arg(long)]
        u: f64,
        /// Symmetrize the Jacobian block.
        #[arg(long)]
        symmetrize: bool,
        /// Attach the simulation-based variance estimate.
        #[arg(long)]
        variance: bool,
        /// Draws for the variance simulation.
        #[arg(long, default_value_t = DEFAULT_S_DRAWS)]
        s_draws: usize,
        /// Seed for the variance simulation.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Estimate the distribution-regression coefficient derivative.
    DrDeriv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        interval: IntervalArgs,
        /// Response-scale threshold.
        #[arg(long, allow_negative_numbers = true)]
        u: f64,
        /// Attach the plug-in variance estimate.
        #[arg(long)]
        variance: bool,
    },
    /// Conditional CDF by inverting the fitted quantile process.
    Cdf {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        profile: ProfileArg,
        /// Outcome level y.
        #[arg(long, allow_negative_numbers = true)]
        y: f64,
        /// Trimming constant ε.
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Quantile-grid step for the inversion.
        #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
        grid_step: f64,
    },
    /// Conditional density at a point (QR inversion or DR closed form).
    Density {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        grid_out: GridOutArgs,
        /// Which model supplies the density.
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Outcome level y (QR model).
        #[arg(long, allow_negative_numbers = true)]
        y: Option<f64>,
        /// Response-scale threshold u (DR model).
        #[arg(long, allow_negative_numbers = true)]
        u: Option<f64>,
        /// Trimming constant ε (QR model).
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Quantile-grid step for the CDF inversion (QR model).
        #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
        grid_step: f64,
        #[command(flatten)]
        interval: IntervalArgs,
    },
    /// Density-quantile function 1/(x'θ̂^u(u)).
    DensityQuantile {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        grid_out: GridOutArgs,
        /// Quantile level in (0, 1).
        #[arg(long)]
        u: f64,
    },
    /// Quantile partial effects under distribution regression.
    Qpe {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        interval: IntervalArgs,
        #[command(flatten)]
        grid_out: GridOutArgs,
        /// Quantile level τ in (0, 1).
        #[arg(long)]
        tau: f64,
        /// Points on the quantile-inversion grid.
        #[arg(long, default_value_t = DEFAULT_QPE_GRID)]
        grid_points: usize,
    },
    /// First-price auction valuation quantile.
    Auction {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        grid_out: GridOutArgs,
        /// Quantile level in (0, 1).
        #[arg(long)]
        u: f64,
        /// Number of symmetric bidders (≥ 3).
        #[arg(long)]
        bidders: u32,
    },
    /// Monte Carlo study preset reproducing one of the simulation tables.
    Simulate {
        /// Which table preset: 1 moment estimator, 2 smoothed process,
        /// 3 augmented quantile regression.
        #[arg(long)]
        table: u8,
        /// Replications per (n, h) cell.
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        /// Master seed.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Override the preset's sample sizes.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Override the preset's bandwidths.
        #[arg(long, value_delimiter = ',')]
        h: Option<Vec<f64>>,
        /// Override the preset's quantile level.
        #[arg(long, default_value_t = 0.5)]
        u: f64,
        /// Kernel family.
        #[arg(long, value_enum, default_value_t = KernelArg::Triangular)]
        kernel: KernelArg,
        /// Symmetrize the Jacobian block (moment method).
        #[arg(long)]
        symmetrize: bool,
        /// Closed form of the true derivative the bias is measured against.
        #[arg(long, value_enum, default_value_t = TruthArg::Derived)]
        truth: TruthArg,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with named columns.
    #[arg(long)]
    data: String,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// Prepend an intercept column of ones.
    #[arg(long)]
    intercept: bool,
}

#[derive(Args)]
struct KernelArgs {
    /// Kernel family.
    #[arg(long, value_enum, default_value_t = KernelArg::Triangular)]
    kernel: KernelArg,
    /// Bandwidth.
    #[arg(long)]
    h: f64,
}

#[derive(Args)]
struct IntervalArgs {
    /// Lower end of the index interval (default: smallest response).
    #[arg(long, allow_negative_numbers = true)]
    interval_lower: Option<f64>,
    /// Upper end of the index interval (default: largest response).
    #[arg(long, allow_negative_numbers = true)]
    interval_upper: Option<f64>,
}

#[derive(Args)]
struct ProfileArg {
    /// Covariate profile, comma separated, intercept included (e.g. 1,1).
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    x: Vec<f64>,
}

#[derive(Args)]
struct GridOutArgs {
    /// Write a curve CSV to this path (the JSON summary still goes to
    /// stdout).
    #[arg(long)]
    grid_out: Option<String>,
    /// Curve start (index scale of the command).
    #[arg(long, allow_negative_numbers = true)]
    grid_from: Option<f64>,
    /// Curve end.
    #[arg(long, allow_negative_numbers = true)]
    grid_to: Option<f64>,
    /// Curve resolution.
    #[arg(long, default_value_t = DEFAULT_CURVE_POINTS)]
    curve_points: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Triangular,
    Epanechnikov,
    Biweight,
}

impl KernelArg {
    fn family(self) -> KernelFamily {
        match self {
            KernelArg::Triangular => KernelFamily::Triangular,
            KernelArg::Epanechnikov => KernelFamily::Epanechnikov,
            KernelArg::Biweight => KernelFamily::Biweight,
        }
    }

    fn name(self) -> &'static str {
        match self {
            KernelArg::Triangular => "triangular",
            KernelArg::Epanechnikov => "epanechnikov",
            KernelArg::Biweight => "biweight",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Qr,
    Dr,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TruthArg {
    /// 1/(u(1−u)), from differentiating the design's quantile function.
    Derived,
    /// The printed variant 1/Λ(u(1−u)), kept for reproduction reports.
    Printed,
}

impl TruthArg {
    fn convention(self) -> TruthConvention {
        match self {
            TruthArg::Derived => TruthConvention::Derived,
            TruthArg::Printed => TruthConvention::PaperPrinted,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TruthArg::Derived => "derived",
            TruthArg::Printed => "printed",
        }
    }
}

// ════════════════════════════════════════════════════════════════════════
// Error classification
// ════════════════════════════════════════════════════════════════════════

/// Failures after successful argument parsing: semantic usage mistakes exit
/// 1, numerical/data failures exit 2.
enum RunError {
    Usage(String),
    Failure(String),
}

impl From<momderiv::Error> for RunError {
    fn from(e: momderiv::Error) -> Self {
        match e {
            // Rejected argument values are usage errors; data, convergence,
            // conditioning, and i/o problems are runtime failures.
            momderiv::Error::InvalidArgument(_) => RunError::Usage(e.to_string()),
            _ => RunError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Failure(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Failure(format!("csv: {e}"))
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Builds the global worker pool from `--threads`, falling back to the
/// MOMDERIV_THREADS environment variable, then to all cores.
fn configure_threads(flag: Option<usize>) -> std::result::Result<(), String> {
    let from_env = || {
        std::env::var("MOMDERIV_THREADS")
            .ok()
            .map(|raw| {
                raw.parse::<usize>()
                    .map_err(|_| format!("MOMDERIV_THREADS must be a positive integer, got {raw:?}"))
            })
            .transpose()
    };
    let threads = match flag {
        Some(t) => Some(t),
        None => from_env()?,
    };
    match threads {
        None => Ok(()),
        Some(0) => Err("--threads must be positive".to_string()),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| format!("thread pool: {e}")),
    }
}

// ════════════════════════════════════════════════════════════════════════
// Dispatch
// ════════════════════════════════════════════════════════════════════════

fn dispatch(command: CommandLine) -> RunResult<()> {
    match command {
        CommandLine::QrFit { data, u } => cmd_qr_fit(&data, u),
        CommandLine::DrFit { data, u } => cmd_dr_fit(&data, u),
        CommandLine::QrDeriv {
            data,
            kernel,
            u,
            symmetrize,
            variance,
            s_draws,
            seed,
        } => cmd_qr_deriv(&data, &kernel, u, symmetrize, variance, s_draws, seed),
        CommandLine::DrDeriv {
            data,
            kernel,
            interval,
            u,
            variance,
        } => cmd_dr_deriv(&data, &kernel, &interval, u, variance),
        CommandLine::Cdf {
            data,
            profile,
            y,
            epsilon,
            grid_step,
        } => cmd_cdf(&data, &profile, y, epsilon, grid_step),
        CommandLine::Density {
            data,
            kernel,
            profile,
            grid_out,
            model,
            y,
            u,
            epsilon,
            grid_step,
            interval,
        } => cmd_density(
            &data, &kernel, &profile, &grid_out, model, y, u, epsilon, grid_step, &interval,
        ),
        CommandLine::DensityQuantile {
            data,
            kernel,
            profile,
            grid_out,
            u,
        } => cmd_density_quantile(&data, &kernel, &profile, &grid_out, u),
        CommandLine::Qpe {
            data,
            kernel,
            profile,
            interval,
            grid_out,
            tau,
            grid_points,
        } => cmd_qpe(&data, &kernel, &profile, &interval, &grid_out, tau, grid_points),
        CommandLine::Auction {
            data,
            kernel,
            profile,
            grid_out,
            u,
            bidders,
        } => cmd_auction(&data, &kernel, &profile, &grid_out, u, bidders),
        CommandLine::Simulate {
            table,
            reps,
            seed,
            n,
            h,
            u,
            kernel,
            symmetrize,
            truth,
        } => cmd_simulate(table, reps, seed, n, h, u, kernel, symmetrize, truth),
    }
}

// ════════════════════════════════════════════════════════════════════════
// Shared helpers
// ════════════════════════════════════════════════════════════════════════

fn load(data: &DataArgs) -> RunResult<Dataset> {
    load_csv(&data.data, &data.response, data.intercept)
        .map_err(|e| RunError::Failure(format!("loading {}: {e}", data.data)))
}

fn data_config(data: &DataArgs) -> Value {
    json!({
        "data": data.data,
        "response": data.response,
        "intercept": data.intercept,
    })
}

fn profile_vector(profile: &ProfileArg, p: usize) -> RunResult<DVector<f64>> {
    if profile.x.len() != p {
        return Err(usage(format!(
            "--x has {} entries but the design has {p} columns",
            profile.x.len()
        )));
    }
    Ok(DVector::from_vec(profile.x.clone()))
}

fn vec_json(v: &DVector<f64>) -> Vec<f64> {
    v.iter().cloned().collect()
}

fn mat_json(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn emit(document: Value) -> RunResult<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(&document)
        .map_err(|e| RunError::Failure(format!("json: {e}")))?;
    // A closed pipe (e.g. `momderiv … | head`) is not a failure.
    match writeln!(std::io::stdout().lock(), "{text}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(RunError::Failure(format!("i/o: {e}"))),
    }
}

/// True when a CSV write failed only because the reader closed the pipe.
fn csv_broken_pipe(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe)
}

/// Resolves the index interval for distribution-regression commands,
/// defaulting to the observed response range.
fn resolve_interval(data: &Dataset, args: &IntervalArgs) -> RunResult<IndexInterval> {
    let lower = args.interval_lower.unwrap_or_else(|| data.y().min());
    let upper = args.interval_upper.unwrap_or_else(|| data.y().max());
    Ok(IndexInterval::new(lower, upper)?)
}

/// Interval default for QPE: trimmed order statistics, because thresholds
/// at or beyond every observation separate the likelihood.
fn resolve_qpe_interval(data: &Dataset, args: &IntervalArgs) -> RunResult<IndexInterval> {
    if args.interval_lower.is_some() || args.interval_upper.is_some() {
        return resolve_interval(data, args);
    }
    let mut sorted: Vec<f64> = data.y().iter().cloned().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite responses"));
    let trim = ((sorted.len() as f64 * QPE_TRIM_FRACTION).ceil() as usize)
        .max(1)
        .min(sorted.len().saturating_sub(2) / 2);
    Ok(IndexInterval::new(sorted[trim], sorted[sorted.len() - 1 - trim])?)
}

fn interval_config(interval: IndexInterval) -> Value {
    json!({ "lower": interval.u_lower, "upper": interval.u_upper })
}

/// Uniform curve grid for `--grid-out`.
fn curve_grid(args: &GridOutArgs, default_from: f64, default_to: f64) -> RunResult<Vec<f64>> {
    let from = args.grid_from.unwrap_or(default_from);
    let to = args.grid_to.unwrap_or(default_to);
    if !(from.is_finite() && to.is_finite() && from < to) {
        return Err(usage(format!(
            "curve range must be finite with --grid-from < --grid-to, got [{from}, {to}]"
        )));
    }
    if args.curve_points < 2 {
        return Err(usage("--curve-points must be at least 2"));
    }
    let cells = args.curve_points - 1;
    Ok((0..=cells)
        .map(|i| from + (to - from) * i as f64 / cells as f64)
        .collect())
}

fn write_curve(path: &str, header: &[&str], rows: &[Vec<f64>]) -> RunResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    writer.flush()?;
    Ok(())
}

fn fit_json(fit: &momderiv::qr::CoefEstimate, names: &[String]) -> Value {
    json!({
        "theta": vec_json(&fit.theta),
        "columns": names,
        "converged": fit.converged,
        "objective": fit.objective,
        "iterations": fit.iterations,
    })
}

fn deriv_json(est: &DerivEstimate) -> Value {
    json!({
        "theta_u": vec_json(&est.theta_u),
        "theta": vec_json(&est.fit.theta),
        "u": est.u,
        "h": est.h,
        "variance_scale": est.variance_scale,
    })
}

// ════════════════════════════════════════════════════════════════════════
// Commands
// ════════════════════════════════════════════════════════════════════════

fn cmd_qr_fit(data_args: &DataArgs, u: f64) -> RunResult<()> {
    let data = load(data_args)?;
    let fit = qr_fit(&data, u)?;
    emit(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "qr-fit",
        "config": { "data": data_config(data_args), "u": u },
        "result": fit_json(&fit, data.column_names()),
    }))
}

fn cmd_dr_fit(data_args: &DataArgs, u: f64) -> RunResult<()> {
    let data = load(data_args)?;
    let fit = dr_fit(&data, u)?;
    emit(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "dr-fit",
        "config": { "data": data_config(data_args), "u": u },
        "result": fit_json(&fit, data.column_names()),
    }))
}

fn cmd_qr_deriv(
    data_args: &DataArgs,
    kernel_args: &KernelArgs,
    u: f64,
    symmetrize: bool,
    variance: bool,
    s_draws: usize,
    seed: u64,
) -> RunResult<()> {
    let data = load(data_args)?;
    let spec = KernelSpec::new(kernel_args.kernel.family(), kernel_args.h)?;
    let est = qr_theta_u(&data, u, spec, symmetrize)?;
    let mut result = deriv_json(&est);
    if variance {
        let var = qr_variance(&data, &est, s_draws, seed)?;
        result["variance"] = json!({
            "matrix": mat_json(&var.matrix),
            "floored_observations": var.floored_observations,
            "clip_trace_fraction": var.clip_trace_fraction,
        });
    }
    emit(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "qr-deriv",
        "config": {
            "data": data_config(data_args),
            "u": u,
            "h": kernel_args.h,
            "kernel": kernel_args.kernel.name(),
            "symmetrize": symmetrize,
            "variance": variance,
            "s_draws": s_draws,
            "seed": seed,
        },
        "result": result,
    }))
}

fn cmd_dr_deriv(
    data_args: &DataArgs,
    kernel_args: &KernelArgs,
    interval_args: &IntervalArgs,
    u: f64,
    variance: bool,
) -> RunResult<()> {
    let data = load(data_args)?;
    let spec = KernelSpec::new(kernel_args.kernel.family(), kernel_args.h)?;
    let interval = resolve_interval(&data, interval_args)?;
    let est = dr_theta_u(&data, u, spec, Some(interval))?;
    let mut result = deriv_json(&est);
    if variance {
        let var = dr_variance(&data, &est)?;
        result["variance"] = json!({
            "matrix": mat_json(&var.matrix),
            "floored_observations": var.floored_observations,
            "clip_trace_fraction": var.clip_trace_fraction,
        });
    }
    emit(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "dr-deriv",
        "config": {
            "data": data_config(data_args),
            "u": u,
            "h": kernel_args.h,
            "kernel": kernel_args.kernel.name(),
            "interval": interval_config(interval),
            "variance": variance,
        },
        "result": result,
    }))
}

fn cmd_cdf(
    data_args: &DataArgs,
    profile: &ProfileArg,
    y: f64,
    epsilon: f64,
    grid_step: f64,
) -> RunResult<()> {
    let data = load(data_args)?;
    let x = profile_vector(profile, data.p())?;
    let grid = qr_cdf_grid(epsilon, grid_step)?;
    let process = qr_process(&data, &grid)?;
    let point = EvalPoint::at_outcome(x, y)?;
    let value = qr_cdf(&process, &point, epsilon)?;
    emit(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "cdf",
        "config": {
            "data": data_config(data_args),
            "x": profile.x,
            "y": y,
            "epsilon": epsilon,
            "grid_step": grid_step,
        },
        "result": { "cdf": value },
    }))
}

#[allow(clippy::too_many_arguments)] // thin dispatch of one subcommand's flags
fn cmd_density(
    data_args: &DataArgs,
    kernel_args: &KernelArgs,
    profile: &ProfileArg,
    grid_out: &GridOutArgs,
    model: ModelArg,
    y: Option<f64>,
    u: Option<f64>,
    epsilon: f64,
    grid_step: f64,
    interval_args: &IntervalArgs,
) -> RunResult<()> {
    let data = load(data_args)?;
    let x = profile_vector(profile, data.p())?;
    let spec = KernelSpec::new(kernel_args.kernel.family(), kernel_args.h)?;
    match model {
        ModelArg::Qr => {
            let y = y.ok_or_else(|| usage("--model qr needs --y (an outcome level)"))?;
            let point = EvalPoint::at_outcome(x.clone(), y)?;
            let process = qr_process(&data, &qr_cdf_grid(epsilon, grid_step)?)?;
            let value = qr_density_from_process(&data, &process, &point, spec, epsilon)?;
            let curve = match &grid_out.grid_out {
                None => None,
                Some(path) => {
                    let grid = curve_grid(grid_out, data.y().min(), data.y().max())?;
                    let rows: RunResult<Vec<Vec<f64>>> = grid
                        .iter()
                        .map(|&yv| {
                            let pt = EvalPoint::at_outcome(x.clone(), yv)?;
                            let f = qr_density_from_process(&data, &process, &pt, spec, epsilon)?;
                            Ok(vec![yv, f])
                        })
                        .collect();
                    write_curve(path, &["y", "density"], &rows?)?;
                    Some(json!({ "path": path, "points": grid.len() }))
                }
            };
            let mut doc = json!({
                "schema_version": SCHEMA_VERSION,
                "command": "density",
                "config": {
                    "data": data_config(data_args),
                    "model": "qr",
                    "x": profile.x,
                    "y": y,
                    "h": kernel_args.h,
                    "kernel": kernel_args.kernel.name(),
                    "epsilon": epsilon,
                    "grid_step": grid_step,
                },
                "result": { "density": value },
            });
            if let Some(curve) = curve {
                doc["result"]["curve"] = curve;
            }
            emit(doc)
        }
        ModelArg::Dr => {
            let u = u.ok_or_else(|| usage("--model dr needs --u (a response threshold)"))?;
            let interval = resolve_interval(&data, interval_args)?;
            let point = EvalPoint::at_level(x.clone(), u)?;
            let est = dr_density(&data, &point, spec, interval)?;
            let curve = match &grid_out.grid_out {
                None => None,
                Some(path) => {
                    let grid = curve_grid(grid_out, interval.u_lower, interval.u_upper)?;
                    let rows: RunResult<Vec<Vec<f64>>> = grid
                        .iter()
                        .map(|&uv| {
                            let pt = EvalPoint::at_level(x.clone(), uv)?;
                            let f = dr_density(&data, &pt, spec, interval)?;
                            Ok(vec![uv, f.value, if f.negative { 1.0 } else { 0.0 }])
                        })
                        .collect();
                    write_curve(path, &["u", "density", "negative"], &rows?)?;
                    Some(json!({ "path": path, "points": grid.len() }))
                }
            };
            let mut doc = json!({
                "schema_version": SCHEMA_VERSION,
                "command": "density",
                "config": {
                    "data": data_config(data_args),
                    "model": "dr",
                    "x": profile.x,
                    "u": u,
                    "h": kernel_args.h,
                    "kernel": kernel_args.kernel.name(),
                    "interval": interval_config(interval),
                },
                "result": { "density": est.value, "negative": est.negative },
            });
            if let Some(curve) = curve {
                doc["result"]["curve"] = curve;
            }
            emit(doc)
        }
    }
}

fn cmd_density_quantile(
    data_args: &DataArgs,
    kernel_args: &KernelArgs,
    profile: &ProfileArg,
    grid_out: &GridOutArgs,
    u: f64,
) -> RunResult<()> {
    let data = load(data_args)?;
    let x = profile_vector(profile, data.p())?;
    let spec = KernelSpec::new(kernel_args.kernel.family(), kernel_args.h)?;
    let point = EvalPoint::at_level(x.clone(), u)?;
    let value = density_quantile(&data, &point, spec)?;
    let curve = match &grid_out.grid_out {
        None => None,
        Some(path) => {
            let grid = curve_grid(grid_out, 0.1, 0.9)?;
            let rows: RunResult<Vec<Vec<f64>>> = grid
                .iter()
                .map(|&uv| {
                    let pt = EvalPoint::at_level(x.clone(), uv)?;
                    Ok(vec![uv, density_quantile(&data, &pt, spec)?])
                })
                .collect();
            write_curve(path, &["u", "density_quantile"], &rows?)?;
            Some(json!({ "path": path, "points": grid.len() }))
        }
    };
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "density-quantile",
        "config": {
            "data": data_config(data_args),
            "x": profile.x,
            "u": u,
            "h": kernel_args.h,
            "kernel": kernel_args.kernel.name(),
        },
        "result": { "density_quantile": value },
    });
    if let Some(curve) = curve {
        doc["result"]["curve"] = curve;
    }
    emit(doc)
}

fn cmd_qpe(
    data_args: &DataArgs,
    kernel_args: &KernelArgs,
    profile: &ProfileArg,
    interval_args: &IntervalArgs,
    grid_out: &GridOutArgs,
    tau: f64,
    grid_points: usize,
) -> RunResult<()> {
    let data = load(data_args)?;
    let x = profile_vector(profile, data.p())?;
    let spec = KernelSpec::new(kernel_args.kernel.family(), kernel_args.h)?;
    let interval = resolve_qpe_interval(&data, interval_args)?;
    let point = EvalPoint::at_tau(x.clone(), tau)?;
    let process = dr_process(&data, &qpe_grid(interval, grid_points)?)?;
    let est = qpe_from_process(&data, &process, &point, spec, interval)?;
    let curve = match &grid_out.grid_out {
        None => None,
        Some(path) => {
            let grid = curve_grid(grid_out, 0.1, 0.9)?;
            let mut header: Vec<String> = vec!["tau".to_string(), "quantile".to_string()];
            for name in data.column_names() {
                header.push(format!("qpe_{name}"));
            }
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: RunResult<Vec<Vec<f64>>> = grid
                .iter()
                .map(|&tv| {
                    let pt = EvalPoint::at_tau(x.clone(), tv)?;
                    let e = qpe_from_process(&data, &process, &pt, spec, interval)?;
                    let mut row = vec![tv, e.quantile];
                    row.extend(vec_json(&e.qpe));
                    Ok(row)
                })
                .collect();
            write_curve(path, &header_refs, &rows?)?;
            Some(json!({ "path": path, "points": grid.len() }))
        }
    };
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "qpe",
        "config": {
            "data": data_config(data_args),
            "x": profile.x,
            "tau": tau,
            "h": kernel_args.h,
            "kernel": kernel_args.kernel.name(),
            "interval": interval_config(interval),
            "grid_points": grid_points,
        },
        "result": {
            "qpe": vec_json(&est.qpe),
            "quantile": est.quantile,
            "theta": vec_json(&est.theta),
            "index_deriv": est.index_deriv,
            "crossed_back": est.crossed_back,
        },
    });
    if let Some(curve) = curve {
        doc["result"]["curve"] = curve;
    }
    emit(doc)
}

fn cmd_auction(
    data_args: &DataArgs,
    kernel_args: &KernelArgs,
    profile: &ProfileArg,
    grid_out: &GridOutArgs,
    u: f64,
    bidders: u32,
) -> RunResult<()> {
    let data = load(data_args)?;
    let x = profile_vector(profile, data.p())?;
    let spec = KernelSpec::new(kernel_args.kernel.family(), kernel_args.h)?;
    let auction = AuctionSpec::new(bidders)?;
    let point = EvalPoint::at_level(x.clone(), u)?;
    let value = auction_quantile(&data, &point, auction, spec)?;
    let curve = match &grid_out.grid_out {
        None => None,
        Some(path) => {
            let grid = curve_grid(grid_out, 0.1, 0.9)?;
            let rows: RunResult<Vec<Vec<f64>>> = grid
                .iter()
                .map(|&uv| {
                    let pt = EvalPoint::at_level(x.clone(), uv)?;
                    Ok(vec![uv, auction_quantile(&data, &pt, auction, spec)?])
                })
                .collect();
            write_curve(path, &["u", "valuation_quantile"], &rows?)?;
            Some(json!({ "path": path, "points": grid.len() }))
        }
    };
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "auction",
        "config": {
            "data": data_config(data_args),
            "x": profile.x,
            "u": u,
            "bidders": bidders,
            "h": kernel_args.h,
            "kernel": kernel_args.kernel.name(),
        },
        "result": { "valuation_quantile": value },
    });
    if let Some(curve) = curve {
        doc["result"]["curve"] = curve;
    }
    emit(doc)
}

/// Preset grids matching the three simulation tables: u = 0.5,
/// n ∈ {1000, 4000}, and the tables' nine bandwidths per block.
fn table_preset(table: u8) -> RunResult<(Method, Vec<f64>)> {
    match table {
        1 => Ok((
            Method::Moment,
            vec![0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 2.0, 3.0],
        )),
        2 => Ok((
            Method::Smoothed,
            vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.50],
        )),
        3 => Ok((
            Method::Aqr,
            vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.50],
        )),
        other => Err(usage(format!("--table must be 1, 2, or 3, got {other}"))),
    }
}

#[allow(clippy::too_many_arguments)] // thin dispatch of one subcommand's flags
fn cmd_simulate(
    table: u8,
    reps: usize,
    seed: u64,
    n_override: Option<Vec<usize>>,
    h_override: Option<Vec<f64>>,
    u: f64,
    kernel: KernelArg,
    symmetrize: bool,
    truth: TruthArg,
) -> RunResult<()> {
    let (method, preset_h) = table_preset(table)?;
    let config = StudyConfig {
        model: Model::Qr,
        method,
        u,
        n_values: n_override.unwrap_or_else(|| vec![1000, 4000]),
        h_values: h_override.unwrap_or(preset_h),
        replications: reps,
        seed,
        kernel: kernel.family(),
        symmetrize,
        truth: truth.convention(),
    };
    let result = run_study(&config)?;
    let mut writer = csv::Writer::from_writer(std::io::stdout());
    let mut write_all = || -> std::result::Result<(), csv::Error> {
        writer.write_record([
            "u", "n", "h", "bias_0", "bias_1", "var_0", "var_1", "mse_0", "mse_1", "failures",
        ])?;
        for row in &result.rows {
            writer.write_record([
                format!("{}", row.u),
                format!("{}", row.n),
                format!("{}", row.h),
                format!("{}", row.bias[0]),
                format!("{}", row.bias[1]),
                format!("{}", row.variance[0]),
                format!("{}", row.variance[1]),
                format!("{}", row.mse[0]),
                format!("{}", row.mse[1]),
                format!("{}", row.failures),
            ])?;
        }
        writer.flush().map_err(csv::Error::from)
    };
    if let Err(e) = write_all() {
        if csv_broken_pipe(&e) {
            return Ok(());
        }
        return Err(e.into());
    }
    eprintln!(
        "# table {table} | method {:?} | reps {reps} | seed {seed} | kernel {} | truth {} | u {u}",
        config.method,
        kernel.name(),
        truth.name(),
    );
    Ok(())
}
