//! Downstream estimators built on the coefficient fits θ̂ and their index
//! derivatives θ̂^u: conditional CDF and density under quantile regression,
//! the density-quantile function and its Powell-type variance sandwich,
//! first-price-auction valuation quantiles, and distribution-regression
//! density, quantile, and quantile partial effects.
//!
//! # Constructions
//!
//! ```text
//! F̂_{Y|X}(y, x)  = ε + ∫_ε^{1−ε} 1{x'θ̂(u) ≤ y} du        (trimmed inversion)
//! f̂_{Y|X}(y, x)  = 1 / (x'θ̂^u(F̂_{Y|X}(y, x)))            (QR density)
//! d̂_{Y|X}(u, x)  = 1 / (x'θ̂^u(u))                         (density-quantile)
//! V̂_Powell(u)    = u(1−u)·Â⁻¹ B̂ Â⁻¹,  Â = Ê[d̂·xx'], B̂ = Ê[xx']
//! Q̂_{V|X}(u, x)  = x'θ̂(u) + u·x'θ̂^u(u)/(b − 1)            (auction valuations)
//! f̂_{Y|X}(u, x)  = λ(x'θ̂(u))·x'θ̂^u(u)                     (DR density)
//! Q̂_{Y|X}(τ, x)  = inf{u : Λ(x'θ̂(u)) ≥ τ}                 (DR quantile, on a grid)
//! π̂(τ, x)        = −θ̂(Q̂)/(x'θ̂^u(Q̂))                      (quantile partial effects)
//! ```
//!
//! # Design
//!
//! * Evaluation arguments travel as an [`EvalPoint`]: a covariate profile
//!   plus exactly one of an outcome level, an index level, or a quantile
//!   level, so each estimator states which kind it consumes and mismatches
//!   are caught up front.
//! * The trimmed CDF integrates the indicator by assigning each grid point
//!   its nearest-neighbor cell inside [ε, 1−ε]; the weights sum to exactly
//!   1 − 2ε, so an indicator that is identically one gives exactly 1 − ε.
//! * The distribution-regression quantile returns the left-most *grid
//!   point* at or above the target level — no interpolation, since the
//!   fitted level path need not be monotone; any later dip back below the
//!   level is reported as a non-crossing flag, never repaired.
//! * Negative fitted densities are flagged, never clipped.  The one
//!   exception is the Powell variance plug-in, where isolated nonpositive
//!   density-quantile fits are floored at a tiny positive value (matching
//!   the variance-engine convention) and the estimator refuses to proceed
//!   when more than 5% of observations need the floor.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, IndexInterval};
use crate::deriv::{dr_theta_u, qr_theta_u};
use crate::dr::{dr_process, logistic, logistic_density};
use crate::kernel::KernelSpec;
use crate::qr::{qr_process, CoefProcess};
use crate::{Error, Result};

// ════════════════════════════════════════════════════════════════════════
// Tuning constants
// ════════════════════════════════════════════════════════════════════════

/// Default trimming constant ε for the inverted-process CDF.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Default index-grid step for the inverted-process CDF.
pub const DEFAULT_GRID_STEP: f64 = 0.005;

/// Default number of grid points for the quantile-partial-effect inversion
/// grid over the index interval.
pub const DEFAULT_QPE_GRID: usize = 401;

/// Maximum tolerated fraction of observations with a nonpositive fitted
/// density-quantile inside the Powell variance plug-in.
const POWELL_MAX_BAD_FRACTION: f64 = 0.05;

/// Floor applied to isolated nonpositive density-quantile fits inside the
/// Powell variance plug-in.
const POWELL_DENSITY_FLOOR: f64 = 1e-8;

/// Slack for the "grid covers the trimmed interval" check, absorbing
/// rounding in grid construction.
const COVERAGE_SLACK: f64 = 1e-12;

// ════════════════════════════════════════════════════════════════════════
// Evaluation points
// ════════════════════════════════════════════════════════════════════════

/// The index argument carried by an [`EvalPoint`]: exactly one of an
/// outcome level y, an index level u, or a quantile level τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalIndex {
    /// An outcome level y (response scale) — consumed by the CDF and the
    /// quantile-regression density.
    Outcome(f64),
    /// An index level u — a quantile level for quantile regression, a
    /// response-scale threshold for distribution regression.
    Level(f64),
    /// A quantile level τ ∈ (0, 1) — consumed by the
    /// distribution-regression quantile and the quantile partial effects.
    Tau(f64),
}

/// A covariate profile (intercept included) plus one index argument.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    x: DVector<f64>,
    index: EvalIndex,
}

impl EvalPoint {
    /// Point at an outcome level y.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidArgument`] on a non-finite entry or an empty profile.
    pub fn at_outcome(x: DVector<f64>, y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "outcome level must be finite, got {y}"
            )));
        }
        Self::build(x, EvalIndex::Outcome(y))
    }

    /// Point at an index level u.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidArgument`] on a non-finite entry or an empty profile.
    pub fn at_level(x: DVector<f64>, u: f64) -> Result<Self> {
        if !u.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "index level must be finite, got {u}"
            )));
        }
        Self::build(x, EvalIndex::Level(u))
    }

    /// Point at a quantile level τ ∈ (0, 1).
    ///
    /// # Errors
    ///
    /// [`Error::InvalidArgument`] when τ lies outside (0, 1), or on a
    /// non-finite entry or an empty profile.
    pub fn at_tau(x: DVector<f64>, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && 0.0 < tau && tau < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "quantile level must lie strictly inside (0, 1), got {tau}"
            )));
        }
        Self::build(x, EvalIndex::Tau(tau))
    }

    fn build(x: DVector<f64>, index: EvalIndex) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument(
                "covariate profile must not be empty".to_string(),
            ));
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "covariate profile must be finite, got entry {bad}"
            )));
        }
        Ok(EvalPoint { x, index })
    }

    /// The covariate profile.
    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    /// The index argument.
    pub fn index(&self) -> EvalIndex {
        self.index
    }

    /// The outcome level, or an error when the point carries a different
    /// kind of index.
    fn outcome(&self) -> Result<f64> {
        match self.index {
            EvalIndex::Outcome(y) => Ok(y),
            other => Err(Error::InvalidArgument(format!(
                "this estimator evaluates at an outcome level y; the point carries {other:?}"
            ))),
        }
    }

    /// The index level, or an error when the point carries a different kind
    /// of index.
    fn level(&self) -> Result<f64> {
        match self.index {
            EvalIndex::Level(u) => Ok(u),
            other => Err(Error::InvalidArgument(format!(
                "this estimator evaluates at an index level u; the point carries {other:?}"
            ))),
        }
    }

    /// The quantile level, or an error when the point carries a different
    /// kind of index.
    fn tau(&self) -> Result<f64> {
        match self.index {
            EvalIndex::Tau(tau) => Ok(tau),
            other => Err(Error::InvalidArgument(format!(
                "this estimator evaluates at a quantile level τ; the point carries {other:?}"
            ))),
        }
    }

    /// Checks the profile length against a process/dataset dimension.
    fn check_dim(&self, p: usize) -> Result<()> {
        if self.x.len() != p {
            return Err(Error::InvalidArgument(format!(
                "covariate profile has length {} but the model has {p} coefficients",
                self.x.len()
            )));
        }
        Ok(())
    }
}

/// First-price sealed-bid auction setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuctionSpec {
    bidders: u32,
}

impl AuctionSpec {
    /// Creates a setup with `bidders` ≥ 3 symmetric bidders.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidArgument`] when `bidders` < 3: the valuation recovery
    /// divides by b − 1 and is derived for more than two bidders.
    pub fn new(bidders: u32) -> Result<Self> {
        if bidders < 3 {
            return Err(Error::InvalidArgument(format!(
                "auction valuation recovery needs at least 3 bidders, got {bidders}"
            )));
        }
        Ok(AuctionSpec { bidders })
    }

    /// Number of bidders.
    pub fn bidders(&self) -> u32 {
        self.bidders
    }
}

// ════════════════════════════════════════════════════════════════════════
// Quantile-regression side
// ════════════════════════════════════════════════════════════════════════

/// The canonical trimmed index grid for the inverted-process CDF: uniform
/// from ε to 1 − ε with a step as close to `step` as exact endpoint
/// coverage allows.
///
/// # Errors
///
/// [`Error::InvalidArgument`] unless 0 < ε < 1/2 and 0 < step ≤ 1 − 2ε.
pub fn qr_cdf_grid(epsilon: f64, step: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    let span = 1.0 - 2.0 * epsilon;
    if !(step.is_finite() && 0.0 < step && step <= span) {
        return Err(Error::InvalidArgument(format!(
            "grid step must lie in (0, {span}], got {step}"
        )));
    }
    let cells = (span / step).round().max(1.0) as usize;
    Ok((0..=cells)
        .map(|i| epsilon + span * i as f64 / cells as f64)
        .collect())
}

/// Conditional CDF by inverting a fitted quantile-regression coefficient
/// process:
///
/// ```text
/// F̂_{Y|X}(y, x) = ε + ∫_ε^{1−ε} 1{x'θ̂(u) ≤ y} du,
/// ```
///
/// the integral taken as a Riemann sum over the process grid (each grid
/// point weighted by its nearest-neighbor cell within the trimmed
/// interval).  The trimming keeps the unstable extreme fits out of the
/// inversion; the value always lies in [ε, 1 − ε].
///
/// # Errors
///
/// [`Error::InvalidArgument`] when ε ∉ (0, 1/2), the point does not carry
/// an outcome level, the profile dimension mismatches the process, or the
/// process grid does not cover [ε, 1 − ε].
pub fn qr_cdf(process: &CoefProcess, point: &EvalPoint, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let y = point.outcome()?;
    point.check_dim(process.thetas.ncols())?;
    let grid = &process.grid;
    let lower = epsilon;
    let upper = 1.0 - epsilon;
    if grid[0] > lower + COVERAGE_SLACK || grid[grid.len() - 1] < upper - COVERAGE_SLACK {
        return Err(Error::InvalidArgument(format!(
            "process grid [{}, {}] does not cover the trimmed interval [{lower}, {upper}]",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    let fitted = &process.thetas * point.x();
    let mut mass = 0.0;
    for g in 0..grid.len() {
        if fitted[g] <= y {
            mass += cell_width(grid, g, lower, upper);
        }
    }
    Ok(epsilon + mass)
}

/// Width of grid point `g`'s nearest-neighbor cell inside [lower, upper].
fn cell_width(grid: &[f64], g: usize, lower: f64, upper: f64) -> f64 {
    let left = if g == 0 {
        lower
    } else {
        ((grid[g - 1] + grid[g]) / 2.0).clamp(lower, upper)
    };
    let right = if g == grid.len() - 1 {
        upper
    } else {
        ((grid[g] + grid[g + 1]) / 2.0).clamp(lower, upper)
    };
    (right - left).max(0.0)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && 0.0 < epsilon && epsilon < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "trimming constant must lie in (0, 1/2), got {epsilon}"
        )));
    }
    Ok(())
}

/// Conditional density under quantile regression, by composing the
/// inverted-process CDF with the derivative estimator:
///
/// ```text
/// f̂_{Y|X}(y, x) = 1 / (x'θ̂^u(F̂_{Y|X}(y, x))).
/// ```
///
/// Fits the coefficient process on the canonical trimmed grid (step
/// [`DEFAULT_GRID_STEP`]); [`qr_density_with`] exposes the step.
///
/// # Errors
///
/// [`Error::InvalidData`] when the derivative fit gives x'θ̂^u ≤ 0 (a
/// flat-quantile region, where the reciprocal is not a density); the
/// offending value is carried in the message.  Propagates fitting errors.
pub fn qr_density(
    data: &Dataset,
    point: &EvalPoint,
    kernel: KernelSpec,
    epsilon: f64,
) -> Result<f64> {
    qr_density_with(data, point, kernel, epsilon, DEFAULT_GRID_STEP)
}

/// [`qr_density`] with an explicit CDF grid step.
///
/// # Errors
///
/// As for [`qr_density`].
pub fn qr_density_with(
    data: &Dataset,
    point: &EvalPoint,
    kernel: KernelSpec,
    epsilon: f64,
    grid_step: f64,
) -> Result<f64> {
    point.check_dim(data.p())?;
    let grid = qr_cdf_grid(epsilon, grid_step)?;
    let process = qr_process(data, &grid)?;
    qr_density_from_process(data, &process, point, kernel, epsilon)
}

/// [`qr_density`] with a prebuilt coefficient process, so a curve of
/// densities shares one process across evaluation points.  The process must
/// have been fitted on `data` over a grid covering [ε, 1−ε].
///
/// # Errors
///
/// As for [`qr_density`].
pub fn qr_density_from_process(
    data: &Dataset,
    process: &CoefProcess,
    point: &EvalPoint,
    kernel: KernelSpec,
    epsilon: f64,
) -> Result<f64> {
    point.check_dim(data.p())?;
    let level = qr_cdf(process, point, epsilon)?;
    let est = qr_theta_u(data, level, kernel, false)?;
    let denom = point.x().dot(&est.theta_u);
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::InvalidData(format!(
            "quantile-regression density undefined: x'θ̂^u({level:.6}) = {denom} is not positive \
             (flat-quantile region)"
        )));
    }
    Ok(1.0 / denom)
}

/// Density-quantile function under quantile regression:
///
/// ```text
/// d̂_{Y|X}(u, x) = 1 / (x'θ̂^u(u)),
/// ```
///
/// the conditional density evaluated at the conditional quantile.
///
/// # Errors
///
/// [`Error::InvalidData`] when x'θ̂^u(u) ≤ 0; propagates fitting errors.
pub fn density_quantile(data: &Dataset, point: &EvalPoint, kernel: KernelSpec) -> Result<f64> {
    point.check_dim(data.p())?;
    let u = point.level()?;
    let est = qr_theta_u(data, u, kernel, false)?;
    let denom = point.x().dot(&est.theta_u);
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::InvalidData(format!(
            "density-quantile undefined: x'θ̂^u({u}) = {denom} is not positive"
        )));
    }
    Ok(1.0 / denom)
}

/// Powell-type asymptotic variance of the quantile-regression coefficients,
/// with the density-quantile plug-in:
///
/// ```text
/// V̂(u) = u(1−u) · Â⁻¹ B̂ Â⁻¹,
/// Â = (1/n)Σᵢ d̂_{Y|X}(u, Xᵢ)·XᵢXᵢ',   B̂ = (1/n)Σᵢ XᵢXᵢ',
/// d̂_{Y|X}(u, Xᵢ) = 1/(Xᵢ'θ̂^u(u)).
/// ```
///
/// Isolated nonpositive fits d̂ are floored at a tiny positive value so a
/// handful of crossed quantiles cannot make the sandwich indefinite; the
/// estimator refuses when more than 5% of observations need the floor.
/// The result is symmetrized to scrub solve rounding and is positive
/// semidefinite by construction.
///
/// # Errors
///
/// [`Error::InvalidData`] when more than 5% of observations have a
/// nonpositive fitted density-quantile (count in the message);
/// [`Error::IllConditioned`] when Â is singular; propagates fitting errors.
pub fn powell_variance(data: &Dataset, u: f64, kernel: KernelSpec) -> Result<DMatrix<f64>> {
    let est = qr_theta_u(data, u, kernel, false)?;
    let n = data.n();
    let p = data.p();
    let x = data.x();
    let denoms = x * &est.theta_u;
    let bad = denoms.iter().filter(|&&d| d <= 0.0).count();
    if (bad as f64) > POWELL_MAX_BAD_FRACTION * n as f64 {
        return Err(Error::InvalidData(format!(
            "density-quantile plug-in is nonpositive for {bad} of {n} observations; \
             the Powell variance sandwich is unreliable"
        )));
    }
    let mut weighted = DMatrix::<f64>::zeros(p, p);
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let xi = x.row(i);
        let density = if denoms[i] > 0.0 {
            (1.0 / denoms[i]).max(POWELL_DENSITY_FLOOR)
        } else {
            POWELL_DENSITY_FLOOR
        };
        for j in 0..p {
            for k in 0..p {
                let outer = xi[j] * xi[k];
                weighted[(j, k)] += density * outer;
                gram[(j, k)] += outer;
            }
        }
    }
    weighted /= n as f64;
    gram /= n as f64;
    let lu = weighted.full_piv_lu();
    let half = lu
        .solve(&gram)
        .ok_or_else(|| Error::IllConditioned("Powell variance inner matrix".into()))?;
    let full = lu
        .solve(&half.transpose())
        .ok_or_else(|| Error::IllConditioned("Powell variance inner matrix".into()))?;
    let scaled = full * (u * (1.0 - u));
    Ok((&scaled + scaled.transpose()) / 2.0)
}

/// Valuation quantile in a first-price sealed-bid auction with `b`
/// symmetric bidders, recovered from the bid quantile function:
///
/// ```text
/// Q̂_{V|X}(u, x) = x'θ̂(u) + u·x'θ̂^u(u)/(b − 1).
/// ```
///
/// Exceeds the bid quantile x'θ̂(u) whenever x'θ̂^u(u) > 0: valuations sit
/// above equilibrium bids.
///
/// # Errors
///
/// Propagates fitting errors and point-kind mismatches.
pub fn auction_quantile(
    data: &Dataset,
    point: &EvalPoint,
    spec: AuctionSpec,
    kernel: KernelSpec,
) -> Result<f64> {
    point.check_dim(data.p())?;
    let u = point.level()?;
    let est = qr_theta_u(data, u, kernel, false)?;
    let bid = point.x().dot(&est.fit.theta);
    let slope = point.x().dot(&est.theta_u);
    Ok(bid + u * slope / (spec.bidders() as f64 - 1.0))
}

// ════════════════════════════════════════════════════════════════════════
// Distribution-regression side
// ════════════════════════════════════════════════════════════════════════

/// A fitted density value together with its sign diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlaggedDensity {
    /// The fitted density λ(x'θ̂(u))·x'θ̂^u(u) — possibly negative in finite
    /// samples, returned as computed.
    pub value: f64,
    /// Whether the value is negative.
    pub negative: bool,
}

/// Conditional density under distribution regression:
///
/// ```text
/// f̂_{Y|X}(u, x) = λ(x'θ̂(u)) · x'θ̂^u(u).
/// ```
///
/// The value may be negative in finite samples; it is flagged, never
/// clipped.  Interior u is recommended — within one bandwidth of the index
/// boundary the derivative carries first-order boundary bias.
///
/// # Errors
///
/// Propagates fitting errors and point-kind mismatches.
pub fn dr_density(
    data: &Dataset,
    point: &EvalPoint,
    kernel: KernelSpec,
    interval: IndexInterval,
) -> Result<FlaggedDensity> {
    point.check_dim(data.p())?;
    let u = point.level()?;
    let est = dr_theta_u(data, u, kernel, Some(interval))?;
    let value = logistic_density(point.x().dot(&est.fit.theta)) * point.x().dot(&est.theta_u);
    Ok(FlaggedDensity {
        value,
        negative: value < 0.0,
    })
}

/// A grid quantile together with its monotonicity diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridQuantile {
    /// The left-most grid point whose fitted level reaches the target.
    pub u: f64,
    /// Position of that point in the process grid.
    pub grid_index: usize,
    /// Whether the fitted level path dips back below the target after the
    /// returned point — the fitted CDF is non-monotone there (reported,
    /// never repaired).
    pub crossed_back: bool,
}

/// Conditional quantile under distribution regression, by inverting the
/// fitted CDF path on the process grid:
///
/// ```text
/// Q̂_{Y|X}(τ, x) = inf{u : Λ(x'θ̂(u)) ≥ τ},
/// ```
///
/// realized as the left-most grid point at or above level τ.  No
/// interpolation: the fitted path need not be monotone, and the grid
/// resolution is the precision knob.
///
/// # Errors
///
/// [`Error::InvalidData`] when the fitted level never reaches τ on the
/// grid; [`Error::InvalidArgument`] on a point-kind or dimension mismatch.
pub fn dr_quantile(process: &CoefProcess, point: &EvalPoint) -> Result<GridQuantile> {
    let tau = point.tau()?;
    point.check_dim(process.thetas.ncols())?;
    let fitted = &process.thetas * point.x();
    let levels: Vec<f64> = fitted.iter().map(|&s| logistic(s)).collect();
    let Some(first) = levels.iter().position(|&lv| lv >= tau) else {
        let max = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::InvalidData(format!(
            "the fitted distribution never reaches level τ = {tau} on the grid \
             (maximum fitted level {max:.6})"
        )));
    };
    let crossed_back = levels[first + 1..].iter().any(|&lv| lv < tau);
    Ok(GridQuantile {
        u: process.grid[first],
        grid_index: first,
        crossed_back,
    })
}

/// A quantile-partial-effect estimate with its stored parts, so the
/// defining identity π̂ = −θ̂(Q̂)/(x'θ̂^u(Q̂)) can be verified directly.
#[derive(Debug, Clone, PartialEq)]
pub struct QpeEstimate {
    /// The partial-effect vector −θ̂(Q̂)/(x'θ̂^u(Q̂)).  The intercept
    /// component is reported but is not a partial effect.
    pub qpe: DVector<f64>,
    /// The inverted conditional quantile Q̂_{Y|X}(τ, x) (a grid point).
    pub quantile: f64,
    /// The coefficient fit θ̂(Q̂) at that grid point.
    pub theta: DVector<f64>,
    /// The index-derivative denominator x'θ̂^u(Q̂).
    pub index_deriv: f64,
    /// Whether the fitted CDF path was non-monotone past the inverted
    /// quantile.
    pub crossed_back: bool,
}

/// Quantile partial effects under distribution regression: the derivative
/// of the conditional quantile in the covariates, by the implicit function
/// theorem applied to Λ(x'θ̂(u)) = τ at u = Q̂_{Y|X}(τ, x):
///
/// ```text
/// π̂(τ, x) = −θ̂(Q̂_{Y|X}(τ, x)) / (x'θ̂^u(Q̂_{Y|X}(τ, x))).
/// ```
///
/// The quantile is inverted on a uniform grid of [`DEFAULT_QPE_GRID`]
/// points over the index interval; [`qpe_with`] exposes the grid size.
/// The interval must lie strictly inside the observed response range: a
/// threshold at or beyond every observation separates the
/// distribution-regression likelihood and the fit at that grid point
/// fails.
///
/// # Errors
///
/// [`Error::InvalidData`] when the denominator x'θ̂^u(Q̂) is zero (the
/// implicit function theorem degenerates) or the fitted CDF never reaches
/// τ; propagates fitting errors.
pub fn qpe(
    data: &Dataset,
    point: &EvalPoint,
    kernel: KernelSpec,
    interval: IndexInterval,
) -> Result<QpeEstimate> {
    qpe_with(data, point, kernel, interval, DEFAULT_QPE_GRID)
}

/// [`qpe`] with an explicit inversion-grid size (≥ 2 points).
///
/// # Errors
///
/// As for [`qpe`], plus [`Error::InvalidArgument`] when `grid_points` < 2.
pub fn qpe_with(
    data: &Dataset,
    point: &EvalPoint,
    kernel: KernelSpec,
    interval: IndexInterval,
    grid_points: usize,
) -> Result<QpeEstimate> {
    let grid = qpe_grid(interval, grid_points)?;
    let process = dr_process(data, &grid)?;
    qpe_from_process(data, &process, point, kernel, interval)
}

/// The uniform quantile-inversion grid [`qpe_with`] fits its process on:
/// `grid_points` equally spaced thresholds spanning `interval`.
///
/// # Errors
///
/// [`Error::InvalidArgument`] when `grid_points` < 2.
pub fn qpe_grid(interval: IndexInterval, grid_points: usize) -> Result<Vec<f64>> {
    if grid_points < 2 {
        return Err(Error::InvalidArgument(format!(
            "quantile inversion needs at least 2 grid points, got {grid_points}"
        )));
    }
    let span = interval.u_upper - interval.u_lower;
    Ok((0..grid_points)
        .map(|i| interval.u_lower + span * i as f64 / (grid_points - 1) as f64)
        .collect())
}

/// [`qpe`] with a prebuilt coefficient process, so a curve of partial
/// effects across τ shares one process.  The process must have been fitted
/// on `data` over a grid spanning `interval`.
///
/// # Errors
///
/// As for [`qpe`].
pub fn qpe_from_process(
    data: &Dataset,
    process: &CoefProcess,
    point: &EvalPoint,
    kernel: KernelSpec,
    interval: IndexInterval,
) -> Result<QpeEstimate> {
    point.check_dim(data.p())?;
    let _ = point.tau()?;
    let quantile = dr_quantile(process, point)?;
    let theta = process.theta_at(quantile.grid_index);
    let est = dr_theta_u(data, quantile.u, kernel, Some(interval))?;
    let index_deriv = point.x().dot(&est.theta_u);
    if index_deriv == 0.0 || !index_deriv.is_finite() {
        return Err(Error::InvalidData(format!(
            "quantile partial effect undefined: x'θ̂^u({}) = {index_deriv}",
            quantile.u
        )));
    }
    Ok(QpeEstimate {
        qpe: -&theta / index_deriv,
        quantile: quantile.u,
        theta,
        index_deriv,
        crossed_back: quantile.crossed_back,
    })
}

// ════════════════════════════════════════════════════════════════════════
// Tests
// ════════════════════════════════════════════════════════════════════════

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;
    use crate::mc::dgp_sample;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Open01, StandardNormal};

    fn triangular(h: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::Triangular, h).expect("valid bandwidth")
    }

    /// An index interval strictly inside the observed response range,
    /// trimming `trim` order statistics at each end so no threshold on it
    /// separates the distribution-regression likelihood.
    fn interior_interval(data: &Dataset, trim: usize) -> IndexInterval {
        let mut sorted: Vec<f64> = data.y().iter().cloned().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite responses"));
        IndexInterval::new(sorted[trim], sorted[sorted.len() - 1 - trim]).expect("interval")
    }

    /// Intercept-only process with x'θ(u) = u on the canonical grid.
    fn identity_process(epsilon: f64, step: f64) -> CoefProcess {
        let grid = qr_cdf_grid(epsilon, step).expect("grid");
        let thetas = DMatrix::from_fn(grid.len(), 1, |g, _| grid[g]);
        CoefProcess {
            grid,
            thetas,
        }
    }

    // ── evaluation points ───────────────────────────────────────────────

    #[test]
    fn point_constructors_validate() {
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert!(EvalPoint::at_outcome(x.clone(), f64::NAN).is_err());
        assert!(EvalPoint::at_level(x.clone(), f64::INFINITY).is_err());
        assert!(EvalPoint::at_tau(x.clone(), 0.0).is_err());
        assert!(EvalPoint::at_tau(x.clone(), 1.0).is_err());
        assert!(EvalPoint::at_tau(DVector::from_vec(vec![f64::NAN]), 0.5).is_err());
        assert!(EvalPoint::at_tau(DVector::zeros(0), 0.5).is_err());
        assert!(EvalPoint::at_tau(x, 0.5).is_ok());
    }

    #[test]
    fn point_kind_mismatch_is_rejected() {
        let process = identity_process(0.01, 0.005);
        let level_point = EvalPoint::at_level(DVector::from_element(1, 1.0), 0.5).expect("point");
        assert!(matches!(
            qr_cdf(&process, &level_point, 0.01),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn auction_spec_needs_three_bidders() {
        assert!(AuctionSpec::new(2).is_err());
        assert_eq!(AuctionSpec::new(3).expect("valid").bidders(), 3);
    }

    // ── trimmed CDF ─────────────────────────────────────────────────────

    #[test]
    fn cdf_saturates_at_the_trimming_bounds() {
        let process = identity_process(0.01, 0.005);
        let x = DVector::from_element(1, 1.0);
        let below = EvalPoint::at_outcome(x.clone(), -5.0).expect("point");
        let above = EvalPoint::at_outcome(x, 5.0).expect("point");
        assert_eq!(qr_cdf(&process, &below, 0.01).expect("cdf"), 0.01);
        let high = qr_cdf(&process, &above, 0.01).expect("cdf");
        assert!((high - 0.99).abs() < 1e-12, "got {high}");
    }

    #[test]
    fn cdf_inverts_a_monotone_process() {
        let process = identity_process(0.01, 0.005);
        let x = DVector::from_element(1, 1.0);
        for y in [0.25, 0.5, 0.75] {
            let point = EvalPoint::at_outcome(x.clone(), y).expect("point");
            let value = qr_cdf(&process, &point, 0.01).expect("cdf");
            assert!(
                (value - y).abs() <= 0.005,
                "inverting at {y} gave {value}"
            );
        }
    }

    #[test]
    fn cdf_is_monotone_in_the_outcome() {
        let data = dgp_sample(300, 21).expect("sample");
        let grid = qr_cdf_grid(0.01, 0.01).expect("grid");
        let process = qr_process(&data, &grid).expect("process");
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let mut last = 0.0;
        for y in [-3.0, -1.0, 0.0, 1.0, 2.0, 5.0] {
            let point = EvalPoint::at_outcome(x.clone(), y).expect("point");
            let value = qr_cdf(&process, &point, 0.01).expect("cdf");
            assert!(value >= last, "CDF decreased: {value} after {last}");
            last = value;
        }
    }

    #[test]
    fn cdf_requires_coverage_of_the_trimmed_interval() {
        let grid: Vec<f64> = (0..=60).map(|i| 0.2 + 0.01 * i as f64).collect();
        let thetas = DMatrix::from_fn(grid.len(), 1, |g, _| grid[g]);
        let process = CoefProcess { grid, thetas };
        let point = EvalPoint::at_outcome(DVector::from_element(1, 1.0), 0.5).expect("point");
        assert!(matches!(
            qr_cdf(&process, &point, 0.01),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn cdf_rejects_bad_trimming() {
        let process = identity_process(0.01, 0.005);
        let point = EvalPoint::at_outcome(DVector::from_element(1, 1.0), 0.5).expect("point");
        assert!(qr_cdf(&process, &point, 0.0).is_err());
        assert!(qr_cdf(&process, &point, 0.5).is_err());
    }

    #[test]
    fn cdf_grid_hits_both_endpoints() {
        let grid = qr_cdf_grid(0.01, 0.005).expect("grid");
        assert_eq!(grid[0], 0.01);
        assert!((grid[grid.len() - 1] - 0.99).abs() < 1e-15);
        let step = grid[1] - grid[0];
        assert!((step - 0.005).abs() < 1e-12, "step {step}");
    }

    // ── QR density and density-quantile ─────────────────────────────────

    #[test]
    fn qr_density_recovers_the_design_density() {
        // At x = (1, 1), y = Q(0.5, x) = 1 the design density is
        // λ(0)/(1 + 1) = 1/8; a modest sample should land in a loose band.
        let data = dgp_sample(1500, 33).expect("sample");
        let point =
            EvalPoint::at_outcome(DVector::from_vec(vec![1.0, 1.0]), 1.0).expect("point");
        let f = qr_density_with(&data, &point, triangular(1.0), 0.01, 0.01).expect("density");
        assert!(f > 0.0);
        assert!((0.05..0.25).contains(&f), "density {f} far from 0.125");
    }

    #[test]
    fn qr_density_is_the_reciprocal_of_the_derivative_fit() {
        let data = dgp_sample(400, 5).expect("sample");
        let kernel = triangular(1.2);
        let point =
            EvalPoint::at_outcome(DVector::from_vec(vec![1.0, 1.0]), 1.0).expect("point");
        let f = qr_density_with(&data, &point, kernel, 0.01, 0.01).expect("density");
        // Recompute the composition's parts along the same path.
        let grid = qr_cdf_grid(0.01, 0.01).expect("grid");
        let process = qr_process(&data, &grid).expect("process");
        let level = qr_cdf(&process, &point, 0.01).expect("cdf");
        let est = qr_theta_u(&data, level, kernel, false).expect("deriv");
        let denom = point.x().dot(&est.theta_u);
        assert!((f * denom - 1.0).abs() < 1e-12, "product {}", f * denom);
    }

    #[test]
    fn density_quantile_matches_the_design_value() {
        // d(0.5, x) = u(1−u)/(1+x) = 0.125 at x = (1, 1).
        let data = dgp_sample(1500, 8).expect("sample");
        let point = EvalPoint::at_level(DVector::from_vec(vec![1.0, 1.0]), 0.5).expect("point");
        let d = density_quantile(&data, &point, triangular(1.0)).expect("density-quantile");
        assert!((0.05..0.25).contains(&d), "density-quantile {d}");
        // Reciprocal identity against the same derivative fit.
        let est = qr_theta_u(&data, 0.5, triangular(1.0), false).expect("deriv");
        let denom = point.x().dot(&est.theta_u);
        assert!((d * denom - 1.0).abs() < 1e-12);
    }

    // ── Powell variance ─────────────────────────────────────────────────

    #[test]
    fn powell_variance_is_symmetric_psd() {
        let data = dgp_sample(600, 13).expect("sample");
        let v = powell_variance(&data, 0.5, triangular(1.0)).expect("variance");
        assert_eq!(v.nrows(), 2);
        assert!((v[(0, 1)] - v[(1, 0)]).abs() < 1e-12);
        let eigen = v.clone().symmetric_eigen();
        for lambda in eigen.eigenvalues.iter() {
            assert!(*lambda > -1e-10, "negative eigenvalue {lambda}");
        }
    }

    #[test]
    fn powell_variance_reduces_to_the_classical_scalar() {
        // Intercept-only: V̂ = u(1−u)·(θ̂^u)², the classical sample-quantile
        // asymptotic variance with the density-quantile plug-in.
        let n = 500;
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let y = DVector::from_fn(n, |_, _| {
            let v: f64 = rng.sample(Open01);
            (v / (1.0 - v)).ln()
        });
        let x = DMatrix::from_element(n, 1, 1.0);
        let data = Dataset::with_response_name(
            y,
            x,
            vec!["intercept".to_string()],
            "y".to_string(),
        )
        .expect("dataset");
        let u = 0.5;
        let kernel = triangular(1.0);
        let v = powell_variance(&data, u, kernel).expect("variance");
        let est = qr_theta_u(&data, u, kernel, false).expect("deriv");
        let expected = u * (1.0 - u) * est.theta_u[0] * est.theta_u[0];
        assert!(
            ((v[(0, 0)] - expected) / expected).abs() < 1e-9,
            "{} vs {expected}",
            v[(0, 0)]
        );
    }

    // ── auction quantiles ───────────────────────────────────────────────

    #[test]
    fn auction_markup_matches_the_formula() {
        let data = dgp_sample(500, 17).expect("sample");
        let kernel = triangular(1.2);
        let u = 0.5;
        let point = EvalPoint::at_level(DVector::from_vec(vec![1.0, 1.0]), u).expect("point");
        let spec = AuctionSpec::new(4).expect("spec");
        let value = auction_quantile(&data, &point, spec, kernel).expect("auction");
        let est = qr_theta_u(&data, u, kernel, false).expect("deriv");
        let bid = point.x().dot(&est.fit.theta);
        let slope = point.x().dot(&est.theta_u);
        let markup = u * slope / 3.0;
        assert!(
            ((value - bid) - markup).abs() < 1e-12 * (1.0 + markup.abs()),
            "markup mismatch: {} vs {markup}",
            value - bid
        );
        assert!(value > bid, "valuations must exceed bids when the slope is positive");
    }

    // ── DR density, quantile, and QPE ───────────────────────────────────

    #[test]
    fn dr_density_flags_sign_consistently() {
        let data = dgp_sample(500, 19).expect("sample");
        let interval =
            IndexInterval::new(data.y().min(), data.y().max()).expect("interval");
        let point = EvalPoint::at_level(DVector::from_vec(vec![1.0, 1.0]), 1.0).expect("point");
        let f = dr_density(&data, &point, triangular(1.0), interval).expect("density");
        assert!(f.value.is_finite());
        assert_eq!(f.negative, f.value < 0.0);
    }

    fn synthetic_level_process(thetas: &[f64], grid: &[f64]) -> CoefProcess {
        CoefProcess {
            grid: grid.to_vec(),
            thetas: DMatrix::from_fn(thetas.len(), 1, |g, _| thetas[g]),
        }
    }

    #[test]
    fn dr_quantile_returns_the_leftmost_crossing_grid_point() {
        let grid = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        // Λ(−0.2) ≈ 0.45 < 0.5 ≤ Λ(0.3): the crossing lands on grid[3].
        let process = synthetic_level_process(&[-3.0, -1.0, -0.2, 0.3, 1.0, 2.0], &grid);
        let point = EvalPoint::at_tau(DVector::from_element(1, 1.0), 0.5).expect("point");
        let q = dr_quantile(&process, &point).expect("quantile");
        assert_eq!(q.u, 1.0);
        assert_eq!(q.grid_index, 3);
        assert!(!q.crossed_back);
    }

    #[test]
    fn dr_quantile_reports_noncrossing() {
        let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
        // Dips back below the target after the first crossing.
        let process = synthetic_level_process(&[-1.0, 0.3, -0.4, 0.5, 1.0], &grid);
        let point = EvalPoint::at_tau(DVector::from_element(1, 1.0), 0.5).expect("point");
        let q = dr_quantile(&process, &point).expect("quantile");
        assert_eq!(q.u, -1.0);
        assert!(q.crossed_back);
    }

    #[test]
    fn dr_quantile_errors_when_the_level_is_unreachable() {
        let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let process = synthetic_level_process(&[-3.0, -2.0, -1.0, 0.0, 2.0], &grid);
        let point = EvalPoint::at_tau(DVector::from_element(1, 1.0), 0.999).expect("point");
        assert!(matches!(
            dr_quantile(&process, &point),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn dr_quantile_inverts_an_empirical_cdf() {
        // Intercept-only distribution regression fits Λ(θ̂(u)) to the
        // empirical CDF, so the grid quantile tracks the sample quantile.
        let n = 500;
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y = DVector::from_vec(draws.clone());
        let x = DMatrix::from_element(n, 1, 1.0);
        let data = Dataset::with_response_name(
            y,
            x,
            vec!["intercept".to_string()],
            "y".to_string(),
        )
        .expect("dataset");
        // Keep the grid strictly inside the sample range so no threshold
        // separates the likelihood.
        let lo = draws.iter().cloned().fold(f64::INFINITY, f64::min) + 0.1;
        let hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 0.1;
        let cells = 120;
        let step = (hi - lo) / cells as f64;
        let grid: Vec<f64> = (0..=cells).map(|i| lo + step * i as f64).collect();
        let process = dr_process(&data, &grid).expect("process");
        let point = EvalPoint::at_tau(DVector::from_element(1, 1.0), 0.5).expect("point");
        let q = dr_quantile(&process, &point).expect("quantile");
        draws.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let sample_median = draws[n / 2];
        assert!(
            (q.u - sample_median).abs() <= 2.0 * step,
            "grid quantile {} vs sample median {sample_median}",
            q.u
        );
    }

    #[test]
    fn qpe_satisfies_its_defining_identity() {
        let data = dgp_sample(400, 29).expect("sample");
        let interval = interior_interval(&data, 10);
        let point =
            EvalPoint::at_tau(DVector::from_vec(vec![1.0, 1.0]), 0.5).expect("point");
        let est = qpe_with(&data, &point, triangular(1.0), interval, 201).expect("qpe");
        for j in 0..2 {
            let identity = -est.theta[j] / est.index_deriv;
            assert!(
                (est.qpe[j] - identity).abs() < 1e-12,
                "component {j}: {} vs {identity}",
                est.qpe[j]
            );
        }
        // The inverted quantile reaches the target level.
        let grid_fit = logistic(point.x().dot(&est.theta));
        assert!(grid_fit >= 0.5, "fitted level {grid_fit} below τ");
    }

    #[test]
    fn qpe_recovers_a_location_shift_effect() {
        // Y = 1 + 2·X + ε with logistic ε: the distribution regression is
        // correctly specified with θ(u) = (u − 1, −2), θ^u = (1, 0), so the
        // slope QPE is −(−2)/1 = 2 — the true ∂Q/∂x.
        let n = 2000;
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let mut y = DVector::<f64>::zeros(n);
        let mut x = DMatrix::<f64>::zeros(n, 2);
        for i in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(Open01);
            let eps = (v / (1.0 - v)).ln();
            x[(i, 0)] = 1.0;
            x[(i, 1)] = xi;
            y[i] = 1.0 + 2.0 * xi + eps;
        }
        let data = Dataset::with_response_name(
            y,
            x,
            vec!["intercept".to_string(), "x".to_string()],
            "y".to_string(),
        )
        .expect("dataset");
        let interval = interior_interval(&data, 10);
        let point = EvalPoint::at_tau(DVector::from_vec(vec![1.0, 0.0]), 0.5).expect("point");
        let est = qpe_with(&data, &point, triangular(1.0), interval, 201).expect("qpe");
        assert!(
            (est.qpe[1] - 2.0).abs() < 0.6,
            "slope QPE {} far from 2",
            est.qpe[1]
        );
    }

    #[test]
    fn qpe_rejects_a_degenerate_grid() {
        let data = dgp_sample(200, 37).expect("sample");
        let interval =
            IndexInterval::new(data.y().min(), data.y().max()).expect("interval");
        let point =
            EvalPoint::at_tau(DVector::from_vec(vec![1.0, 1.0]), 0.5).expect("point");
        assert!(matches!(
            qpe_with(&data, &point, triangular(1.0), interval, 1),
            Err(Error::InvalidArgument(_))
        ));
    }
}
