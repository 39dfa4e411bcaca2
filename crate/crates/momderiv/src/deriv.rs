//! Derivative engine: θ̂^u(u) = −M̂^θ(θ̂(u))⁻¹ M̂^u and its variance
//! estimators.
//!
//! A function-valued parameter u ↦ θ_o(u) identified by the moment condition
//! M(θ, u) = E[m(Z, θ, u)] = 0 has, under smoothness and invertibility of the
//! Jacobian M^θ = ∂M/∂θ', the derivative
//!
//! ```text
//!     θ_o^u(u) = −M^θ(θ_o(u), u)⁻¹ · M^u(θ_o(u), u),
//! ```
//!
//! an implicit-function-theorem identity.  This module provides sample
//! analogues of the two building blocks for quantile regression (QR) and
//! distribution regression (DR), the assembly step, and variance estimators.
//!
//! # Building blocks
//!
//! **QR** (index u = quantile level, moment m = (1{Y ≤ X'θ} − u)X):
//! - M^u = −E\[X\] is estimated by the exact sample mean: [`qr_m_u`].
//! - M^θ = E\[f_{Y|X}(X'θ|X) XX'\] involves a conditional density and is
//!   estimated by kernel smoothing of the residual indicator ([`qr_m_theta`]):
//!
//!   ```text
//!       M̂^θ_jk = (1/(n κ₂)) Σ_i X_{k,i} · sign(X_{j,i}) · K̄_h(R_i / |X_{j,i}|),
//!   ```
//!
//!   with R_i = Y_i − X_i'θ, K̄_h(s) = K̄(s/h)/h, and κ₂ = ∫t²K(t)dt.  The
//!   derivation smooths each moment component in the direction of its own
//!   regressor, which is why row j rescales residuals by |X_{j,i}| — and why
//!   observations with X_{j,i} = 0 drop from row j (the sign(·) factor
//!   vanishes together with the would-be division).
//!
//! **DR** (index u = response threshold, moment m = (1{Y ≤ u} − Λ(X'θ))X):
//! - M^θ = −E\[λ(X'θ) XX'\] is smooth in θ and estimated by its exact sample
//!   average: [`dr_m_theta`].
//! - M^u = E\[f_{Y|X}(u|X) X\] involves the conditional density in the *index*
//!   direction and is estimated by a local-linear smooth of the threshold
//!   indicator over v ∈ \[u_*, u^*\] ([`dr_m_u`]), including the exact
//!   boundary truncation of the defining integral.
//!
//! [`assemble_theta_u`] solves the linear system (never forming an inverse),
//! and [`qr_theta_u`] / [`dr_theta_u`] compose fit → blocks → assembly into a
//! [`DerivEstimate`].
//!
//! # Variance estimators
//!
//! The leading noise in θ̂^u comes from the kernel-smoothed block (the other
//! block and θ̂(u) itself converge at the faster √n rate), giving a variance
//! of order (nh)⁻¹.  Both estimators return V̂ normalized so that
//! Var(θ̂^u) ≈ V̂/(nh):
//!
//! - [`qr_variance`] simulates the sampling noise of M̂^θ: it builds the
//!   p²×p² covariance of the vectorized Jacobian from a closed-form kernel
//!   cross-integral, draws S Gaussian matrices Â_s from it, pushes each
//!   through the delta map T̂_s = M̂^θ⁻¹ Â_s M̂^θ⁻¹ M̂^u, and averages
//!   T̂_s T̂_s'.
//! - [`dr_variance`] is the plug-in sandwich
//!   Γ(1) · M̂^θ⁻¹ (n⁻¹ Σ f̂_i x_i x_i') M̂^θ⁻¹ with
//!   f̂_i = λ(x_i'θ̂) x_i'θ̂^u and Γ(1) = ∫K̄²/κ₂².
//!
//! # Design
//!
//! - Linear systems are solved by fully pivoted LU after an SVD-based
//!   condition estimate (threshold [`CONDITION_LIMIT`]); p is small, so
//!   stability is prioritized over speed.
//! - Kernel-window starvation in [`qr_m_theta`] (fewer than
//!   [`KERNEL_WINDOW_MIN`] observations inside row j's window) is reported
//!   through [`MomentJacobian::window_counts`] rather than by failing: a
//!   starved window is a bandwidth-choice symptom, not an invalid input.
//! - Nonpositive fitted density values inside variance plug-ins are floored
//!   at [`DENSITY_FLOOR`] and counted ([`VarianceEstimate::floored_observations`]);
//!   flooring keeps the covariance positive semidefinite while making the
//!   intervention observable.  Estimates themselves are never floored.
//! - The Gaussian simulation in [`qr_variance`] derives one RNG substream per
//!   draw from the caller's seed, so results are bit-identical for a given
//!   (data, seed) pair regardless of scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, IndexInterval};
use crate::dr::{dr_fit, logistic_density};
use crate::kernel::{
    kappa_moment, kbar, kbar_cross_integral, KernelConstants, KernelFamily, KernelSpec,
};
use crate::qr::{qr_fit, CoefEstimate};
use crate::{Error, Result};

// ════════════════════════════════════════════════════════════════════════
// Tuning constants
// ════════════════════════════════════════════════════════════════════════

/// Minimum number of observations inside a kernel window before a row of the
/// QR Jacobian counts as adequately supported; see
/// [`MomentJacobian::starved_rows`].
pub const KERNEL_WINDOW_MIN: usize = 10;

/// Condition-number threshold above which a moment Jacobian is refused for
/// assembly.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Per-observation floor applied to fitted conditional densities inside
/// variance plug-ins (never inside point estimates).
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Minimum admissible number of Gaussian draws for [`qr_variance`].
pub const MIN_VARIANCE_DRAWS: usize = 100;

/// Fraction of covariance trace removed by PSD repair above which the repair
/// should be treated as a red flag by callers; compare against
/// [`VarianceEstimate::clip_trace_fraction`].
pub const PSD_CLIP_WARN_FRACTION: f64 = 0.10;

// ════════════════════════════════════════════════════════════════════════
// Result types
// ════════════════════════════════════════════════════════════════════════

/// Estimated moment Jacobian M̂^θ (p×p) with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentJacobian {
    /// The estimated Jacobian ∂M/∂θ' at the evaluation point.
    pub matrix: DMatrix<f64>,
    /// Whether (M̂ + M̂')/2 symmetrization was applied.  When set, `matrix`
    /// equals its transpose exactly.
    pub symmetrized: bool,
    /// For kernel-smoothed Jacobians (QR): entry j counts the observations
    /// with X_{j,i} ≠ 0 whose residual lies inside row j's kernel window,
    /// |Y_i − X_i'θ| ≤ h·|X_{j,i}|.  Empty for exact sample-average Jacobians
    /// (DR), which involve no window.
    pub window_counts: Vec<usize>,
}

impl MomentJacobian {
    /// Rows whose kernel window holds fewer than [`KERNEL_WINDOW_MIN`]
    /// observations — a sign the bandwidth is too small for the sample (or a
    /// regressor is mostly zero).  Always empty for exact Jacobians.
    pub fn starved_rows(&self) -> Vec<usize> {
        self.window_counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c < KERNEL_WINDOW_MIN)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Estimated index derivative M̂^u (length p) of the moment function.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentUDeriv {
    /// The estimated derivative ∂M/∂u at the evaluation point.
    pub vector: DVector<f64>,
}

/// A derivative estimate θ̂^u(u) together with the parts it was assembled
/// from.
///
/// The stored parts reproduce the estimate: θ̂^u solves
/// M̂^θ · θ̂^u = −M̂^u, so the residual ‖M̂^θ θ̂^u + M̂^u‖∞ is at the level
/// of solver round-off (≤ 1e−10·‖M̂^u‖∞).
#[derive(Debug, Clone, PartialEq)]
pub struct DerivEstimate {
    /// Index value the derivative was taken at.
    pub u: f64,
    /// The derivative estimate θ̂^u(u).
    pub theta_u: DVector<f64>,
    /// Underlying coefficient fit θ̂(u) the Jacobian was evaluated at.
    pub fit: CoefEstimate,
    /// Estimated Jacobian block M̂^θ(θ̂(u)).
    pub m_theta: MomentJacobian,
    /// Estimated index-derivative block M̂^u.
    pub m_u: MomentUDeriv,
    /// Kernel family used by the smoothed block.
    pub kernel_family: KernelFamily,
    /// Bandwidth used by the kernel-smoothed block.
    pub h: f64,
    /// Estimated asymptotic variance V̂(u) when one has been attached; the
    /// finite-sample approximation is Var(θ̂^u) ≈ `variance_scale` · V̂.
    pub variance: Option<DMatrix<f64>>,
    /// The (nh)⁻¹ convention relating `variance` to the sampling variance of
    /// `theta_u`.
    pub variance_scale: f64,
}

/// An estimated asymptotic variance matrix with the diagnostics of the
/// interventions that produced it.
///
/// `matrix` is normalized so that Var(θ̂^u) ≈ matrix/(nh); it is symmetric
/// and positive semidefinite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    /// The estimated variance V̂(u), on the (nh)⁻¹ scale.
    pub matrix: DMatrix<f64>,
    /// Observations whose fitted conditional density was nonpositive and got
    /// floored at [`DENSITY_FLOOR`] — a symptom of finite-sample quantile
    /// crossing (non-monotone fitted process) near the evaluation point.
    pub floored_observations: usize,
    /// Fraction of the simulation covariance's trace removed when clipping
    /// negative eigenvalues during PSD repair.  Zero up to round-off when the
    /// covariance is well formed; values above [`PSD_CLIP_WARN_FRACTION`]
    /// deserve scrutiny.
    pub clip_trace_fraction: f64,
}

// ════════════════════════════════════════════════════════════════════════
// Moment blocks: QR
// ════════════════════════════════════════════════════════════════════════

/// Index-derivative block for quantile regression: M̂^u = −(1/n) Σ_i X_i.
///
/// The QR moment is m = (1{Y ≤ X'θ} − u)X, whose u-derivative −X does not
/// depend on unknowns; the estimator is the exact (negated) column mean of
/// the design matrix.
pub fn qr_m_u(data: &Dataset) -> MomentUDeriv {
    let n = data.n() as f64;
    let mut vector = DVector::zeros(data.p());
    for i in 0..data.n() {
        for k in 0..data.p() {
            vector[k] += data.x()[(i, k)];
        }
    }
    vector /= -n;
    MomentUDeriv { vector }
}

/// Kernel-smoothed Jacobian block for quantile regression.
///
/// Entry (j, k) is
///
/// ```text
///     M̂^θ_jk = (1/(n κ₂)) Σ_i X_{k,i} · sign(X_{j,i}) · K̄_h(R_i / |X_{j,i}|),
/// ```
///
/// with residual R_i = Y_i − X_i'θ and K̄_h(s) = K̄(s/h)/h.  Observations
/// with X_{j,i} = 0 contribute nothing to row j (sign(0) = 0 removes the
/// division before it happens).  With `symmetrize` set, the result is
/// replaced by (M̂ + M̂')/2 — both variants estimate the same symmetric
/// population matrix E[f_{Y|X}(X'θ|X) XX'].
///
/// Per-row window occupancy is recorded in
/// [`window_counts`](MomentJacobian::window_counts); rows with fewer than
/// [`KERNEL_WINDOW_MIN`] in-window observations signal a bandwidth too small
/// for the sample.
///
/// # Errors
///
/// [`Error::InvalidArgument`] if `theta` has the wrong length or non-finite
/// entries.
pub fn qr_m_theta(
    data: &Dataset,
    theta: &DVector<f64>,
    kernel: KernelSpec,
    symmetrize: bool,
) -> Result<MomentJacobian> {
    check_theta(theta, data.p())?;
    let (n, p) = (data.n(), data.p());
    let h = kernel.h;
    let kappa2 = KernelConstants::new(kernel.family).kappa2;

    let resid = data.y() - data.x() * theta;
    let mut matrix = DMatrix::zeros(p, p);
    let mut window_counts = vec![0usize; p];
    for i in 0..n {
        for j in 0..p {
            let xj = data.x()[(i, j)];
            if xj == 0.0 {
                continue;
            }
            // K̄_h(R/|X_j|) = K̄(R/(|X_j|·h))/h, evaluated once per row.
            let weight = kbar(kernel, resid[i] / (xj.abs() * h)) / h;
            if resid[i].abs() <= h * xj.abs() {
                window_counts[j] += 1;
            }
            if weight == 0.0 {
                continue;
            }
            let signed = xj.signum() * weight;
            for k in 0..p {
                matrix[(j, k)] += data.x()[(i, k)] * signed;
            }
        }
    }
    matrix /= n as f64 * kappa2;
    if symmetrize {
        matrix = (&matrix + matrix.transpose()) / 2.0;
    }
    Ok(MomentJacobian {
        matrix,
        symmetrized: symmetrize,
        window_counts,
    })
}

// ════════════════════════════════════════════════════════════════════════
// Moment blocks: DR
// ════════════════════════════════════════════════════════════════════════

/// Exact Jacobian block for distribution regression:
/// M̂^θ = −(1/n) Σ_i λ(X_i'θ) X_i X_i'.
///
/// The DR moment is smooth in θ, so no kernel enters; the result is exactly
/// symmetric (the upper triangle is accumulated once and mirrored) and
/// negative semidefinite because λ > 0.
///
/// # Errors
///
/// [`Error::InvalidArgument`] if `theta` has the wrong length or non-finite
/// entries.
pub fn dr_m_theta(data: &Dataset, theta: &DVector<f64>) -> Result<MomentJacobian> {
    check_theta(theta, data.p())?;
    let (n, p) = (data.n(), data.p());
    let eta = data.x() * theta;
    let mut matrix = DMatrix::zeros(p, p);
    for i in 0..n {
        let lam = logistic_density(eta[i]);
        for j in 0..p {
            for k in j..p {
                matrix[(j, k)] += lam * data.x()[(i, j)] * data.x()[(i, k)];
            }
        }
    }
    matrix /= -(n as f64);
    for j in 0..p {
        for k in 0..j {
            matrix[(j, k)] = matrix[(k, j)];
        }
    }
    Ok(MomentJacobian {
        matrix,
        symmetrized: true,
        window_counts: Vec::new(),
    })
}

/// Local-linear index-derivative block for distribution regression, with
/// exact boundary truncation to the admissible interval \[u_*, u^*\].
///
/// The estimand is M^u(u) = E\[f_{Y|X}(u|X) X\]; the estimator is the
/// local-linear slope of the threshold process v ↦ (1/n) Σ_i 1{Y_i ≤ v} X_i,
/// smoothed over v ∈ \[u_*, u^*\].  Writing s_i = (Y_i − u)/h and cuts
/// A = (u_* − u)/h, B = (u^* − u)/h, each observation contributes
///
/// ```text
///     g_i = K̄(clamp(s_i, A, B)) − K̄(B) − 1{Y_i ≤ u} · κ_{1,h}(u),
/// ```
///
/// and M̂^u(u) = (1/(n·h·κ_{2,h}(u))) Σ_i g_i X_i.  The first two terms are
/// the defining truncated integral ∫_{max(s_i,A)}^{B} t K(t) dt written
/// through the pseudo-kernel; the third centers the boundary-asymmetric
/// window.  κ_{1,h}(u) is evaluated as K̄(A) − K̄(B) (the same quantity, in
/// pseudo-kernel form), with two consequences worth knowing:
///
/// - observations outside the truncated window (Y_i ≤ u_* or Y_i > u^*)
///   contribute *exactly* zero — below the lower end, the truncated integral
///   and the centering term cancel bit-for-bit;
/// - for interior u (further than h from both ends) the whole expression
///   collapses to the familiar (1/(n κ₂)) Σ_i K̄_h(Y_i − u) X_i, since then
///   κ_{1,h} = 0, K̄(B) = 0, and the clamp is inactive.
///
/// # Errors
///
/// [`Error::InvalidArgument`] if u lies outside `interval` or the effective
/// kernel window has zero mass (κ_{2,h}(u) = 0).
pub fn dr_m_u(
    data: &Dataset,
    u: f64,
    kernel: KernelSpec,
    interval: IndexInterval,
) -> Result<MomentUDeriv> {
    if !u.is_finite() || !interval.contains(u) {
        return Err(Error::InvalidArgument(format!(
            "threshold u = {u} lies outside the index interval [{}, {}]",
            interval.u_lower, interval.u_upper
        )));
    }
    let h = kernel.h;
    let lower_cut = (interval.u_lower - u) / h;
    let upper_cut = (interval.u_upper - u) / h;
    let kappa2h = kappa_moment(kernel, 2, lower_cut, upper_cut);
    if kappa2h <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "empty effective kernel support at u = {u}: κ_{{2,h}}(u) = {kappa2h} \
             (index interval [{}, {}], h = {h})",
            interval.u_lower, interval.u_upper
        )));
    }

    let kbar_upper = kbar(kernel, upper_cut);
    // κ_{1,h}(u) = ∫ t K(t) dt over the cut range = K̄(A) − K̄(B); the
    // pseudo-kernel form cancels bit-exactly against the truncated integral
    // for observations below the lower end.
    let kappa1h = kbar(kernel, lower_cut) - kbar_upper;
    let mut vector = DVector::zeros(data.p());
    for i in 0..data.n() {
        let s = (data.y()[i] - u) / h;
        let mut g = kbar(kernel, s.clamp(lower_cut, upper_cut)) - kbar_upper;
        if data.y()[i] <= u {
            g -= kappa1h;
        }
        if g == 0.0 {
            continue;
        }
        for k in 0..data.p() {
            vector[k] += g * data.x()[(i, k)];
        }
    }
    vector /= data.n() as f64 * h * kappa2h;
    Ok(MomentUDeriv { vector })
}

// ════════════════════════════════════════════════════════════════════════
// Assembly
// ════════════════════════════════════════════════════════════════════════

/// Solves θ̂^u = −M̂^θ⁻¹ M̂^u by fully pivoted LU (no explicit inverse).
///
/// The Jacobian's condition number is estimated from its singular values
/// first; anything at or above [`CONDITION_LIMIT`] is refused.
///
/// # Errors
///
/// [`Error::IllConditioned`] for a singular or numerically untrustworthy
/// Jacobian (the message carries the condition estimate);
/// [`Error::InvalidArgument`] on dimension mismatch.
pub fn assemble_theta_u(m_theta: &MomentJacobian, m_u: &MomentUDeriv) -> Result<DVector<f64>> {
    let p = m_u.vector.len();
    if m_theta.matrix.nrows() != p || m_theta.matrix.ncols() != p {
        return Err(Error::InvalidArgument(format!(
            "Jacobian is {}×{} but the index derivative has length {p}",
            m_theta.matrix.nrows(),
            m_theta.matrix.ncols()
        )));
    }
    let sv = m_theta.matrix.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond.is_nan() || cond >= CONDITION_LIMIT {
        return Err(Error::IllConditioned(format!(
            "moment Jacobian (condition estimate {cond:.3e})"
        )));
    }
    m_theta
        .matrix
        .clone()
        .full_piv_lu()
        .solve(&(-&m_u.vector))
        .ok_or_else(|| Error::IllConditioned("moment Jacobian (LU solve failed)".to_string()))
}

/// Quantile-regression derivative estimate at quantile level u:
/// fits θ̂(u), evaluates [`qr_m_theta`] there and [`qr_m_u`], and assembles
/// θ̂^u(u) = −M̂^θ⁻¹ M̂^u.
///
/// # Errors
///
/// Propagates fit, validation, and conditioning failures from the composed
/// steps.
pub fn qr_theta_u(
    data: &Dataset,
    u: f64,
    kernel: KernelSpec,
    symmetrize: bool,
) -> Result<DerivEstimate> {
    let fit = qr_fit(data, u)?;
    let m_theta = qr_m_theta(data, &fit.theta, kernel, symmetrize)?;
    let m_u = qr_m_u(data);
    let theta_u = assemble_theta_u(&m_theta, &m_u)?;
    Ok(DerivEstimate {
        u,
        theta_u,
        fit,
        m_theta,
        m_u,
        kernel_family: kernel.family,
        h: kernel.h,
        variance: None,
        variance_scale: 1.0 / (data.n() as f64 * kernel.h),
    })
}

/// Distribution-regression derivative estimate at threshold u:
/// fits θ̂(u), evaluates [`dr_m_theta`] there and [`dr_m_u`], and assembles
/// θ̂^u(u) = −M̂^θ⁻¹ M̂^u.
///
/// `interval` is the admissible threshold interval \[u_*, u^*\] used for
/// boundary truncation; when `None`, it defaults to the observed response
/// range \[min Y, max Y\].
///
/// # Errors
///
/// Propagates fit, validation, and conditioning failures from the composed
/// steps.
pub fn dr_theta_u(
    data: &Dataset,
    u: f64,
    kernel: KernelSpec,
    interval: Option<IndexInterval>,
) -> Result<DerivEstimate> {
    let interval = match interval {
        Some(iv) => iv,
        None => IndexInterval::new(data.y().min(), data.y().max())?,
    };
    let fit = dr_fit(data, u)?;
    let m_theta = dr_m_theta(data, &fit.theta)?;
    let m_u = dr_m_u(data, u, kernel, interval)?;
    let theta_u = assemble_theta_u(&m_theta, &m_u)?;
    Ok(DerivEstimate {
        u,
        theta_u,
        fit,
        m_theta,
        m_u,
        kernel_family: kernel.family,
        h: kernel.h,
        variance: None,
        variance_scale: 1.0 / (data.n() as f64 * kernel.h),
    })
}

// ════════════════════════════════════════════════════════════════════════
// Variance estimators
// ════════════════════════════════════════════════════════════════════════

/// Simulation-based variance estimator for the QR derivative.
///
/// The dominant sampling noise in θ̂^u is the kernel-smoothed Jacobian's, at
/// rate (nh)⁻¹ — the sample mean M̂^u and the fit θ̂(u) are √n-consistent
/// and drop out of the leading term.  The estimator therefore:
///
/// 1. builds the p²×p² covariance Σ̂ of √(nh)·vec(M̂^θ − M^θ) from the
///    closed-form sample analogue
///
///    ```text
///        Σ̂[(j,k),(l,m)] = (1/(n κ₂²)) Σ_i X_{k,i} X_{m,i} ·
///            sign(X_{j,i} X_{l,i}) · |X_{j,i}| ·
///            f_×(|X_{j,i}|/|X_{l,i}|) · d̂_i,
///    ```
///
///    where f_×(r) = ∫K̄(s)K̄(sr)ds ([`kbar_cross_integral`]) and
///    d̂_i = 1/(X_i'θ̂^u) estimates the conditional density at the fitted
///    quantile.  The identity |a|·f_×(|a|/|b|) = |b|·f_×(|b|/|a|) makes Σ̂
///    symmetric, and each observation's contribution is a Kronecker product
///    of two Gram matrices, so Σ̂ is positive semidefinite whenever all
///    d̂_i ≥ 0 — an eigenvalue clip at zero repairs round-off (and any
///    flooring-related) leakage, with the removed trace fraction reported;
/// 2. draws S mean-zero Gaussian matrices Â_s with covariance Σ̂
///    (vec index (j,k) ↦ j·p + k), one RNG substream per draw;
/// 3. pushes each draw through the delta map
///    T̂_s = M̂^θ⁻¹ Â_s M̂^θ⁻¹ M̂^u and returns V̂ = (1/S) Σ_s T̂_s T̂_s'.
///
/// Var(θ̂^u) ≈ V̂/(nh).  Deterministic given (data, est, S, seed).
///
/// # Errors
///
/// [`Error::InvalidArgument`] if `S < `[`MIN_VARIANCE_DRAWS`] or `est` does
/// not match the dataset's dimension; [`Error::IllConditioned`] if the stored
/// Jacobian cannot be factorized.
pub fn qr_variance(
    data: &Dataset,
    est: &DerivEstimate,
    s_draws: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    if s_draws < MIN_VARIANCE_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "variance simulation needs at least {MIN_VARIANCE_DRAWS} draws, got {s_draws}"
        )));
    }
    let p = data.p();
    if est.theta_u.len() != p {
        return Err(Error::InvalidArgument(format!(
            "derivative estimate has dimension {} but the dataset has {p} regressors",
            est.theta_u.len()
        )));
    }

    // Fitted density-quantile reciprocals, floored to keep Σ̂ PSD.
    let mut floored = 0usize;
    let mut dhat = DVector::zeros(data.n());
    for i in 0..data.n() {
        let slope = data.x().row(i).transpose().dot(&est.theta_u);
        let d = if slope > 0.0 { 1.0 / slope } else { -1.0 };
        dhat[i] = if d > 0.0 {
            d
        } else {
            floored += 1;
            DENSITY_FLOOR
        };
    }

    let kernel = KernelSpec::new(est.kernel_family, est.h)?;
    let cov = vec_jacobian_cov(data, &dhat, kernel);
    let (root, clip_trace_fraction) = psd_root(cov);

    // Factor the delta map once: T̂_s = M̂^θ⁻¹ Â_s a with a = M̂^θ⁻¹ M̂^u.
    let lu = est.m_theta.matrix.clone().full_piv_lu();
    let a = lu
        .solve(&est.m_u.vector)
        .ok_or_else(|| Error::IllConditioned("moment Jacobian (LU solve failed)".to_string()))?;

    let mut vhat = DMatrix::zeros(p, p);
    let mut z = DVector::zeros(p * p);
    for s in 0..s_draws {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let vec_a = &root * &z;
        let a_s = DMatrix::from_fn(p, p, |j, k| vec_a[j * p + k]);
        let t = lu
            .solve(&(&a_s * &a))
            .ok_or_else(|| Error::IllConditioned("moment Jacobian (LU solve failed)".to_string()))?;
        vhat.ger(1.0, &t, &t, 1.0);
    }
    vhat /= s_draws as f64;
    let vhat = (&vhat + vhat.transpose()) / 2.0;
    Ok(VarianceEstimate {
        matrix: vhat,
        floored_observations: floored,
        clip_trace_fraction,
    })
}

/// Plug-in sandwich variance estimator for the DR derivative:
///
/// ```text
///     V̂(u) = Γ(1) · M̂^θ⁻¹ (n⁻¹ Σ_i f̂_i x_i x_i') M̂^θ⁻¹,
///     f̂_i  = λ(x_i'θ̂(u)) · x_i'θ̂^u(u),
/// ```
///
/// with Γ(1) = ∫K̄²/κ₂² the kernel's variance constant.  Nonpositive f̂_i
/// (finite-sample non-monotonicity) are floored at [`DENSITY_FLOOR`] and
/// counted; the sandwich is then symmetric PSD by construction, with the
/// same eigenvalue-clip safety net as [`qr_variance`].  Var(θ̂^u) ≈ V̂/(nh).
///
/// # Errors
///
/// [`Error::InvalidArgument`] on dimension mismatch;
/// [`Error::IllConditioned`] if the stored Jacobian cannot be factorized.
pub fn dr_variance(data: &Dataset, est: &DerivEstimate) -> Result<VarianceEstimate> {
    let p = data.p();
    if est.theta_u.len() != p || est.fit.theta.len() != p {
        return Err(Error::InvalidArgument(format!(
            "derivative estimate has dimension {} but the dataset has {p} regressors",
            est.theta_u.len()
        )));
    }
    let gamma1 = KernelConstants::new(est.kernel_family).gamma(1.0);

    let mut floored = 0usize;
    let mut inner = DMatrix::zeros(p, p);
    for i in 0..data.n() {
        let xi = data.x().row(i).transpose();
        let fhat = logistic_density(xi.dot(&est.fit.theta)) * xi.dot(&est.theta_u);
        let fhat = if fhat > 0.0 {
            fhat
        } else {
            floored += 1;
            DENSITY_FLOOR
        };
        inner.ger(fhat, &xi, &xi, 1.0);
    }
    inner /= data.n() as f64;
    let inner = (&inner + inner.transpose()) / 2.0;

    let lu = est.m_theta.matrix.clone().full_piv_lu();
    let half = lu
        .solve(&inner)
        .ok_or_else(|| Error::IllConditioned("moment Jacobian (LU solve failed)".to_string()))?;
    let vhat = lu
        .solve(&half.transpose())
        .ok_or_else(|| Error::IllConditioned("moment Jacobian (LU solve failed)".to_string()))?
        * gamma1;
    let vhat = (&vhat + vhat.transpose()) / 2.0;
    let (clipped, clip_trace_fraction) = clip_psd(vhat);
    Ok(VarianceEstimate {
        matrix: clipped,
        floored_observations: floored,
        clip_trace_fraction,
    })
}

// ════════════════════════════════════════════════════════════════════════
// Internals
// ════════════════════════════════════════════════════════════════════════

/// Validates a coefficient vector against the design dimension.
fn check_theta(theta: &DVector<f64>, p: usize) -> Result<()> {
    if theta.len() != p {
        return Err(Error::InvalidArgument(format!(
            "coefficient vector has length {} but the design has {p} columns",
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "coefficient vector has non-finite entries".to_string(),
        ));
    }
    Ok(())
}

/// Sample covariance of √(nh)·vec(M̂^θ − M^θ) for the QR Jacobian, given
/// per-observation density weights (already floored positive).
///
/// Observation i contributes d̂_i · H_i ⊗ (x_i x_i') with
/// H_i[j,l] = sign(X_{j,i} X_{l,i}) · |X_{j,i}| · f_×(|X_{j,i}|/|X_{l,i}|);
/// H_i is a signed Gram matrix (PSD), so the total is PSD.  H_i is built
/// explicitly symmetric so the result is symmetric to the bit.
pub(crate) fn vec_jacobian_cov(
    data: &Dataset,
    dhat: &DVector<f64>,
    kernel: KernelSpec,
) -> DMatrix<f64> {
    let (n, p) = (data.n(), data.p());
    let kappa2 = KernelConstants::new(kernel.family).kappa2;
    let mut cov = DMatrix::zeros(p * p, p * p);
    let mut hmat = DMatrix::zeros(p, p);
    for i in 0..n {
        for j in 0..p {
            let xj = data.x()[(i, j)].abs();
            for l in j..p {
                let xl = data.x()[(i, l)].abs();
                let entry = if xj == 0.0 || xl == 0.0 {
                    0.0
                } else {
                    let sign = (data.x()[(i, j)] * data.x()[(i, l)]).signum();
                    sign * xj * kbar_cross_integral(kernel, xj / xl)
                };
                hmat[(j, l)] = entry;
                hmat[(l, j)] = entry;
            }
        }
        let d = dhat[i];
        for j in 0..p {
            for l in 0..p {
                let hd = hmat[(j, l)] * d;
                if hd == 0.0 {
                    continue;
                }
                for k in 0..p {
                    for m in 0..p {
                        cov[(j * p + k, l * p + m)] += hd * data.x()[(i, k)] * data.x()[(i, m)];
                    }
                }
            }
        }
    }
    cov /= n as f64 * kappa2 * kappa2;
    cov
}

/// Eigen-clips a symmetric matrix to PSD and returns a factor L with
/// LL' = clipped matrix, plus the clipped fraction of the trace.
fn psd_root(cov: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let dim = cov.nrows();
    let trace = cov.trace();
    let eig = cov.symmetric_eigen();
    let mut removed = 0.0;
    let mut scale = DVector::zeros(dim);
    for (r, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 0.0 {
            scale[r] = lam.sqrt();
        } else {
            removed -= lam;
        }
    }
    let mut root = eig.eigenvectors;
    for c in 0..dim {
        root.column_mut(c).scale_mut(scale[c]);
    }
    let fraction = if trace > 0.0 { removed / trace } else { 0.0 };
    (root, fraction)
}

/// Eigen-clips a symmetric matrix to PSD, returning the repaired matrix and
/// the clipped fraction of the trace.
fn clip_psd(mat: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let trace = mat.trace();
    let mut eig = mat.symmetric_eigen();
    let mut removed = 0.0;
    for lam in eig.eigenvalues.iter_mut() {
        if *lam < 0.0 {
            removed -= *lam;
            *lam = 0.0;
        }
    }
    let repaired = eig.recompose();
    let repaired = (&repaired + repaired.transpose()) / 2.0;
    let fraction = if trace > 0.0 { removed / trace } else { 0.0 };
    (repaired, fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kbar_h;
    use approx::assert_relative_eq;

    /// Tolerance for identities that are exact up to a handful of float ops.
    const EXACT: f64 = 1e-12;
    /// Tolerance for solver-mediated reproductions.
    const SOLVE: f64 = 1e-10;

    fn dataset(y: Vec<f64>, x_cols: Vec<Vec<f64>>) -> Dataset {
        let n = y.len();
        let p = x_cols.len();
        let x = DMatrix::from_fn(n, p, |i, j| x_cols[j][i]);
        let names = (0..p).map(|j| format!("x{j}")).collect();
        Dataset::new(DVector::from_vec(y), x, names).expect("test dataset")
    }

    fn intercept_only(y: Vec<f64>) -> Dataset {
        let n = y.len();
        dataset(y, vec![vec![1.0; n]])
    }

    /// Deterministic mixed-sign test design: intercept plus one signed
    /// regressor, response with spread controlled by the regressor.
    fn signed_design(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut y = Vec::with_capacity(n);
        let mut x1 = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            x1.push(z);
            y.push(0.5 + 0.8 * z + (1.0 + 0.3 * z.abs()) * v);
        }
        dataset(y, vec![vec![1.0; n], x1])
    }

    fn triangular(h: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::Triangular, h).unwrap()
    }

    // ── qr_m_u ──────────────────────────────────────────────────────────

    #[test]
    fn qr_m_u_is_negated_column_mean() {
        let ones = intercept_only(vec![1.0, 2.0, 3.0]);
        assert_eq!(qr_m_u(&ones).vector[0], -1.0);

        let d = dataset(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![0.0, 2.0]]);
        let m_u = qr_m_u(&d);
        assert_eq!(m_u.vector[0], -1.0);
        assert_eq!(m_u.vector[1], -1.0);
    }

    // ── qr_m_theta ──────────────────────────────────────────────────────

    #[test]
    fn qr_m_theta_single_observation_closed_form() {
        // One observation at zero residual: entry = K̄(0)/κ₂ = (1/6)/(1/6).
        let d = intercept_only(vec![0.0]);
        let m = qr_m_theta(&d, &DVector::from_vec(vec![0.0]), triangular(1.0), false).unwrap();
        assert_relative_eq!(m.matrix[(0, 0)], 1.0, epsilon = EXACT);
        assert_eq!(m.window_counts, vec![1]);
    }

    #[test]
    fn qr_m_theta_vanishes_outside_window() {
        // All residuals exceed h·|x_j| for every j, so every entry is zero.
        let d = dataset(
            vec![10.0, -12.0, 11.0],
            vec![vec![1.0, 1.0, 1.0], vec![0.5, -0.5, 0.25]],
        );
        let m = qr_m_theta(&d, &DVector::zeros(2), triangular(1.0), false).unwrap();
        assert_eq!(m.matrix, DMatrix::zeros(2, 2));
        assert_eq!(m.window_counts, vec![0, 0]);
        assert_eq!(m.starved_rows(), vec![0, 1]);
    }

    #[test]
    fn qr_m_theta_skips_zero_regressors() {
        // Second regressor is zero for the first observation: row 1 sees only
        // the second observation; row 0 sees both.
        let d = dataset(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![0.0, 2.0]]);
        let m = qr_m_theta(&d, &DVector::zeros(2), triangular(1.0), false).unwrap();
        assert!(m.matrix.iter().all(|v| v.is_finite()));
        assert_eq!(m.window_counts, vec![2, 1]);
        // Row 1, column 0: only obs 2 contributes, with x_1 = 2 > 0:
        // (1/(n κ₂)) · 1 · K̄(0/(2h))/h = (1/2)·(1/6)/(1/6) · ... = K̄(0)/(2κ₂).
        let kappa2 = KernelConstants::new(KernelFamily::Triangular).kappa2;
        let expected = kbar(triangular(1.0), 0.0) / (2.0 * kappa2);
        assert_relative_eq!(m.matrix[(1, 0)], expected, epsilon = EXACT);
    }

    #[test]
    fn qr_m_theta_symmetrize_averages_transpose() {
        let d = signed_design(80, 7);
        let theta = DVector::from_vec(vec![0.5, 0.8]);
        let plain = qr_m_theta(&d, &theta, triangular(0.8), false).unwrap();
        let sym = qr_m_theta(&d, &theta, triangular(0.8), true).unwrap();
        let expected = (&plain.matrix + plain.matrix.transpose()) / 2.0;
        assert_eq!(sym.matrix, expected);
        assert_eq!(sym.matrix, sym.matrix.transpose());
        assert!(sym.symmetrized);
        assert!(!plain.symmetrized);
        assert_eq!(sym.window_counts, plain.window_counts);
    }

    #[test]
    fn qr_m_theta_rejects_bad_theta() {
        let d = intercept_only(vec![0.0, 1.0]);
        assert!(qr_m_theta(&d, &DVector::zeros(2), triangular(1.0), false).is_err());
        assert!(qr_m_theta(
            &d,
            &DVector::from_vec(vec![f64::NAN]),
            triangular(1.0),
            false
        )
        .is_err());
    }

    // ── dr_m_theta ──────────────────────────────────────────────────────

    #[test]
    fn dr_m_theta_intercept_only_at_zero() {
        let d = intercept_only(vec![0.0, 1.0, 2.0]);
        let m = dr_m_theta(&d, &DVector::zeros(1)).unwrap();
        assert_relative_eq!(m.matrix[(0, 0)], -0.25, epsilon = EXACT);
        assert!(m.symmetrized);
        assert!(m.window_counts.is_empty());
        assert!(m.starved_rows().is_empty());
    }

    #[test]
    fn dr_m_theta_outer_product_by_hand() {
        // At θ = 0, each observation contributes −0.25·x x'; two rows (1, 2)
        // and (1, −1) average to −0.25·[[1, 0.5], [0.5, 2.5]].
        let d = dataset(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![2.0, -1.0]]);
        let m = dr_m_theta(&d, &DVector::zeros(2)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-0.25, -0.125, -0.125, -0.625]);
        for (a, b) in m.matrix.iter().zip(expected.iter()) {
            assert_relative_eq!(a, b, epsilon = EXACT);
        }
    }

    #[test]
    fn dr_m_theta_exactly_symmetric() {
        let d = signed_design(60, 11);
        let m = dr_m_theta(&d, &DVector::from_vec(vec![0.3, -0.7])).unwrap();
        assert_eq!(m.matrix, m.matrix.transpose());
        // Negative semidefinite: both eigenvalues of the 2×2 are ≤ 0.
        let eig = m.matrix.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l <= EXACT));
    }

    // ── dr_m_u ──────────────────────────────────────────────────────────

    #[test]
    fn dr_m_u_interior_single_observation() {
        // Observation at the evaluation point, interior: K̄(0)/(h·κ₂) = 1/h.
        for h in [0.25, 1.0, 2.0] {
            let d = intercept_only(vec![5.0]);
            let iv = IndexInterval::new(-100.0, 100.0).unwrap();
            let m = dr_m_u(&d, 5.0, triangular(h), iv).unwrap();
            assert_relative_eq!(m.vector[0], 1.0 / h, epsilon = EXACT);
        }
    }

    #[test]
    fn dr_m_u_vanishes_outside_support() {
        let d = intercept_only(vec![3.0, -3.0, 4.0]);
        let iv = IndexInterval::new(-100.0, 100.0).unwrap();
        let m = dr_m_u(&d, 0.0, triangular(1.0), iv).unwrap();
        assert_eq!(m.vector[0], 0.0);
    }

    #[test]
    fn dr_m_u_interior_matches_simple_representation() {
        let d = signed_design(120, 3);
        let iv = IndexInterval::new(-1e6, 1e6).unwrap();
        let spec = triangular(0.7);
        let m = dr_m_u(&d, 0.4, spec, iv).unwrap();
        // Interior shortcut computed independently: (1/(nκ₂)) Σ K̄_h(y−u)·x.
        let kappa2 = KernelConstants::new(KernelFamily::Triangular).kappa2;
        let mut simple = DVector::zeros(2);
        for i in 0..d.n() {
            let w = kbar_h(spec, d.y()[i] - 0.4);
            simple[0] += w * d.x()[(i, 0)];
            simple[1] += w * d.x()[(i, 1)];
        }
        simple /= d.n() as f64 * kappa2;
        for k in 0..2 {
            assert_relative_eq!(m.vector[k], simple[k], epsilon = EXACT);
        }
    }

    #[test]
    fn dr_m_u_below_lower_boundary_contributes_exactly_zero() {
        // u sits half a bandwidth above the lower end; an observation at the
        // lower end must contribute nothing.  Compare the one-dataset sum
        // against the augmented dataset: Σg doubles the normalization only.
        let (h, u_star) = (0.5, 0.0);
        let u = u_star + 0.25 * h;
        let iv = IndexInterval::new(u_star, 10.0).unwrap();
        let base = intercept_only(vec![u + 0.05]);
        let with_edge = intercept_only(vec![u + 0.05, u_star - 0.3, u_star]);
        let m1 = dr_m_u(&base, u, triangular(h), iv).unwrap();
        let m3 = dr_m_u(&with_edge, u, triangular(h), iv).unwrap();
        assert_eq!(m3.vector[0], m1.vector[0] / 3.0);
    }

    #[test]
    fn dr_m_u_boundary_differs_from_interior_shortcut() {
        // Near the boundary the truncation and centering matter: the exact
        // form and the interior shortcut disagree.
        let d = signed_design(120, 3);
        let y_min = d.y().min();
        let h = 0.8;
        let u = y_min + 0.4 * h;
        let iv = IndexInterval::new(y_min, d.y().max()).unwrap();
        let spec = triangular(h);
        let exact = dr_m_u(&d, u, spec, iv).unwrap();
        let kappa2 = KernelConstants::new(KernelFamily::Triangular).kappa2;
        let mut simple = DVector::zeros(2);
        for i in 0..d.n() {
            let w = kbar_h(spec, d.y()[i] - u);
            simple[0] += w * d.x()[(i, 0)];
            simple[1] += w * d.x()[(i, 1)];
        }
        simple /= d.n() as f64 * kappa2;
        assert!((exact.vector[0] - simple[0]).abs() > 1e-3);
    }

    #[test]
    fn dr_m_u_rejects_out_of_interval_and_empty_support() {
        let d = intercept_only(vec![0.5]);
        let iv = IndexInterval::new(0.0, 1.0).unwrap();
        assert!(dr_m_u(&d, 2.0, triangular(0.1), iv).is_err());

        // An index interval so narrow the kernel window mass underflows.
        let tiny = IndexInterval::new(0.0, 1e-300).unwrap();
        let err = dr_m_u(&d, 5e-301, triangular(1.0), tiny);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    // ── assemble_theta_u ────────────────────────────────────────────────

    #[test]
    fn assemble_identity_and_diagonal() {
        let m_u = MomentUDeriv {
            vector: DVector::from_vec(vec![1.0, 1.0]),
        };
        let neg_identity = MomentJacobian {
            matrix: -DMatrix::identity(2, 2),
            symmetrized: true,
            window_counts: Vec::new(),
        };
        let out = assemble_theta_u(&neg_identity, &m_u).unwrap();
        assert_relative_eq!(out[0], 1.0, epsilon = EXACT);
        assert_relative_eq!(out[1], 1.0, epsilon = EXACT);

        let diag = MomentJacobian {
            matrix: DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -4.0]),
            symmetrized: true,
            window_counts: Vec::new(),
        };
        let out = assemble_theta_u(&diag, &m_u).unwrap();
        assert_relative_eq!(out[0], 0.5, epsilon = EXACT);
        assert_relative_eq!(out[1], 0.25, epsilon = EXACT);
    }

    #[test]
    fn assemble_rejects_singular_jacobian() {
        let m_u = MomentUDeriv {
            vector: DVector::from_vec(vec![1.0, 1.0]),
        };
        let singular = MomentJacobian {
            matrix: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
            symmetrized: false,
            window_counts: Vec::new(),
        };
        match assemble_theta_u(&singular, &m_u) {
            Err(Error::IllConditioned(msg)) => assert!(msg.contains("condition")),
            other => panic!("expected IllConditioned, got {other:?}"),
        }
    }

    #[test]
    fn assemble_residual_is_tiny() {
        let m_theta = MomentJacobian {
            matrix: DMatrix::from_row_slice(2, 2, &[1.3, -0.4, 0.2, 2.1]),
            symmetrized: false,
            window_counts: Vec::new(),
        };
        let m_u = MomentUDeriv {
            vector: DVector::from_vec(vec![-0.7, 1.9]),
        };
        let x = assemble_theta_u(&m_theta, &m_u).unwrap();
        let resid = &m_theta.matrix * &x + &m_u.vector;
        assert!(resid.amax() <= SOLVE * m_u.vector.amax());
    }

    // ── composed estimates ──────────────────────────────────────────────

    #[test]
    fn qr_theta_u_intercept_only_is_reciprocal_density() {
        // With a single intercept column, θ̂(u) is the sample quantile and
        // θ̂^u(u) = 1/f̂(θ̂) for the pseudo-kernel density estimate
        // f̂(q) = (1/(n h κ₂)) Σ K̄((y_i − q)/h).
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let y: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let d = intercept_only(y);
        let spec = triangular(0.5);
        let est = qr_theta_u(&d, 0.5, spec, false).unwrap();

        let q = est.fit.theta[0];
        let kappa2 = KernelConstants::new(KernelFamily::Triangular).kappa2;
        let fhat: f64 = d.y().iter().map(|&yi| kbar_h(spec, yi - q)).sum::<f64>()
            / (d.n() as f64 * kappa2);
        assert_relative_eq!(est.theta_u[0], 1.0 / fhat, epsilon = 1e-6);
        assert_eq!(est.u, 0.5);
        assert_eq!(est.h, 0.5);
        assert_relative_eq!(
            est.variance_scale,
            1.0 / (200.0 * 0.5),
            epsilon = EXACT
        );
        assert!(est.variance.is_none());
    }

    #[test]
    fn qr_theta_u_parts_reproduce_estimate() {
        let d = signed_design(150, 5);
        let est = qr_theta_u(&d, 0.5, triangular(1.0), false).unwrap();
        let resid = &est.m_theta.matrix * &est.theta_u + &est.m_u.vector;
        assert!(resid.amax() <= SOLVE * est.m_u.vector.amax());
    }

    #[test]
    fn dr_theta_u_intercept_only_scalar_assembly() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..150).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let d = intercept_only(y);
        let est = dr_theta_u(&d, 0.2, triangular(0.4), None).unwrap();
        // Scalar assembly: θ̂^u = M̂^u / λ(θ̂).
        let lam = logistic_density(est.fit.theta[0]);
        assert_relative_eq!(est.theta_u[0], est.m_u.vector[0] / lam, epsilon = SOLVE);
    }

    #[test]
    fn dr_theta_u_default_interval_is_response_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let y: Vec<f64> = (0..150).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let d = intercept_only(y.clone());
        let iv = IndexInterval::new(d.y().min(), d.y().max()).unwrap();
        let defaulted = dr_theta_u(&d, 0.1, triangular(0.4), None).unwrap();
        let explicit = dr_theta_u(&d, 0.1, triangular(0.4), Some(iv)).unwrap();
        assert_eq!(defaulted.theta_u, explicit.theta_u);
    }

    #[test]
    fn dr_theta_u_boundary_recomputation_consistent() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let y: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let d = intercept_only(y);
        let (h, y_min) = (0.6, d.y().min());
        let u = y_min + 0.5 * h;
        let iv = IndexInterval::new(y_min, d.y().max()).unwrap();
        let est = dr_theta_u(&d, u, triangular(h), Some(iv)).unwrap();
        let m_u = dr_m_u(&d, u, triangular(h), iv).unwrap();
        assert_eq!(est.m_u.vector, m_u.vector);
    }

    // ── qr_variance ─────────────────────────────────────────────────────

    #[test]
    fn qr_variance_deterministic_and_seed_sensitive() {
        let d = signed_design(100, 31);
        let est = qr_theta_u(&d, 0.5, triangular(1.0), false).unwrap();
        let v1 = qr_variance(&d, &est, 300, 7).unwrap();
        let v2 = qr_variance(&d, &est, 300, 7).unwrap();
        let v3 = qr_variance(&d, &est, 300, 8).unwrap();
        assert_eq!(v1.matrix, v2.matrix);
        assert_ne!(v1.matrix, v3.matrix);
    }

    #[test]
    fn qr_variance_rejects_too_few_draws() {
        let d = signed_design(100, 31);
        let est = qr_theta_u(&d, 0.5, triangular(1.0), false).unwrap();
        assert!(matches!(
            qr_variance(&d, &est, MIN_VARIANCE_DRAWS - 1, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn qr_variance_stabilizes_in_draw_count() {
        let d = signed_design(120, 13);
        let est = qr_theta_u(&d, 0.5, triangular(1.0), false).unwrap();
        let small = qr_variance(&d, &est, 100_000, 1).unwrap();
        let large = qr_variance(&d, &est, 200_000, 1).unwrap();
        for k in 0..2 {
            assert_relative_eq!(
                small.matrix[(k, k)],
                large.matrix[(k, k)],
                max_relative = 0.02
            );
        }
    }

    #[test]
    fn qr_variance_symmetric_psd_with_clean_diagnostics() {
        let d = signed_design(150, 19);
        let est = qr_theta_u(&d, 0.5, triangular(1.0), false).unwrap();
        let v = qr_variance(&d, &est, 500, 3).unwrap();
        assert_eq!(v.matrix, v.matrix.transpose());
        let eig = v.matrix.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -EXACT));
        // All fitted slopes positive in this design, and the Kronecker-Gram
        // construction is PSD: nothing floored, nothing clipped.
        assert_eq!(v.floored_observations, 0);
        assert!(v.clip_trace_fraction < 1e-10);
    }

    #[test]
    fn qr_variance_floors_nonmonotone_observations() {
        let d = signed_design(100, 41);
        let mut est = qr_theta_u(&d, 0.5, triangular(1.0), false).unwrap();
        // Force a derivative with sign flips across observations.
        est.theta_u = DVector::from_vec(vec![0.1, 5.0]);
        let v = qr_variance(&d, &est, 200, 0).unwrap();
        assert!(v.floored_observations > 0);
    }

    #[test]
    fn vec_jacobian_cov_diagonal_matches_direct_formula() {
        // All-positive design: the (j,k)-diagonal entry reduces to
        // (1/(nκ₂²)) Σ_i x_{k,i}² · x_{j,i} · f_×(1) · d̂_i with f_×(1)=∫K̄².
        let d = dataset(
            vec![0.0, 0.0, 0.0],
            vec![vec![1.0, 1.0, 1.0], vec![0.5, 2.0, 3.0]],
        );
        let dhat = DVector::from_vec(vec![0.7, 1.1, 0.4]);
        let spec = triangular(1.0);
        let cov = vec_jacobian_cov(&d, &dhat, spec);
        let consts = KernelConstants::new(KernelFamily::Triangular);
        let p = 2;
        for j in 0..p {
            for k in 0..p {
                let mut direct = 0.0;
                for i in 0..3 {
                    direct += d.x()[(i, k)].powi(2)
                        * d.x()[(i, j)]
                        * consts.kbar_sq_int
                        * dhat[i];
                }
                direct /= 3.0 * consts.kappa2 * consts.kappa2;
                let idx = j * p + k;
                assert_relative_eq!(cov[(idx, idx)], direct, epsilon = 1e-13);
            }
        }
        assert_eq!(cov, cov.transpose());
    }

    #[test]
    fn vec_jacobian_cov_handles_zero_and_signed_regressors() {
        let d = dataset(
            vec![0.0, 0.0, 0.0],
            vec![vec![1.0, 1.0, 1.0], vec![0.0, -2.0, 3.0]],
        );
        let dhat = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let cov = vec_jacobian_cov(&d, &dhat, triangular(1.0));
        assert!(cov.iter().all(|v| v.is_finite()));
        assert_eq!(cov, cov.transpose());
        let eig = cov.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
    }

    // ── dr_variance ─────────────────────────────────────────────────────

    #[test]
    fn dr_variance_intercept_only_reduction() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let y: Vec<f64> = (0..150).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let d = intercept_only(y);
        let est = dr_theta_u(&d, 0.3, triangular(0.5), None).unwrap();
        let v = dr_variance(&d, &est).unwrap();
        // Scalar sandwich: Γ(1) · f̂ / λ(θ̂)², with f̂ = λ(θ̂)·θ̂^u (no
        // flooring when θ̂^u > 0, so the mean over i is f̂ itself).
        assert!(est.theta_u[0] > 0.0);
        let lam = logistic_density(est.fit.theta[0]);
        let gamma1 = KernelConstants::new(KernelFamily::Triangular).gamma(1.0);
        let expected = gamma1 * (lam * est.theta_u[0]) / (lam * lam);
        assert_relative_eq!(v.matrix[(0, 0)], expected, epsilon = 1e-10);
        assert_relative_eq!(gamma1, 26.0 / 35.0, epsilon = EXACT);
        assert_eq!(v.floored_observations, 0);
    }

    #[test]
    fn dr_variance_symmetric_psd() {
        let d = signed_design(200, 37);
        let u = 0.5;
        let est = dr_theta_u(&d, u, triangular(0.6), None).unwrap();
        let v = dr_variance(&d, &est).unwrap();
        assert_eq!(v.matrix, v.matrix.transpose());
        let eig = v.matrix.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -EXACT));
    }
}
