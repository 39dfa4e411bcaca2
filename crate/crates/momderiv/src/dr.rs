//! Distribution regression: per-threshold logistic regression.
//!
//! For each response threshold u, the coefficient θ̂(u) maximizes the
//! Bernoulli log-likelihood of the binary outcome 1{Y_i ≤ u} with the
//! logistic link Λ(s) = 1/(1 + e^{−s}):
//!
//! ```text
//! ℓ(θ) = Σ_i [ t_i·X_i'θ − softplus(X_i'θ) ],    t_i = 1{Y_i ≤ u}.
//! ```
//!
//! The first-order condition Σ_i (t_i − Λ(X_i'θ))X_i = 0 is exactly the
//! sample moment condition the derivative engine differentiates, so the fit
//! must satisfy it to high precision: the optimizer exits only when the score
//! norm is at most 1e−10·n.
//!
//! # Optimizer
//!
//! Damped Newton–Raphson from the zero vector with step-halving on the
//! log-likelihood.  The likelihood is globally concave, so absent separation
//! this converges quadratically in a handful of steps.  Complete or
//! quasi-complete separation (the threshold splits the sample perfectly along
//! a design direction) sends ‖θ̂‖ to infinity; it is detected — degenerate
//! labels immediately, a diverging iterate via ‖θ‖∞ > 30, a saturated
//! likelihood (total negative log-likelihood below 1e−6 means every
//! observation is fitted at probability 1 − ε, which no overlapping sample
//! can produce) — and reported as an error, never returned as a coefficient.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::qr::{validate_grid, CoefEstimate, CoefProcess};
use crate::{Error, Result};

/// Score-norm exit criterion: ‖Σ(t − Λ)X‖∞ ≤ SCORE_TOL_PER_OBS·n.
const SCORE_TOL_PER_OBS: f64 = 1e-10;
/// Newton iteration cap; the concave likelihood never needs this many.
const MAX_ITER: usize = 100;
/// Step-halving cap within one Newton iteration.
const MAX_HALVINGS: usize = 40;
/// Separation threshold on ‖θ‖∞: the logistic link saturates far below
/// e^{30}, so an iterate beyond this is diverging, not converging.
const SEPARATION_NORM: f64 = 30.0;
/// Separation threshold on the converged objective: a total negative
/// log-likelihood this small means every observation sits at probability
/// 1 − ε, i.e. the design separates the labels to saturation.
const SEPARATION_NLL: f64 = 1e-6;
/// Newton steps no larger than this fraction of (1 + ‖θ‖∞) are refinement
/// steps inside the quadratic basin: they are taken at full length without a
/// likelihood comparison, because so close to the optimum the likelihood is
/// flat to the last ulp while the score still has digits to gain.
const REFINE_STEP_FRACTION: f64 = 1e-4;

/// Logistic c.d.f. Λ(s) = 1/(1 + e^{−s}), computed stably for large |s|.
pub fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Logistic density λ(s) = Λ(s)(1 − Λ(s)).
pub fn logistic_density(s: f64) -> f64 {
    let p = logistic(s);
    p * (1.0 - p)
}

/// softplus(s) = ln(1 + e^s), stable for large |s|.
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

/// Total log-likelihood Σ t·η − softplus(η) at linear predictor η = Xθ.
fn log_likelihood(t: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..t.len() {
        acc += t[i] * eta[i] - softplus(eta[i]);
    }
    acc
}

/// Fits distribution regression at threshold u: logistic regression of
/// 1{Y ≤ u} on X.
///
/// Errors on complete/quasi-complete separation (including the degenerate
/// cases where no or every response lies at or below u) and on
/// non-convergence; otherwise the score equation holds with
/// ‖Σ(t − Λ(X'θ̂))X‖∞ ≤ 1e−10·n.
pub fn dr_fit(data: &Dataset, u: f64) -> Result<CoefEstimate> {
    if !u.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "threshold must be finite, got {u}"
        )));
    }
    let n = data.n();
    let p = data.p();
    let nf = n as f64;
    let t = DVector::from_fn(n, |i, _| f64::from(data.y()[i] <= u));
    let below = t.sum();
    if below == 0.0 {
        return Err(Error::InvalidData(format!(
            "separation at threshold u={u}: no response is ≤ u"
        )));
    }
    if below == nf {
        return Err(Error::InvalidData(format!(
            "separation at threshold u={u}: every response is ≤ u"
        )));
    }

    let x = data.x();
    let mut theta = DVector::zeros(p);
    let mut eta = DVector::zeros(n);
    let mut ll = log_likelihood(&t, &eta);
    let tol = SCORE_TOL_PER_OBS * nf;

    for iter in 0..=MAX_ITER {
        let fitted = eta.map(logistic);
        let score = x.tr_mul(&(&t - &fitted));
        if score.amax() <= tol {
            if -ll < SEPARATION_NLL {
                return Err(Error::InvalidData(format!(
                    "quasi-complete separation at threshold u={u}: likelihood saturated \
                     (total negative log-likelihood {:.3e})",
                    -ll
                )));
            }
            return Ok(CoefEstimate {
                u,
                theta,
                converged: true,
                objective: -ll,
                iterations: iter,
            });
        }
        if iter == MAX_ITER {
            break;
        }

        // Newton direction: (X'WX) δ = score, W = diag(λ(η)).
        let weights = eta.map(logistic_density);
        let hessian = weighted_normal(x, &weights);
        let delta = hessian
            .cholesky()
            .map(|c| c.solve(&score))
            .or_else(|| weighted_normal(x, &weights).lu().solve(&score))
            .ok_or_else(|| {
                Error::IllConditioned(format!("logistic Hessian at threshold u={u}"))
            })?;

        if delta.amax() <= REFINE_STEP_FRACTION * (1.0 + theta.amax()) {
            // Refinement regime: the full Newton step contracts the score
            // quadratically, while the likelihood can no longer arbitrate
            // (its per-step gain is below the ulp of the total).  Take the
            // step; the score criterion at the top of the loop terminates.
            theta += &delta;
            eta = x * &theta;
            ll = log_likelihood(&t, &eta);
        } else {
            // Global regime: step-halving on the log-likelihood (non-strict,
            // so a flat-to-the-ulp full step still passes).
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let candidate_theta = &theta + &delta * step;
                let candidate_eta = x * &candidate_theta;
                let candidate_ll = log_likelihood(&t, &candidate_eta);
                if candidate_ll >= ll {
                    theta = candidate_theta;
                    eta = candidate_eta;
                    ll = candidate_ll;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(Error::NoConvergence {
                    what: format!("distribution-regression fit at threshold u={u}"),
                    iterations: iter,
                });
            }
        }
        if theta.amax() > SEPARATION_NORM {
            return Err(Error::InvalidData(format!(
                "quasi-complete separation at threshold u={u}: coefficient norm diverged"
            )));
        }
    }
    Err(Error::NoConvergence {
        what: format!("distribution-regression fit at threshold u={u}"),
        iterations: MAX_ITER,
    })
}

/// Fits θ̂(u) over a strictly increasing grid of thresholds.
pub fn dr_process(data: &Dataset, grid: &[f64]) -> Result<CoefProcess> {
    validate_grid(grid, false)?;
    let p = data.p();
    let mut thetas = DMatrix::zeros(grid.len(), p);
    for (g, &u) in grid.iter().enumerate() {
        let fit =
            dr_fit(data, u).map_err(|e| Error::InvalidData(format!("dr_process at u={u}: {e}")))?;
        thetas.row_mut(g).copy_from(&fit.theta.transpose());
    }
    CoefProcess::new(grid.to_vec(), thetas)
}

/// X'·diag(w)·X accumulated over the upper triangle and mirrored.
fn weighted_normal(x: &DMatrix<f64>, wts: &DVector<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut m = DMatrix::zeros(p, p);
    for i in 0..n {
        let wi = wts[i];
        if wi == 0.0 {
            continue;
        }
        for j in 0..p {
            let xij = x[(i, j)] * wi;
            if xij == 0.0 {
                continue;
            }
            for k in j..p {
                m[(j, k)] += xij * x[(i, k)];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            m[(j, k)] = m[(k, j)];
        }
    }
    m
}

// ════════════════════════════════════════════════════════════════════════
// Tests
// ════════════════════════════════════════════════════════════════════════
