//! Linear quantile regression via a primal–dual interior-point solver.
//!
//! The coefficient θ̂(u) minimizes the check-function criterion
//! Σ_i ρ_u(Y_i − X_i'θ) with ρ_u(r) = r·(u − 1{r < 0}).  Minimization is
//! carried out on the equivalent bounded-variable linear program: with
//! c = −Y and b = (1−u)·X'1, solve
//!
//! ```text
//! min  c'a   subject to   X'a = b,   0 ≤ a ≤ 1,
//! ```
//!
//! whose equality multiplier ϑ satisfies θ̂ = −ϑ̂ at the optimum (observations
//! with a_i strictly between the bounds are interpolated, Y_i = X_i'θ̂).  The
//! solver is a Mehrotra-style predictor–corrector method on the KKT system —
//! the classical approach for quantile regression — which is deterministic
//! and free of the vertex tie-breaking ambiguity a simplex method would have:
//! when the minimizer is non-unique (a flat piece of the criterion), the
//! iterates converge to the analytic center of the solution face, and any
//! minimizer is acceptable downstream.
//!
//! # Determinism and concurrency
//!
//! A fit is a pure function of (data, u, warm start); fits at distinct u are
//! independent and may run in parallel.  [`qr_process`] walks its grid
//! sequentially, warm-starting each fit from the previous solution, which
//! changes iteration counts but not (within solver tolerance) the solutions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::Dataset;
use crate::{Error, Result};

/// Complementarity-gap tolerance per observation: converged when
/// gap ≤ GAP_TOL_PER_OBS·n (the LP duality gap at feasibility).
const GAP_TOL_PER_OBS: f64 = 1e-8;
/// Relative tolerance on primal and dual residual norms.
const FEAS_TOL: f64 = 1e-8;
/// Iteration cap; exceeding it is reported via `converged = false`, never
/// silently truncated.
const MAX_ITER: usize = 200;
/// Fraction of the maximal feasible step length actually taken.
const STEP_SCALE: f64 = 0.99995;

// ════════════════════════════════════════════════════════════════════════
// Result types
// ════════════════════════════════════════════════════════════════════════

/// A coefficient estimate θ̂(u) at a single index value, with solver
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefEstimate {
    /// Index the fit was taken at (quantile level for QR, response threshold
    /// for distribution regression).
    pub u: f64,
    /// Estimated coefficient vector.
    pub theta: DVector<f64>,
    /// Whether the solver met its convergence criterion within the iteration
    /// cap.
    pub converged: bool,
    /// Criterion value at θ̂ (check loss for QR, total negative Bernoulli
    /// log-likelihood for distribution regression); nonnegative.
    pub objective: f64,
    /// Iterations consumed.
    pub iterations: usize,
}

/// A coefficient process: θ̂(u) evaluated on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefProcess {
    /// Strictly increasing index grid.
    pub grid: Vec<f64>,
    /// Row g holds θ̂(grid[g]); dimensions (grid length)×p.
    pub thetas: DMatrix<f64>,
}

impl CoefProcess {
    /// Builds a process, validating grid/row-count agreement and strict
    /// monotonicity of the grid.
    pub fn new(grid: Vec<f64>, thetas: DMatrix<f64>) -> Result<Self> {
        if grid.len() != thetas.nrows() {
            return Err(Error::InvalidArgument(format!(
                "grid has {} points but coefficient matrix has {} rows",
                grid.len(),
                thetas.nrows()
            )));
        }
        if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "process grid must be finite and strictly increasing".to_string(),
            ));
        }
        Ok(CoefProcess { grid, thetas })
    }

    /// Coefficient vector at grid position g.
    pub fn theta_at(&self, g: usize) -> DVector<f64> {
        self.thetas.row(g).transpose()
    }
}

// ════════════════════════════════════════════════════════════════════════
// Public operations
// ════════════════════════════════════════════════════════════════════════

/// Check-function criterion Σ_i ρ_u(Y_i − X_i'θ) with
/// ρ_u(r) = r·(u − 1{r < 0}).
pub fn check_loss(data: &Dataset, u: f64, theta: &DVector<f64>) -> f64 {
    let resid = data.y() - data.x() * theta;
    resid
        .iter()
        .map(|&r| r * (u - f64::from(r < 0.0)))
        .sum()
}

/// Fits linear quantile regression at level u ∈ (0, 1).
///
/// The returned estimate attains the minimum of the check loss within the
/// solver's duality-gap tolerance (1e−8·n); non-convergence within the
/// iteration cap is reported through `converged = false` together with the
/// last iterate, never hidden.
pub fn qr_fit(data: &Dataset, u: f64) -> Result<CoefEstimate> {
    qr_fit_from(data, u, None)
}

/// [`qr_fit`] with an optional warm start for the coefficient vector.
pub fn qr_fit_from(data: &Dataset, u: f64, warm: Option<&DVector<f64>>) -> Result<CoefEstimate> {
    if !(u.is_finite() && 0.0 < u && u < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie strictly inside (0, 1), got {u}"
        )));
    }
    if let Some(t) = warm {
        if t.len() != data.p() {
            return Err(Error::InvalidArgument(format!(
                "warm start has length {} but design has {} columns",
                t.len(),
                data.p()
            )));
        }
    }
    let (theta, converged, iterations) = interior_point(data.y(), data.x(), u, warm)?;
    let objective = check_loss(data, u, &theta);
    Ok(CoefEstimate {
        u,
        theta,
        converged,
        objective,
        iterations,
    })
}

/// Fits θ̂(u) over a strictly increasing grid inside (0, 1), warm-starting
/// each fit from its predecessor.
pub fn qr_process(data: &Dataset, grid: &[f64]) -> Result<CoefProcess> {
    validate_grid(grid, true)?;
    let p = data.p();
    let mut thetas = DMatrix::zeros(grid.len(), p);
    let mut warm: Option<DVector<f64>> = None;
    for (g, &u) in grid.iter().enumerate() {
        let fit = qr_fit_from(data, u, warm.as_ref())
            .map_err(|e| Error::InvalidArgument(format!("qr_process at u={u}: {e}")))?;
        thetas.row_mut(g).copy_from(&fit.theta.transpose());
        warm = Some(fit.theta);
    }
    CoefProcess::new(grid.to_vec(), thetas)
}

/// Validates that a grid is strictly increasing (and inside (0, 1) when
/// `unit_interval` is set).
pub(crate) fn validate_grid(grid: &[f64], unit_interval: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty index grid".to_string()));
    }
    // NaN entries slip past the pairwise comparison; the finiteness loop
    // below catches them.
    for w in grid.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidArgument(format!(
                "index grid must be strictly increasing; got {} followed by {}",
                w[0], w[1]
            )));
        }
    }
    for &u in grid {
        if !u.is_finite() || (unit_interval && !(0.0 < u && u < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "grid point {u} outside the open unit interval"
            )));
        }
    }
    Ok(())
}

// ════════════════════════════════════════════════════════════════════════
// Interior-point solver internals
// ════════════════════════════════════════════════════════════════════════

/// A factorization of the p×p normal matrix, Cholesky when possible with an
/// LU fallback for the nearly singular iterations close to convergence.
enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Lu(nalgebra::LU<f64, Dyn, Dyn>),
}

impl Factor {
    fn of(m: DMatrix<f64>) -> Option<Factor> {
        let lu_src = m.clone();
        match m.cholesky() {
            Some(c) => Some(Factor::Chol(c)),
            None => {
                let lu = lu_src.lu();
                if lu.is_invertible() {
                    Some(Factor::Lu(lu))
                } else {
                    None
                }
            }
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Chol(c) => c.solve(rhs),
            Factor::Lu(l) => l.solve(rhs).expect("checked invertible at construction"),
        }
    }
}

/// N = X'·diag(d)·X accumulated over the upper triangle and mirrored.
fn normal_matrix(x: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut nmat = DMatrix::zeros(p, p);
    for i in 0..n {
        let di = d[i];
        if di == 0.0 {
            continue;
        }
        for j in 0..p {
            let xij = x[(i, j)] * di;
            if xij == 0.0 {
                continue;
            }
            for k in j..p {
                nmat[(j, k)] += xij * x[(i, k)];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            nmat[(j, k)] = nmat[(k, j)];
        }
    }
    nmat
}

/// Ordinary least squares start: solves X'Xβ = X'y.
fn ols(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let d = DVector::from_element(x.nrows(), 1.0);
    let nmat = normal_matrix(x, &d);
    let rhs = x.tr_mul(y);
    Factor::of(nmat)
        .map(|f| f.solve(&rhs))
        .ok_or_else(|| Error::IllConditioned("least-squares start for quantile fit".to_string()))
}

/// Largest α ≥ 0 with a + αΔa ≥ 0 and s − αΔa ≥ 0 componentwise.
fn max_step_primal(a: &DVector<f64>, s: &DVector<f64>, da: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..a.len() {
        let d = da[i];
        if d < 0.0 {
            alpha = alpha.min(-a[i] / d);
        } else if d > 0.0 {
            alpha = alpha.min(s[i] / d);
        }
    }
    alpha
}

/// Largest α ≥ 0 keeping z + αΔz ≥ 0 and w + αΔw ≥ 0 componentwise.
fn max_step_dual(z: &DVector<f64>, w: &DVector<f64>, dz: &DVector<f64>, dw: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..z.len() {
        if dz[i] < 0.0 {
            alpha = alpha.min(-z[i] / dz[i]);
        }
        if dw[i] < 0.0 {
            alpha = alpha.min(-w[i] / dw[i]);
        }
    }
    alpha
}

/// Mehrotra predictor–corrector on the bounded-variable LP; returns
/// (θ̂, converged, iterations).
fn interior_point(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    u: f64,
    warm: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, bool, usize)> {
    let n = x.nrows();
    let nf = n as f64;
    let c = -y;
    let ones = DVector::from_element(n, 1.0);
    let b = x.tr_mul(&ones) * (1.0 - u);

    // Strictly interior primal start with a + s = 1 exactly.
    let mut a = DVector::from_element(n, 1.0 - u);
    let mut s = DVector::from_element(n, u);
    // Dual start from the warm coefficient (θ = −ϑ) or the OLS fit.
    let theta0 = match warm {
        Some(t) => t.clone(),
        None => ols(y, x)?,
    };
    let mut phi = -theta0;
    let d0 = &c - x * &phi;
    let delta = 0.5 * d0.iter().map(|v| v.abs()).sum::<f64>() / nf + 1e-8;
    let mut z = d0.map(|v| v.max(0.0) + delta);
    let mut w = d0.map(|v| (-v).max(0.0) + delta);

    let gap_tol = GAP_TOL_PER_OBS * nf;
    let tol_p = FEAS_TOL * (1.0 + b.amax());
    let tol_d = FEAS_TOL * (1.0 + c.amax());

    for iter in 0..=MAX_ITER {
        let eta = x * &phi;
        let r_p = &b - x.tr_mul(&a);
        let r_d = &c - &eta - &z + &w;
        let gap = a.dot(&z) + s.dot(&w);
        if gap <= gap_tol && r_p.amax() <= tol_p && r_d.amax() <= tol_d {
            return Ok((-phi, true, iter));
        }
        if iter == MAX_ITER {
            break;
        }

        let dvec = DVector::from_fn(n, |i, _| 1.0 / (z[i] / a[i] + w[i] / s[i]));
        let factor = match Factor::of(normal_matrix(x, &dvec)) {
            Some(f) => f,
            None => return Ok((-phi, false, iter)),
        };

        // ── Predictor (affine-scaling) direction ──
        // With r_az = −a∘z and r_sw = −s∘w the reduced right-hand side
        // simplifies: r_d − r_az/a + r_sw/s = c − Xϑ.
        let v_aff = &c - &eta;
        let rhs_aff = &r_p + x.tr_mul(&dvec.component_mul(&v_aff));
        let dphi_aff = factor.solve(&rhs_aff);
        let xd_aff = x * &dphi_aff;
        let da_aff = DVector::from_fn(n, |i, _| dvec[i] * (xd_aff[i] - v_aff[i]));
        let dz_aff = DVector::from_fn(n, |i, _| -z[i] - z[i] * da_aff[i] / a[i]);
        let dw_aff = DVector::from_fn(n, |i, _| -w[i] + w[i] * da_aff[i] / s[i]);

        let ap_aff = max_step_primal(&a, &s, &da_aff).min(1.0);
        let ad_aff = max_step_dual(&z, &w, &dz_aff, &dw_aff).min(1.0);
        let mut gap_aff = 0.0;
        for i in 0..n {
            gap_aff += (a[i] + ap_aff * da_aff[i]) * (z[i] + ad_aff * dz_aff[i]);
            gap_aff += (s[i] - ap_aff * da_aff[i]) * (w[i] + ad_aff * dw_aff[i]);
        }
        let sigma = (gap_aff / gap).powi(3).clamp(0.0, 1.0);
        let mu = gap / (2.0 * nf);

        // ── Corrector direction (same factorization) ──
        let target = sigma * mu;
        let r_az = DVector::from_fn(n, |i, _| -a[i] * z[i] - da_aff[i] * dz_aff[i] + target);
        let r_sw = DVector::from_fn(n, |i, _| -s[i] * w[i] + da_aff[i] * dw_aff[i] + target);
        let v = DVector::from_fn(n, |i, _| r_d[i] - r_az[i] / a[i] + r_sw[i] / s[i]);
        let rhs = &r_p + x.tr_mul(&dvec.component_mul(&v));
        let dphi = factor.solve(&rhs);
        let xd = x * &dphi;
        let da = DVector::from_fn(n, |i, _| dvec[i] * (xd[i] - v[i]));
        let dz = DVector::from_fn(n, |i, _| (r_az[i] - z[i] * da[i]) / a[i]);
        let dw = DVector::from_fn(n, |i, _| (r_sw[i] + w[i] * da[i]) / s[i]);

        let ap = (STEP_SCALE * max_step_primal(&a, &s, &da)).min(1.0);
        let ad = (STEP_SCALE * max_step_dual(&z, &w, &dz, &dw)).min(1.0);
        a.axpy(ap, &da, 1.0);
        s.axpy(-ap, &da, 1.0);
        phi.axpy(ad, &dphi, 1.0);
        z.axpy(ad, &dz, 1.0);
        w.axpy(ad, &dw, 1.0);
    }
    Ok((-phi, false, MAX_ITER))
}

// ════════════════════════════════════════════════════════════════════════
// Tests
// ════════════════════════════════════════════════════════════════════════

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Coefficient agreement tolerance for solver-level comparisons.
    const COEF_TOL: f64 = 1e-6;

    fn intercept_only(y: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(
            DVector::from_vec(y),
            DMatrix::from_element(n, 1, 1.0),
            vec!["intercept".to_string()],
        )
        .unwrap()
    }

    /// Seeded dataset y = 1 + 2x + ε with x uniform and ε symmetric.
    fn synthetic(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut y = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let x: f64 = rng.gen_range(-1.0..3.0);
            let e: f64 = rng.gen_range(-0.5..0.5) + rng.gen_range(-0.5..0.5);
            xs.push(1.0);
            xs.push(x);
            y.push(1.0 + 2.0 * x + e);
        }
        Dataset::new(
            DVector::from_vec(y),
            DMatrix::from_row_slice(n, 2, &xs),
            vec!["intercept".into(), "x".into()],
        )
        .unwrap()
    }

    /// Exact directional derivative of the check loss at θ along v, with
    /// tie handling for residuals at zero.
    fn directional_derivative(data: &Dataset, u: f64, theta: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let resid = data.y() - data.x() * theta;
        let scale = 1.0 + data.y().iter().map(|t| t.abs()).sum::<f64>() / data.n() as f64;
        let eps = 1e-6 * scale;
        let g = data.x() * v;
        let mut total = 0.0;
        for i in 0..data.n() {
            if resid[i] > eps {
                total += -g[i] * u;
            } else if resid[i] < -eps {
                total += g[i] * (1.0 - u);
            } else {
                total += ((1.0 - u) * g[i]).max(-u * g[i]);
            }
        }
        total
    }

    #[test]
    fn median_of_three() {
        let d = intercept_only(vec![1.0, 2.0, 3.0]);
        let fit = qr_fit(&d, 0.5).unwrap();
        assert!(fit.converged);
        assert!((fit.theta[0] - 2.0).abs() < COEF_TOL, "got {}", fit.theta[0]);
        // The check loss at the median of (1,2,3) is |1−2|·½ + |3−2|·½ = 1.
        assert!((fit.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_unique_quantile_returns_a_minimizer() {
        // At u = 0.25 with four points every θ in [1, 2] is optimal; the
        // solver must land inside the face and attain the minimal objective.
        let d = intercept_only(vec![1.0, 2.0, 3.0, 4.0]);
        let fit = qr_fit(&d, 0.25).unwrap();
        assert!(fit.converged);
        assert!(
            fit.theta[0] > 1.0 - 1e-4 && fit.theta[0] < 2.0 + 1e-4,
            "got {}",
            fit.theta[0]
        );
        // Objective on the flat face: 0.25·(1+2+3) at θ=1.
        assert!((fit.objective - 1.5).abs() < 1e-6, "got {}", fit.objective);
    }

    #[test]
    fn weighted_quantiles_on_intercept_data() {
        let d = intercept_only(vec![5.0, 1.0, 3.0, 9.0, 7.0]);
        // u = 0.5 → middle order statistic.
        let fit = qr_fit(&d, 0.5).unwrap();
        assert!((fit.theta[0] - 5.0).abs() < COEF_TOL);
        // Away from the median the minimizers sit at kinks with flat faces
        // adjacent, so compare objective values rather than coefficients.
        for (u, best) in [(0.3, 3.0), (0.7, 7.0)] {
            let fit = qr_fit(&d, u).unwrap();
            let opt = check_loss(&d, u, &DVector::from_element(1, best));
            assert!(fit.objective <= opt + 1e-6, "u={u}: {} > {opt}", fit.objective);
        }
    }

    #[test]
    fn subgradient_optimality_in_random_directions() {
        let d = synthetic(400, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for u in [0.25, 0.5, 0.9] {
            let fit = qr_fit(&d, u).unwrap();
            assert!(fit.converged);
            for _ in 0..(2 * d.p()) {
                let mut v = DVector::from_fn(d.p(), |_, _| rng.gen_range(-1.0..1.0f64));
                v /= v.norm();
                let dd = directional_derivative(&d, u, &fit.theta, &v);
                assert!(
                    dd >= -1e-6 * d.n() as f64,
                    "descent direction found at u={u}: {dd}"
                );
            }
        }
    }

    #[test]
    fn scale_and_shift_equivariance() {
        let d = synthetic(300, 11);
        let u = 0.35;
        let base = qr_fit(&d, u).unwrap();

        // Scale y by 50.
        let scaled = Dataset::new(
            data_y_scaled(&d, 50.0),
            d.x().clone(),
            d.column_names().to_vec(),
        )
        .unwrap();
        let fit_scaled = qr_fit(&scaled, u).unwrap();
        for j in 0..d.p() {
            assert!(
                (fit_scaled.theta[j] - 50.0 * base.theta[j]).abs() < 50.0 * COEF_TOL,
                "scale equivariance failed at {j}"
            );
        }

        // Shift y by x'δ with δ = (−2, 3).
        let delta = DVector::from_vec(vec![-2.0, 3.0]);
        let shifted = Dataset::new(
            d.y() + d.x() * &delta,
            d.x().clone(),
            d.column_names().to_vec(),
        )
        .unwrap();
        let fit_shifted = qr_fit(&shifted, u).unwrap();
        for j in 0..d.p() {
            assert!(
                (fit_shifted.theta[j] - (base.theta[j] + delta[j])).abs() < COEF_TOL,
                "shift equivariance failed at {j}"
            );
        }
    }

    fn data_y_scaled(d: &Dataset, c: f64) -> DVector<f64> {
        d.y() * c
    }

    #[test]
    fn slope_recovery_at_the_median() {
        // Symmetric noise ⇒ the median plane is y = 1 + 2x.
        let d = synthetic(2000, 5);
        let fit = qr_fit(&d, 0.5).unwrap();
        assert!(fit.converged);
        assert!((fit.theta[0] - 1.0).abs() < 0.1, "intercept {}", fit.theta[0]);
        assert!((fit.theta[1] - 2.0).abs() < 0.1, "slope {}", fit.theta[1]);
    }

    #[test]
    fn intercept_only_process_is_monotone() {
        let d = intercept_only(vec![3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.3, 5.8, 9.7, 0.2]);
        let grid: Vec<f64> = (1..20).map(|i| f64::from(i) / 20.0).collect();
        let proc = qr_process(&d, &grid).unwrap();
        for g in 1..grid.len() {
            assert!(
                proc.thetas[(g, 0)] >= proc.thetas[(g - 1, 0)] - 1e-7,
                "quantile process decreased at grid index {g}"
            );
        }
    }

    #[test]
    fn process_matches_independent_fits() {
        let d = synthetic(500, 23);
        let grid = [0.2, 0.4, 0.6, 0.8];
        let proc = qr_process(&d, &grid).unwrap();
        for (g, &u) in grid.iter().enumerate() {
            let solo = qr_fit(&d, u).unwrap();
            for j in 0..d.p() {
                assert!(
                    (proc.thetas[(g, j)] - solo.theta[j]).abs() < COEF_TOL,
                    "warm-started fit differs at u={u}, coefficient {j}"
                );
            }
        }
    }

    #[test]
    fn singleton_grid_equals_pointwise_fit() {
        let d = synthetic(200, 31);
        let proc = qr_process(&d, &[0.5]).unwrap();
        let solo = qr_fit(&d, 0.5).unwrap();
        for j in 0..d.p() {
            assert!((proc.thetas[(0, j)] - solo.theta[j]).abs() < COEF_TOL);
        }
    }

    #[test]
    fn rejects_bad_levels_and_grids() {
        let d = intercept_only(vec![1.0, 2.0, 3.0]);
        assert!(qr_fit(&d, 0.0).is_err());
        assert!(qr_fit(&d, 1.0).is_err());
        assert!(qr_fit(&d, -0.5).is_err());
        assert!(qr_fit(&d, f64::NAN).is_err());
        assert!(qr_process(&d, &[0.3, 0.2]).is_err());
        assert!(qr_process(&d, &[0.3, 0.3]).is_err());
        assert!(qr_process(&d, &[]).is_err());
        assert!(qr_process(&d, &[0.5, 1.5]).is_err());
    }

    #[test]
    fn objective_is_nonnegative_and_attained() {
        let d = synthetic(150, 41);
        for u in [0.1, 0.5, 0.77] {
            let fit = qr_fit(&d, u).unwrap();
            assert!(fit.objective >= 0.0);
            assert!((fit.objective - check_loss(&d, u, &fit.theta)).abs() < 1e-10);
        }
    }
}
