//! Adaptive Gauss–Kronrod quadrature (G7–K15).
//!
//! A 15-point Kronrod rule with its embedded 7-point Gauss rule is applied to
//! each panel; the difference between the two estimates serves as the local
//! error indicator.  Panels that miss their error budget are bisected, with the
//! budget split evenly between the halves, so the accepted panel errors sum to
//! at most the requested tolerance.  For the smooth (piecewise-polynomial and
//! exponential-family) integrands in this crate the rule converges extremely
//! fast; the recursion depth cap below is a safety net, not a working limit.
//!
//! This integrator backs the population oracles (expectations over the design
//! distribution) and serves as the independent cross-check for the closed-form
//! kernel moments in [`crate::kernel`].

/// Hard cap on bisection depth.  2^60 panels is unreachable in practice; the
/// cap only guards against integrands that defeat the error indicator (e.g. a
/// discontinuity exactly at a panel midpoint forever).
const MAX_DEPTH: u32 = 60;

/// Abscissae of the 15-point Kronrod rule on [-1, 1]: the positive half, in
/// descending order, ending with the centre node 0.  Nodes 1, 3, 5, 7 (the odd
/// positions plus the centre) form the embedded 7-point Gauss rule.
#[allow(clippy::excessive_precision)] // published table values, full precision
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// Kronrod weights matching `XGK` (centre weight last).
#[allow(clippy::excessive_precision)] // published table values, full precision
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Weights of the embedded 7-point Gauss rule, matching nodes
/// `XGK[1], XGK[3], XGK[5]` and the centre node (weight last).
#[allow(clippy::excessive_precision)] // published table values, full precision
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7–K15 evaluation on `[a, b]`.  Returns `(kronrod, gauss)` estimates.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, gauss * half)
}

fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (kronrod, gauss) = gk15(f, a, b);
    if (kronrod - gauss).abs() <= tol || depth >= MAX_DEPTH {
        kronrod
    } else {
        let mid = 0.5 * (a + b);
        let half_tol = 0.5 * tol;
        recurse(f, a, mid, half_tol, depth + 1) + recurse(f, mid, b, half_tol, depth + 1)
    }
}

/// Computes ∫_a^b f(x) dx adaptively to absolute tolerance `tol`.
///
/// Reversed bounds flip the sign, Riemann-style.  The tolerance must be a
/// positive finite number; the integrand is assumed finite on `[a, b]`.
///
/// # Panics
///
/// Panics if `tol` is not a positive finite number or if a bound is not
/// finite — both are programmer errors, not data conditions.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    assert!(
        tol.is_finite() && tol > 0.0,
        "quadrature tolerance must be positive and finite, got {tol}"
    );
    assert!(
        a.is_finite() && b.is_finite(),
        "quadrature bounds must be finite, got [{a}, {b}]"
    );
    if a == b {
        return 0.0;
    }
    if a > b {
        return -recurse(&f, b, a, tol, 0);
    }
    recurse(&f, a, b, tol, 0)
}

// ════════════════════════════════════════════════════════════════════════
// Tests
// ════════════════════════════════════════════════════════════════════════

#[cfg(test)]
mod tests {
    use super::*;

    /// Tolerance requested from the integrator in these tests.
    const TOL: f64 = 1e-12;
    /// Acceptance slack: the panel-error indicator is conservative, so the
    /// achieved error is normally far below the requested tolerance.
    const CHECK: f64 = 1e-11;

    #[test]
    fn polynomial_is_exact() {
        // K15 integrates polynomials up to degree 22 exactly; x^2 is trivial.
        let v = integrate(|x| x * x, 0.0, 1.0, TOL);
        assert!((v - 1.0 / 3.0).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn sine_over_half_period() {
        let v = integrate(f64::sin, 0.0, std::f64::consts::PI, TOL);
        assert!((v - 2.0).abs() < CHECK, "got {v}");
    }

    #[test]
    fn kinked_integrand_converges() {
        // Triangular bump (1 - |x|)_+ over a wider range: the kink at 0 and
        // the support edges force adaptive splitting.
        let v = integrate(|x| (1.0 - x.abs()).max(0.0), -2.0, 2.0, TOL);
        assert!((v - 1.0).abs() < CHECK, "got {v}");
    }

    #[test]
    fn gaussian_mass() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate(phi, -8.0, 8.0, TOL);
        assert!((v - 1.0).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let fwd = integrate(|x| x * x, 0.0, 1.0, TOL);
        let rev = integrate(|x| x * x, 1.0, 0.0, TOL);
        assert_eq!(fwd, -rev);
    }

    #[test]
    fn empty_range_is_zero() {
        assert_eq!(integrate(|x| x.exp(), 3.0, 3.0, TOL), 0.0);
    }
}
