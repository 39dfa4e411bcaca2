//! Kernel primitives for local-linear derivative estimation.
//!
//! Everything downstream — moment-Jacobian smoothing, boundary corrections,
//! bias and variance constants — reduces to a handful of functionals of a
//! compactly supported symmetric kernel density K:
//!
//! * the **pseudo-kernel** K̄(s) = ∫_s^1 t·K(t) dt, an even nonnegative bump
//!   that appears when the local-linear slope weight is integrated by parts;
//! * **truncated moments** κ_s(c) = ∫_{−c}^1 t^s K(t) dt, together with the
//!   bandwidth-scaled variant κ_{s,h}(u) used when the index u sits within one
//!   bandwidth of the edge of the admissible interval;
//! * the **boundary variance constant** Γ(c), the normalized variance of the
//!   boundary-corrected pseudo-kernel (see [`gamma_const`]);
//! * the **cross-correlation integral** ∫ K̄(s)·K̄(s·r) ds entering the
//!   covariance between smoothed Jacobian entries with different effective
//!   bandwidths.
//!
//! # Design
//!
//! Three families are offered: triangular, Epanechnikov, and biweight.  Each
//! is a polynomial on its support [−1, 1], so every functional above has an
//! exact closed form; all moments are computed by polynomial integration, and
//! the adaptive quadrature in [`crate::quad`] serves only as an independent
//! test oracle.  K̄ sits inside O(n·p²) loops when Jacobians are assembled,
//! which is why it is a hand-expanded piecewise polynomial rather than a
//! runtime integral.
//!
//! All functions here are pure and the types are `Copy`; everything can be
//! shared freely across threads.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

// ════════════════════════════════════════════════════════════════════════
// Families and closed-form coefficient tables
// ════════════════════════════════════════════════════════════════════════

/// Supported kernel families.  All are bounded symmetric densities with
/// support exactly [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// K(t) = (1 − |t|)₊.
    Triangular,
    /// K(t) = ¾·(1 − t²)₊.
    Epanechnikov,
    /// K(t) = (15/16)·(1 − t²)²₊.
    Biweight,
}

/// K on [0, 1] in ascending powers of t (K is even, so K(t) = K(|t|)).
static TRIANGULAR_DENSITY: [f64; 2] = [1.0, -1.0];
static EPANECHNIKOV_DENSITY: [f64; 3] = [0.75, 0.0, -0.75];
static BIWEIGHT_DENSITY: [f64; 5] = [15.0 / 16.0, 0.0, -15.0 / 8.0, 0.0, 15.0 / 16.0];

/// K̄ on [0, 1] in ascending powers of |s|, obtained by integrating t·K(t)
/// from s to 1:
///   triangular    K̄(s) = 1/6 − s²/2 + s³/3,
///   Epanechnikov  K̄(s) = (3/16)·(1 − s²)²,
///   biweight      K̄(s) = (5/32)·(1 − s²)³.
static TRIANGULAR_KBAR: [f64; 4] = [1.0 / 6.0, 0.0, -0.5, 1.0 / 3.0];
static EPANECHNIKOV_KBAR: [f64; 5] = [3.0 / 16.0, 0.0, -3.0 / 8.0, 0.0, 3.0 / 16.0];
static BIWEIGHT_KBAR: [f64; 7] = [
    5.0 / 32.0,
    0.0,
    -15.0 / 32.0,
    0.0,
    15.0 / 32.0,
    0.0,
    -5.0 / 32.0,
];

impl KernelFamily {
    /// Evaluates the kernel density K(v); zero outside [−1, 1].
    pub fn density(self, v: f64) -> f64 {
        let a = v.abs();
        if a >= 1.0 {
            return 0.0;
        }
        poly_eval(self.density_poly(), a)
    }

    /// Coefficients of K restricted to [0, 1].
    fn density_poly(self) -> &'static [f64] {
        match self {
            KernelFamily::Triangular => &TRIANGULAR_DENSITY,
            KernelFamily::Epanechnikov => &EPANECHNIKOV_DENSITY,
            KernelFamily::Biweight => &BIWEIGHT_DENSITY,
        }
    }

    /// Coefficients of K̄ restricted to [0, 1].
    fn kbar_poly(self) -> &'static [f64] {
        match self {
            KernelFamily::Triangular => &TRIANGULAR_KBAR,
            KernelFamily::Epanechnikov => &EPANECHNIKOV_KBAR,
            KernelFamily::Biweight => &BIWEIGHT_KBAR,
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            KernelFamily::Triangular => "triangular",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Biweight => "biweight",
        };
        f.write_str(name)
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" => Ok(KernelFamily::Triangular),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "biweight" => Ok(KernelFamily::Biweight),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel family {other:?}; expected triangular, epanechnikov, or biweight"
            ))),
        }
    }
}

/// A kernel family together with a bandwidth h > 0 (in the units of the
/// smoothing axis: index units for quantile-side smoothing, response units for
/// distribution-side smoothing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// Kernel family.
    pub family: KernelFamily,
    /// Bandwidth; strictly positive.
    pub h: f64,
}

impl KernelSpec {
    /// Creates a spec, validating that the bandwidth is a positive finite
    /// number.
    pub fn new(family: KernelFamily, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {h}"
            )));
        }
        Ok(KernelSpec { family, h })
    }
}

// ════════════════════════════════════════════════════════════════════════
// Polynomial helpers (internal)
// ════════════════════════════════════════════════════════════════════════

/// Horner evaluation of a polynomial in ascending-power coefficients.
fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// ∫_lo^hi t^s · p(t) dt for 0 ≤ lo ≤ hi, coefficients ascending.
fn poly_moment(p: &[f64], s: u32, lo: f64, hi: f64) -> f64 {
    debug_assert!((0.0..=hi).contains(&lo));
    let mut acc = 0.0;
    for (k, &a) in p.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let e = (s + k as u32 + 1) as i32;
        acc += a * (hi.powi(e) - lo.powi(e)) / f64::from(e);
    }
    acc
}

/// ∫_0^x p(t)² dt by expanding the coefficient product pairwise.
fn poly_sq_integral(p: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for (i, &a) in p.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in p.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let e = (i + j + 1) as i32;
            acc += a * b * x.powi(e) / f64::from(e);
        }
    }
    acc
}

/// Truncated kernel moment ∫ t^s K(t) dt over [lower, upper] ∩ [−1, 1].
/// Splits at zero and maps the negative part onto [0, 1] using the evenness
/// of K: ∫_a^b t^s K(t) dt = (−1)^s ∫_{−b}^{−a} t^s K(t) dt for b ≤ 0.
fn trunc_moment(family: KernelFamily, s: u32, lower: f64, upper: f64) -> f64 {
    let a = lower.max(-1.0);
    let b = upper.min(1.0);
    if a >= b {
        return 0.0;
    }
    let p = family.density_poly();
    let mut total = 0.0;
    if a < 0.0 {
        let b0 = b.min(0.0);
        let sign = if s % 2 == 1 { -1.0 } else { 1.0 };
        total += sign * poly_moment(p, s, -b0, -a);
    }
    if b > 0.0 {
        total += poly_moment(p, s, a.max(0.0), b);
    }
    total
}

// ════════════════════════════════════════════════════════════════════════
// Operations
// ════════════════════════════════════════════════════════════════════════

/// Evaluates the kernel density K(v).
///
/// Zero outside [−1, 1], symmetric in v.
///
/// ```
/// use momderiv::kernel::{kernel_eval, KernelFamily, KernelSpec};
/// let spec = KernelSpec::new(KernelFamily::Triangular, 1.0).unwrap();
/// assert_eq!(kernel_eval(spec, 0.0), 1.0);
/// assert_eq!(kernel_eval(spec, 1.5), 0.0);
/// ```
pub fn kernel_eval(spec: KernelSpec, v: f64) -> f64 {
    spec.family.density(v)
}

/// Bandwidth-scaled kernel K_h(s) = K(s/h)/h.
pub fn kernel_eval_h(spec: KernelSpec, s: f64) -> f64 {
    spec.family.density(s / spec.h) / spec.h
}

/// Evaluates the pseudo-kernel K̄(s) = ∫_s^1 t·K(t) dt.
///
/// K̄ is even, nonnegative, and vanishes for |s| ≥ 1; the evenness follows
/// from the mean-zero property of K, since K̄(−s) − K̄(s) = ∫_{−s}^{s} t·K(t) dt = 0.
///
/// ```
/// use momderiv::kernel::{kbar, KernelFamily, KernelSpec};
/// let spec = KernelSpec::new(KernelFamily::Triangular, 1.0).unwrap();
/// assert!((kbar(spec, 0.0) - 1.0 / 6.0).abs() < 1e-15);
/// assert_eq!(kbar(spec, 1.0), 0.0);
/// ```
pub fn kbar(spec: KernelSpec, s: f64) -> f64 {
    let a = s.abs();
    if a >= 1.0 {
        return 0.0;
    }
    poly_eval(spec.family.kbar_poly(), a)
}

/// Bandwidth-scaled pseudo-kernel K̄_h(s) = K̄(s/h)/h.
pub fn kbar_h(spec: KernelSpec, s: f64) -> f64 {
    kbar(spec, s / spec.h) / spec.h
}

/// Truncated kernel moment ∫ t^s K(t) dt over [lower_cut, upper_cut] ∩ [−1, 1].
///
/// Covers both the one-sided moments κ_s(c) (cuts (−c, 1)) and the scaled
/// boundary moments κ_{s,h}(u) (cuts ((u_lower − u)/h, (u_upper − u)/h); see
/// [`kappa_h`]).  A degenerate or disjoint range integrates to zero.
pub fn kappa_moment(spec: KernelSpec, s: u32, lower_cut: f64, upper_cut: f64) -> f64 {
    trunc_moment(spec.family, s, lower_cut, upper_cut)
}

/// Scaled boundary moment κ_{s,h}(u) = ∫ t^s K(t) dt over
/// [(u_lower − u)/h, (u_upper − u)/h] ∩ [−1, 1], where [u_lower, u_upper] is
/// the admissible index interval.  Equals the full moment κ_s whenever u is at
/// least one bandwidth away from both ends.
pub fn kappa_h(spec: KernelSpec, s: u32, u: f64, u_lower: f64, u_upper: f64) -> f64 {
    kappa_moment(spec, s, (u_lower - u) / spec.h, (u_upper - u) / spec.h)
}

/// Boundary variance constant
/// Γ(c) = (∫_{−c}^1 K̄(s)² ds + c·κ₁(c)² − 2·κ₁(c)·∫_{−c}^0 K̄(s) ds) / κ₂(c)².
///
/// Γ(c) is the variance of the boundary-corrected pseudo-kernel
/// g(s) = K̄(max(s, −c)) − 1{s ≤ 0}·κ₁(c), normalized by κ₂(c)²: the identity
/// K̄(−c) = κ₁(c) makes g vanish identically below the cut, and expanding
/// E[g²] over the three regimes s < −c, s ∈ [−c, 0], s ∈ [0, 1] yields the
/// three terms in the numerator.  For c = 1 the formula reduces to
/// ∫ K̄² / κ₂² because κ₁(1) = 0.
///
/// # Panics
///
/// Panics if c is outside (0, 1] — the cut fraction is a programmer-supplied
/// constant, never data.
pub fn gamma_const(spec: KernelSpec, c: f64) -> f64 {
    assert!(
        c > 0.0 && c <= 1.0,
        "boundary cut must lie in (0, 1], got {c}"
    );
    let pbar = spec.family.kbar_poly();
    // ∫_{−c}^1 K̄² = ∫_0^c K̄² + ∫_0^1 K̄² by evenness.
    let int_kbar_sq = poly_sq_integral(pbar, c) + poly_sq_integral(pbar, 1.0);
    // ∫_{−c}^0 K̄ = ∫_0^c K̄ by evenness.
    let int_kbar_below = poly_moment(pbar, 0, 0.0, c);
    let k1 = trunc_moment(spec.family, 1, -c, 1.0);
    let k2 = trunc_moment(spec.family, 2, -c, 1.0);
    (int_kbar_sq + c * k1 * k1 - 2.0 * k1 * int_kbar_below) / (k2 * k2)
}

/// Cross-correlation integral ∫ K̄(s)·K̄(s·ratio) ds.
///
/// The integrand vanishes unless |s| ≤ min(1, 1/ratio), so by evenness the
/// value is 2·∫_0^m K̄(s)·K̄(s·ratio) ds with m = min(1, 1/ratio), computed
/// exactly from the coefficient product.  Satisfies the change-of-variables
/// identity f(1/r) = r·f(r); tends to 0 as ratio → ∞ (vanishing overlap) and
/// equals ∫ K̄² at ratio = 1.
///
/// # Panics
///
/// Panics if `ratio` is not positive (NaN included).  `ratio = +∞` is allowed
/// and returns 0.
pub fn kbar_cross_integral(spec: KernelSpec, ratio: f64) -> f64 {
    assert!(ratio > 0.0, "ratio must be positive, got {ratio}");
    let p = spec.family.kbar_poly();
    // Stable split of m^(i+j+1)·ratio^j into m^(i+1)·(m·ratio)^j, with
    // m·ratio = min(ratio, 1); at ratio = ∞ every m^(i+1) is 0.
    let m = ratio.recip().min(1.0);
    let mr = ratio.min(1.0);
    let mut acc = 0.0;
    for (i, &a) in p.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in p.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let e = (i + j + 1) as i32;
            acc += a * b * m.powi(i as i32 + 1) * mr.powi(j as i32) / f64::from(e);
        }
    }
    2.0 * acc
}

// ════════════════════════════════════════════════════════════════════════
// Kernel constants bundle
// ════════════════════════════════════════════════════════════════════════

/// The kernel-only constants appearing in bias and variance formulas, bundled
/// per family with the common interior values cached.
///
/// The truncated-moment map (s, c) ↦ κ_s(c) and the boundary constant map
/// c ↦ Γ(c) are exposed as methods; both are exact closed forms, cheap enough
/// to evaluate on demand.
#[derive(Debug, Clone, Copy)]
pub struct KernelConstants {
    /// Kernel family the constants belong to.
    pub family: KernelFamily,
    /// κ₂ = ∫ t² K(t) dt, the local-linear slope normalizer.
    pub kappa2: f64,
    /// κ₄ = ∫ t⁴ K(t) dt, entering the leading bias term.
    pub kappa4: f64,
    /// ∫_{−1}^1 K̄(s)² ds, entering the interior variance.
    pub kbar_sq_int: f64,
}

impl KernelConstants {
    /// Computes the constants bundle for a family.
    pub fn new(family: KernelFamily) -> Self {
        let kappa2 = trunc_moment(family, 2, -1.0, 1.0);
        let kappa4 = trunc_moment(family, 4, -1.0, 1.0);
        let kbar_sq_int = 2.0 * poly_sq_integral(family.kbar_poly(), 1.0);
        KernelConstants {
            family,
            kappa2,
            kappa4,
            kbar_sq_int,
        }
    }

    /// Truncated moment κ_s(c) = ∫_{−c}^1 t^s K(t) dt.
    pub fn kappa(&self, s: u32, c: f64) -> f64 {
        trunc_moment(self.family, s, -c, 1.0)
    }

    /// Boundary variance constant Γ(c); see [`gamma_const`].
    pub fn gamma(&self, c: f64) -> f64 {
        gamma_const(
            KernelSpec {
                family: self.family,
                h: 1.0,
            },
            c,
        )
    }
}

// ════════════════════════════════════════════════════════════════════════
// Tests
// ════════════════════════════════════════════════════════════════════════
