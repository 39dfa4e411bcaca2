//! The pseudo-kernel machinery behind the Jacobian smoothing.
//!
//! A symmetric density kernel K on [−1, 1] induces the pseudo-kernel
//!
//!   K̄(s) = ∫_s¹ t·K(t) dt,
//!
//! which integrates the *tilted* kernel t·K(t) from s upward.  K̄ is what
//! actually multiplies the data in the Jacobian estimates, and its moments
//!
//!   κ_s(c) = ∫_{−c}¹ tˢ·K(t) dt
//!
//! control both the interior bias (through κ₂ and κ₄ at c = 1) and the
//! boundary bias (through the cut moments at c < 1).  The variance carries
//! the cross-integral Γ(c) of two pseudo-kernels.

use momderiv::kernel::{kappa_moment, kbar_cross_integral, KernelConstants, KernelFamily, KernelSpec};

fn main() -> Result<(), momderiv::Error> {
    // Interior constants for the three built-in families.  These match the
    // closed forms: e.g. the triangular kernel has κ₂ = 1/6, κ₄ = 1/15,
    // Γ(1) = 26/35.
    println!("interior kernel constants");
    println!("{:>14} {:>10} {:>10} {:>10}", "family", "κ₂", "κ₄", "Γ(1)");
    for family in [
        KernelFamily::Triangular,
        KernelFamily::Epanechnikov,
        KernelFamily::Biweight,
    ] {
        let k = KernelConstants::new(family);
        println!(
            "{:>14} {:>10.6} {:>10.6} {:>10.6}",
            format!("{family:?}"),
            k.kappa2,
            k.kappa4,
            k.gamma(1.0)
        );
    }

    // Near a boundary only a fraction c ∈ (0, 1] of the kernel window fits
    // inside the index interval; the cut moments pick up odd powers and an
    // O(h) bias term proportional to κ₃(c)/κ₂(c) appears.
    let spec = KernelSpec::new(KernelFamily::Triangular, 1.0)?;
    println!();
    println!("triangular cut moments κ_s(c) at c = 0.5 (half the window cut away)");
    for s in 1u32..=4 {
        let full = kappa_moment(spec, s, -1.0, 1.0);
        let cut = kappa_moment(spec, s, -0.5, 1.0);
        println!("  κ_{s}:  full window {full:>10.6}   cut {cut:>10.6}");
    }
    let k = KernelConstants::new(KernelFamily::Triangular);
    println!("  Γ(0.5) = {:.6} (vs Γ(1) = {:.6})", k.gamma(0.5), k.gamma(1.0));

    // The variance of the moment-based estimator couples two covariate
    // values through f_×(r) = ∫ K̄(t) K̄(rt) dt, which obeys the exact
    // rescaling identity f_×(1/r) = r · f_×(r).
    println!();
    println!("pseudo-kernel cross-integrals f_×(r) and the identity f_×(1/r) = r·f_×(r)");
    for &r in &[0.25, 0.5, 1.0, 2.0] {
        let direct = kbar_cross_integral(spec, r);
        let reflected = kbar_cross_integral(spec, 1.0 / r) / r;
        println!("  r = {r:<5} f_×(r) = {direct:.8}   f_×(1/r)/r = {reflected:.8}");
    }
    Ok(())
}
