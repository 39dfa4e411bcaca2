//! Scratch pilot for acceptance-test calibration (deleted before commit).
//!
//! Validates that the Nelder–Mead minimizer of the stacked smoothed-moment
//! norm lands at the minimizer of the convex kernel-weighted check
//! criterion — i.e. that the augmented estimator is computed correctly —
//! by probing the check criterion around the returned point.

use momderiv::competitors::{aqr_default_init, augmented_qr};
use momderiv::kernel::{KernelFamily, KernelSpec};
use momderiv::mc::dgp_replicate;
use nalgebra::DVector;

/// Kernel-weighted check criterion Q(θ, β) with a plain 201-point
/// trapezoid rule over the window (independent discretization from the
/// estimator's Gauss–Legendre rule).
fn check_criterion(
    data: &momderiv::data::Dataset,
    u: f64,
    kernel: KernelSpec,
    theta: &DVector<f64>,
    beta: &DVector<f64>,
) -> f64 {
    let nodes = 201usize;
    let h = kernel.h;
    let mut total = 0.0;
    for g in 0..nodes {
        let s = -1.0 + 2.0 * g as f64 / (nodes - 1) as f64;
        let w_trap = if g == 0 || g == nodes - 1 { 0.5 } else { 1.0 };
        let w = w_trap * (2.0 / (nodes - 1) as f64) * kernel.family.density(s);
        let v = u + h * s;
        let mut sum = 0.0;
        for i in 0..data.n() {
            let xi = data.x().row(i);
            let fitted = xi.dot(&theta.transpose()) + h * s * xi.dot(&beta.transpose());
            let r = data.y()[i] - fitted;
            sum += r * (v - if r < 0.0 { 1.0 } else { 0.0 });
        }
        total += w * sum / data.n() as f64;
    }
    total
}

fn main() -> Result<(), momderiv::Error> {
    let fam = KernelFamily::Triangular;
    let u = 0.5;
    let reps = 20usize;
    for &h in &[0.10, 0.20] {
        let kernel = KernelSpec::new(fam, h)?;
        let mut mean_beta = DVector::<f64>::zeros(2);
        let mut worse_probes = 0usize;
        let mut total_probes = 0usize;
        let mut max_drop: f64 = 0.0;
        for rep in 0..reps {
            let data = dgp_replicate(1000, 31, rep as u64)?;
            let (it, ib) = aqr_default_init(&data, u, fam)?;
            let est = augmented_qr(&data, u, kernel, &it, &ib)?;
            mean_beta += &est.theta_u;
            let q0 = check_criterion(&data, u, kernel, &est.theta, &est.theta_u);
            // Probe the check criterion along each coordinate.
            for k in 0..2 {
                for t in [-0.3, -0.1, 0.1, 0.3] {
                    let mut th = est.theta.clone();
                    th[k] += t;
                    let q = check_criterion(&data, u, kernel, &th, &est.theta_u);
                    total_probes += 1;
                    if q < q0 - 1e-9 {
                        worse_probes += 1;
                        max_drop = max_drop.max(q0 - q);
                    }
                    let mut be = est.theta_u.clone();
                    be[k] += t / h; // β moves scaled by window, comparable effect
                    let q = check_criterion(&data, u, kernel, &est.theta, &be);
                    total_probes += 1;
                    if q < q0 - 1e-9 {
                        worse_probes += 1;
                        max_drop = max_drop.max(q0 - q);
                    }
                }
            }
        }
        mean_beta /= reps as f64;
        println!(
            "h={h}: mean theta_u over {reps} reps = ({:+.3}, {:+.3}); check-criterion improving probes: {worse_probes}/{total_probes} (max drop {max_drop:.2e})",
            mean_beta[0], mean_beta[1]
        );
    }
    Ok(())
}
