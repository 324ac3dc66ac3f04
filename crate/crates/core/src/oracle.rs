//! Numerical reference for the steady channel: the simple-shear law is
//! inverted by bisection and the shear rate is integrated from the wall with
//! adaptive Simpson quadrature. Shares nothing with the closed form in
//! [`crate::scenario::channel_oracle`] beyond the stress evaluation.

use crate::constitutive::{biviscosity_stress, FluidParams, RegIndex, SymTensor2};
use crate::error::{Error, Result};

/// Shear stress `τ_xy` produced by simple shear `du/dy = rate`.
pub fn simple_shear_stress(rate: f64, p: &FluidParams, r: RegIndex) -> f64 {
    let d = SymTensor2 {
        xx: 0.0,
        yy: 0.0,
        xy: 0.5 * rate,
    };
    biviscosity_stress(d, p, r).xy
}

/// The shear rate `γ ≥ 0` with `τ_xy(γ) = s`, for `s ≥ 0`.
pub fn shear_rate_for_stress(s: f64, p: &FluidParams, r: RegIndex) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    // the effective viscosity is at least μ, so τ_xy(s/μ) ≥ s
    let (mut lo, mut hi) = (0.0, s / p.mu());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if simple_shear_stress(mid, p, r) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` by adaptive Simpson to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Steady channel velocity at each `ys` (distance from the centerline),
/// `u(y) = ∫_{|y|}^{H} γ(G·s) ds`.
pub fn channel_profile_quadrature(
    ys: &[f64],
    g_force: f64,
    h_half: f64,
    p: &FluidParams,
    r: RegIndex,
) -> Result<Vec<f64>> {
    if !(g_force > 0.0 && h_half > 0.0) {
        return Err(Error::invalid("channel", "G and H must be > 0"));
    }
    let rate = |s: f64| shear_rate_for_stress(g_force * s, p, r);
    let tol = 1e-14 * g_force * h_half * h_half / p.mu();
    let mut order: Vec<(usize, f64)> = Vec::with_capacity(ys.len());
    for (k, &y) in ys.iter().enumerate() {
        let y = y.abs();
        if y > h_half * (1.0 + 1e-12) {
            return Err(Error::invalid("y", format!("|y| = {y} exceeds {h_half}")));
        }
        order.push((k, y.min(h_half)));
    }
    // integrate inward from the wall, one segment per sample
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = vec![0.0; ys.len()];
    let (mut at, mut acc) = (h_half, 0.0);
    for (k, y) in order {
        acc += integrate(&rate, y, at, tol);
        at = y;
        out[k] = acc;
    }
    Ok(out)
}
