//! Tensor-level Bingham and bi-viscosity constitutive laws.
//!
//! Norm convention: `|A|² = A:A = Σ A_ij A_ij`, so the off-diagonal entry of a
//! symmetric 2×2 tensor is counted twice. This is *not* the engineering
//! second invariant; under simple shear `u = (u(y), 0)` it gives
//! `|Du| = |u'|/√2` and `|τ| = √2·|τ_xy|`.
//!
//! The bi-viscosity law replaces the rigid branch of the Bingham law by a
//! Newtonian branch of viscosity `mμ` below the shear threshold
//! `γ_m = τ_y / (2μ(m − 1))`:
//!
//! ```text
//! τ_m(A) = 2mμ A                  if |A| ≤ γ_m
//!        = (2μ + τ_y/|A|) A       if |A| > γ_m
//! ```

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric 2×2 tensor stored as `(xx, yy, xy)`; `yx == xy` by construction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymTensor2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2 {
        xx: 0.0,
        yy: 0.0,
        xy: 0.0,
    };

    pub const fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    /// Double contraction `A:B`.
    #[inline]
    pub fn ddot(&self, other: &SymTensor2) -> f64 {
        self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn is_zero(&self) -> bool {
        self.xx == 0.0 && self.yy == 0.0 && self.xy == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.yy.is_finite() && self.xy.is_finite()
    }
}

impl Add for SymTensor2 {
    type Output = SymTensor2;
    fn add(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self.xx + rhs.xx, self.yy + rhs.yy, self.xy + rhs.xy)
    }
}

impl Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self.xx - rhs.xx, self.yy - rhs.yy, self.xy - rhs.xy)
    }
}

impl Neg for SymTensor2 {
    type Output = SymTensor2;
    fn neg(self) -> SymTensor2 {
        SymTensor2::new(-self.xx, -self.yy, -self.xy)
    }
}

impl Mul<SymTensor2> for f64 {
    type Output = SymTensor2;
    fn mul(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self * rhs.xx, self * rhs.yy, self * rhs.xy)
    }
}

/// Frobenius norm `sqrt(A:A)`.
pub fn tensor_norm(a: SymTensor2) -> f64 {
    a.norm()
}

/// Viscosity `μ > 0` and yield stress `τ_y ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    mu: f64,
    tau_y: f64,
}

impl FluidParams {
    pub fn new(mu: f64, tau_y: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::invalid(
                "mu",
                format!("must be finite and > 0, got {mu}"),
            ));
        }
        if !(tau_y.is_finite() && tau_y >= 0.0) {
            return Err(Error::invalid(
                "tau_y",
                format!("must be finite and >= 0, got {tau_y}"),
            ));
        }
        Ok(Self { mu, tau_y })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau_y(&self) -> f64 {
        self.tau_y
    }

    /// `τ_y = 0`: both laws collapse to `2μD`.
    pub fn is_newtonian(&self) -> bool {
        self.tau_y == 0.0
    }
}

/// Regularization index `m ≥ 2`; the artificial viscosity is `mμ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RegIndex(f64);

impl RegIndex {
    pub fn new(m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 2.0) {
            return Err(Error::invalid("m", format!("requires m >= 2, got {m}")));
        }
        Ok(Self(m))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// Unyielded stress bound `m/(m−1)·τ_y`.
    pub fn unyielded_bound(&self, p: &FluidParams) -> f64 {
        self.0 / (self.0 - 1.0) * p.tau_y
    }
}

/// Branch threshold `γ_m = τ_y / (2μ(m − 1))`.
pub fn gamma_m(p: &FluidParams, r: RegIndex) -> f64 {
    p.tau_y / (2.0 * p.mu * (r.0 - 1.0))
}

/// Outcome of the set-valued Bingham law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StressResult {
    Yielded(SymTensor2),
    /// `Du = 0`: the stress is only known to satisfy `|τ| ≤ bound`.
    Unyielded {
        bound: f64,
    },
}

impl StressResult {
    pub fn stress(&self) -> Option<SymTensor2> {
        match self {
            StressResult::Yielded(s) => Some(*s),
            StressResult::Unyielded { .. } => None,
        }
    }

    /// Convention used for the limit tensor: zero on the unyielded set.
    pub fn stress_or_zero(&self) -> SymTensor2 {
        self.stress().unwrap_or(SymTensor2::ZERO)
    }
}

// Shared by both laws so the plastic branch of `τ_m` is bitwise the Bingham stress.
#[inline]
fn plastic_stress(d: SymTensor2, norm: f64, p: &FluidParams) -> SymTensor2 {
    (2.0 * p.mu + p.tau_y / norm) * d
}

pub fn bingham_stress(d: SymTensor2, p: &FluidParams) -> StressResult {
    let n = d.norm();
    if n > 0.0 {
        StressResult::Yielded(plastic_stress(d, n, p))
    } else {
        StressResult::Unyielded { bound: p.tau_y }
    }
}

/// `τ_m(d)`; total, continuous, zero at zero.
pub fn biviscosity_stress(d: SymTensor2, p: &FluidParams, r: RegIndex) -> SymTensor2 {
    let n = d.norm();
    if n <= gamma_m(p, r) {
        (2.0 * r.0 * p.mu) * d
    } else {
        plastic_stress(d, n, p)
    }
}

/// Whether `|d|` lies on the Newtonian (`mμ`) branch.
pub fn on_newtonian_branch(shear: f64, p: &FluidParams, r: RegIndex) -> bool {
    shear <= gamma_m(p, r)
}

/// Scalar viscosity `η` with `τ_m(d) = 2η(|d|)·d`; bounded in `[μ, mμ]`.
pub fn effective_viscosity(shear: f64, p: &FluidParams, r: RegIndex) -> Result<f64> {
    if !(shear >= 0.0) {
        return Err(Error::invalid(
            "shear",
            format!("must be nonnegative, got {shear}"),
        ));
    }
    Ok(effective_viscosity_unchecked(shear, p, r))
}

#[inline]
pub(crate) fn effective_viscosity_unchecked(shear: f64, p: &FluidParams, r: RegIndex) -> f64 {
    if shear <= gamma_m(p, r) {
        r.0 * p.mu
    } else {
        p.mu + p.tau_y / (2.0 * shear)
    }
}

/// `(τ_m(a) − τ_m(b)) : (a − b)`, bounded below by `2μ|a − b|²`.
pub fn monotonicity_gap(a: SymTensor2, b: SymTensor2, p: &FluidParams, r: RegIndex) -> f64 {
    (biviscosity_stress(a, p, r) - biviscosity_stress(b, p, r)).ddot(&(a - b))
}

/// Same contraction for the Bingham law; only defined off the yield set.
pub fn bingham_monotonicity_gap(a: SymTensor2, b: SymTensor2, p: &FluidParams) -> Result<f64> {
    let (sa, sb) = match (bingham_stress(a, p), bingham_stress(b, p)) {
        (StressResult::Yielded(sa), StressResult::Yielded(sb)) => (sa, sb),
        _ => {
            return Err(Error::invalid(
                "strain",
                "Bingham stress is set-valued at a zero strain rate",
            ))
        }
    };
    Ok((sa - sb).ddot(&(a - b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn params(mu: f64, tau_y: f64) -> FluidParams {
        FluidParams::new(mu, tau_y).unwrap()
    }

    fn reg(m: f64) -> RegIndex {
        RegIndex::new(m).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn norm_examples() {
        assert_eq!(tensor_norm(SymTensor2::ZERO), 0.0);
        assert!(close(tensor_norm(SymTensor2::new(S, -S, 0.0)), 1.0));
        assert!(close(
            tensor_norm(SymTensor2::new(0.0, 0.0, 1.0)),
            2f64.sqrt()
        ));
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_m(&params(1.0, 2.0), reg(2.0)), 1.0);
        assert_eq!(gamma_m(&params(1.0, 0.0), reg(5.0)), 0.0);
        assert!(close(gamma_m(&params(1.0, 1.0), reg(11.0)), 0.05));
    }

    #[test]
    fn gamma_decreases_in_m() {
        let p = params(0.7, 1.3);
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let g = gamma_m(&p, reg(2.0 + k as f64 * 1.5));
            assert!(g < prev && g > 0.0);
            prev = g;
        }
        assert!(gamma_m(&p, reg(1e12)) < 1e-11);
    }

    #[test]
    fn rejects_small_m() {
        assert!(RegIndex::new(1.999).is_err());
        assert!(RegIndex::new(f64::NAN).is_err());
        assert!(RegIndex::new(2.0).is_ok());
    }

    #[test]
    fn rejects_bad_fluid() {
        assert!(FluidParams::new(0.0, 1.0).is_err());
        assert!(FluidParams::new(1.0, -1e-3).is_err());
        assert!(FluidParams::new(1.0, 0.0).unwrap().is_newtonian());
    }

    #[test]
    fn bingham_examples() {
        let d = SymTensor2::new(S, -S, 0.0);
        let s = bingham_stress(d, &params(1.0, 1.0)).stress().unwrap();
        assert!(close(s.xx, 3.0 * d.xx) && close(s.yy, 3.0 * d.yy) && s.xy == 0.0);

        match bingham_stress(SymTensor2::ZERO, &params(1.0, 0.7)) {
            StressResult::Unyielded { bound } => assert_eq!(bound, 0.7),
            other => panic!("expected unyielded, got {other:?}"),
        }

        let d = SymTensor2::new(0.3, -0.1, 0.25);
        let s = bingham_stress(d, &params(2.0, 0.0)).stress().unwrap();
        assert_eq!(s, 4.0 * d);
    }

    #[test]
    fn biviscosity_examples() {
        let p = params(1.0, 2.0);
        let r = reg(2.0);
        assert_eq!(
            biviscosity_stress(SymTensor2::ZERO, &p, r),
            SymTensor2::ZERO
        );

        let d = SymTensor2::new(2.0 * S, -2.0 * S, 0.0);
        let s = biviscosity_stress(d, &p, r);
        assert!(close(s.xx, 3.0 * d.xx) && close(s.yy, 3.0 * d.yy));

        // |d| = γ_m = 1 exactly; both branch formulas give 4d.
        let d = SymTensor2::new(0.0, 0.0, S);
        assert!(close(d.norm(), 1.0));
        let newtonian = (2.0 * 2.0 * 1.0) * d;
        let plastic = (2.0 * 1.0 + 2.0 / d.norm()) * d;
        let s = biviscosity_stress(d, &p, r);
        assert!(close(s.xy, 4.0 * d.xy));
        assert!(close(newtonian.xy, plastic.xy));
    }

    #[test]
    fn effective_viscosity_examples() {
        let p = params(1.0, 2.0);
        let r = reg(2.0);
        assert_eq!(effective_viscosity(0.0, &p, r).unwrap(), 2.0);
        assert_eq!(effective_viscosity(2.0, &p, r).unwrap(), 1.5);
        let far = effective_viscosity(1e15, &p, r).unwrap();
        assert!((far - 1.0).abs() < 1e-14);
        assert!(effective_viscosity(-1e-9, &p, r).is_err());
    }

    #[test]
    fn effective_viscosity_reproduces_stress() {
        let p = params(0.8, 1.1);
        let r = reg(7.0);
        for &scale in &[0.0, 1e-3, 0.05, 0.1, 1.0, 30.0] {
            let d = scale * SymTensor2::new(0.6, -0.2, 0.5);
            let eta = effective_viscosity(d.norm(), &p, r).unwrap();
            let s = biviscosity_stress(d, &p, r);
            let t = (2.0 * eta) * d;
            assert!((s - t).norm() <= 1e-13 * (1.0 + s.norm()));
            assert!(eta >= p.mu() && eta <= 7.0 * p.mu());
        }
    }

    #[test]
    fn monotonicity_examples() {
        let p = params(1.0, 2.0);
        let r = reg(2.0);
        let a = SymTensor2::new(0.5 * S, -0.5 * S, 0.0);
        let gap = monotonicity_gap(a, SymTensor2::ZERO, &p, r);
        assert!(close(gap, 1.0));
        assert_eq!(monotonicity_gap(a, a, &p, r), 0.0);
    }

    #[test]
    fn bingham_gap_examples() {
        let p = params(1.5, 0.0);
        let a = SymTensor2::new(0.2, 0.4, -0.3);
        let b = SymTensor2::new(-0.1, 0.3, 0.9);
        let gap = bingham_monotonicity_gap(a, b, &p).unwrap();
        assert!(close(gap, 2.0 * 1.5 * (a - b).norm_sq()));
        assert_eq!(
            bingham_monotonicity_gap(a, a, &params(1.0, 1.0)).unwrap(),
            0.0
        );
        assert!(bingham_monotonicity_gap(a, SymTensor2::ZERO, &p).is_err());
    }
}
