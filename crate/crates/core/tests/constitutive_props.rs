use bingham_core::constitutive::{
    bingham_monotonicity_gap, bingham_stress, biviscosity_stress, effective_viscosity, gamma_m,
    monotonicity_gap, FluidParams, RegIndex, StressResult, SymTensor2,
};
use proptest::prelude::*;

const SLACK: f64 = 1e-12;

fn tensor() -> impl Strategy<Value = SymTensor2> {
    (-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b, c)| SymTensor2::new(a, b, c))
}

fn small_tensor() -> impl Strategy<Value = SymTensor2> {
    (-1e-3f64..1e-3, -1e-3f64..1e-3, -1e-3f64..1e-3).prop_map(|(a, b, c)| SymTensor2::new(a, b, c))
}

fn params() -> impl Strategy<Value = (FluidParams, RegIndex)> {
    (
        1e-2f64..1e2,
        prop_oneof![Just(0.0), 1e-3f64..1e2],
        2.0f64..1e4,
    )
        .prop_map(|(mu, ty, m)| (FluidParams::new(mu, ty).unwrap(), RegIndex::new(m).unwrap()))
}

fn plastic_params() -> impl Strategy<Value = (FluidParams, RegIndex)> {
    (1e-2f64..1e2, 1e-3f64..1e2, 2.0f64..1e4)
        .prop_map(|(mu, ty, m)| (FluidParams::new(mu, ty).unwrap(), RegIndex::new(m).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn coercive(d in prop_oneof![tensor(), small_tensor()], (p, r) in params()) {
        let t = biviscosity_stress(d, &p, r);
        let lhs = t.ddot(&d);
        let rhs = 2.0 * p.mu() * d.norm_sq();
        prop_assert!(lhs >= rhs - SLACK * (t.norm() * d.norm() + rhs));
    }

    #[test]
    fn bounded_growth(d in prop_oneof![tensor(), small_tensor()], (p, r) in params()) {
        let t = biviscosity_stress(d, &p, r);
        prop_assert!(t.norm() <= (p.tau_y() + 2.0 * p.mu() * d.norm()) * (1.0 + SLACK));
    }

    #[test]
    fn strongly_monotone(
        a in prop_oneof![tensor(), small_tensor()],
        b in prop_oneof![tensor(), small_tensor()],
        (p, r) in params(),
    ) {
        let gap = monotonicity_gap(a, b, &p, r);
        let bound = 2.0 * p.mu() * (a - b).norm_sq();
        let (ta, tb) = (biviscosity_stress(a, &p, r), biviscosity_stress(b, &p, r));
        let scale = (ta.norm() + tb.norm()) * (a - b).norm() + bound;
        prop_assert!(gap >= bound - SLACK * scale);
    }

    #[test]
    fn plastic_branch_is_bingham(d in tensor(), (p, r) in params()) {
        prop_assume!(d.norm() > gamma_m(&p, r));
        prop_assert_eq!(Some(biviscosity_stress(d, &p, r)), bingham_stress(d, &p).stress());
    }

    #[test]
    fn continuous_across_switch(dir in tensor(), (p, r) in plastic_params()) {
        prop_assume!(dir.norm() > 1e-6);
        let gm = gamma_m(&p, r);
        let e = (gm / dir.norm()) * dir;
        let inside = biviscosity_stress((1.0 - 1e-9) * e, &p, r);
        let outside = biviscosity_stress((1.0 + 1e-9) * e, &p, r);
        let scale = biviscosity_stress(e, &p, r).norm();
        prop_assert!((inside - outside).norm() <= 1e-8 * scale);
    }

    #[test]
    fn viscosity_in_band(shear in 0.0f64..1e4, (p, r) in params()) {
        let eta = effective_viscosity(shear, &p, r).unwrap();
        prop_assert!(eta >= p.mu() && eta <= r.value() * p.mu() * (1.0 + SLACK));
    }

    #[test]
    fn bingham_monotone_off_yield_set(a in tensor(), b in tensor(), (p, _r) in params()) {
        prop_assume!(a.norm() > 0.0 && b.norm() > 0.0);
        let gap = bingham_monotonicity_gap(a, b, &p).unwrap();
        let bound = 2.0 * p.mu() * (a - b).norm_sq();
        let scale = (p.tau_y() + 2.0 * p.mu() * (a.norm() + b.norm())) * (a - b).norm();
        prop_assert!(gap >= bound - SLACK * scale);
    }
}

#[test]
fn zero_strain_gives_zero_stress() {
    let p = FluidParams::new(1.0, 0.5).unwrap();
    let r = RegIndex::new(64.0).unwrap();
    assert_eq!(
        biviscosity_stress(SymTensor2::ZERO, &p, r),
        SymTensor2::ZERO
    );
    assert_eq!(
        bingham_stress(SymTensor2::ZERO, &p),
        StressResult::Unyielded { bound: 0.5 }
    );
}

#[test]
fn simple_shear_values() {
    // u' = 1: |D| = 1/√2, plastic branch at m = 64
    let p = FluidParams::new(1.0, 0.5).unwrap();
    let r = RegIndex::new(64.0).unwrap();
    let d = SymTensor2::new(0.0, 0.0, 0.5);
    let t = biviscosity_stress(d, &p, r);
    let expect = 0.5 * (2.0 + 0.5 * std::f64::consts::SQRT_2);
    assert!((t.xy - expect).abs() < 1e-15);
    assert_eq!(t.xx, 0.0);
}

#[test]
fn rejects_bad_parameters() {
    assert!(FluidParams::new(0.0, 1.0).is_err());
    assert!(FluidParams::new(1.0, -1.0).is_err());
    assert!(FluidParams::new(f64::NAN, 1.0).is_err());
    assert!(RegIndex::new(1.5).is_err());
    assert!(RegIndex::new(f64::INFINITY).is_err());
    let p = FluidParams::new(1.0, 1.0).unwrap();
    assert!(effective_viscosity(-1.0, &p, RegIndex::new(2.0).unwrap()).is_err());
}
