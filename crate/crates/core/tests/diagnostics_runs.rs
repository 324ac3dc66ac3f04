use bingham_core::constitutive::{FluidParams, RegIndex};
use bingham_core::diagnostics::{
    apriori_tracker, energy_audit, perturbation_decay, solenoidal_field, weak_residual,
    weak_residual_at,
};
use bingham_core::grid::{BoundarySpec, Grid, StaggeredField};
use bingham_core::scenario::Scenario;
use bingham_core::solver::{simulate, Flow, Forcing, RunOptions, SolveConfig, TimeStep};

fn cfg(dt: f64, t_end: f64, m: f64) -> SolveConfig {
    let mut c = SolveConfig::new(TimeStep::Fixed(dt), t_end, RegIndex::new(m).unwrap());
    c.picard_tol = 1e-10;
    c.poisson_tol = 1e-11;
    c
}

fn history_run() -> RunOptions {
    RunOptions {
        stop_at_steady: false,
        keep_history: true,
    }
}

#[test]
fn unforced_twins_decay_monotonically() {
    let g = Grid::new(12, 12, 1.0, 1.0).unwrap();
    let flow = Flow::new(
        g,
        BoundarySpec::no_slip(),
        FluidParams::new(0.1, 0.2).unwrap(),
        Forcing::Zero,
    )
    .unwrap();
    let base = solenoidal_field(&g, &flow.bc, 4, 3, 0.5);
    let delta = solenoidal_field(&g, &flow.bc, 5, 3, 1e-3);
    let rep = perturbation_decay(&base, &delta, &flow, &cfg(0.02, 1.0, 8.0)).unwrap();
    assert!(rep.monotone, "{:?}", rep.difference);
    assert!(rep.envelope_ok);
    assert!(rep.final_ratio < 1.0);
    assert_eq!(rep.times.len(), rep.difference.len());
}

#[test]
fn audit_balances_decay_energy() {
    let g = Grid::new(12, 12, 1.0, 1.0).unwrap();
    let sc = Scenario::decay(g, 8, 1.0);
    let flow = sc.flow(FluidParams::new(0.05, 0.1).unwrap()).unwrap();
    let c = cfg(0.005, 0.2, 8.0);
    let out = simulate(&sc.initial_field(), &flow, &c, history_run()).unwrap();
    let led = energy_audit(&out.history, &flow, c.m, 0.0, out.t).unwrap();
    assert_eq!(led.work, 0.0);
    assert!(led.coercive_ok());
    assert!(led.kinetic_end < led.kinetic_start);
    assert!(led.residual.abs() < 0.05 * led.dissipation, "{led:?}");
    // sub-windows add up
    let mid = out.history.snapshots[out.history.len() / 2].t;
    let a = energy_audit(&out.history, &flow, c.m, 0.0, mid).unwrap();
    let b = energy_audit(&out.history, &flow, c.m, mid, out.t).unwrap();
    assert!((a.dissipation + b.dissipation - led.dissipation).abs() < 1e-12 * led.dissipation);
}

#[test]
fn forced_channel_ledger_counts_work() {
    let g = Grid::new(8, 16, 1.0, 2.0).unwrap();
    let sc = Scenario::channel(g, 1.0).unwrap();
    let flow = sc.flow(FluidParams::new(1.0, 0.5).unwrap()).unwrap();
    let c = cfg(0.05, 1.0, 8.0);
    let out = simulate(&sc.initial_field(), &flow, &c, history_run()).unwrap();
    let led = energy_audit(&out.history, &flow, c.m, 0.0, out.t).unwrap();
    assert!(led.work > 0.0);
    assert!(led.kinetic_end > 0.0);
    assert!(led.residual.abs() < 0.05 * led.work, "{led:?}");
    let ap = apriori_tracker(&out.history, &flow, c.m).unwrap();
    assert_eq!(ap.growth_violations, 0);
    assert_eq!(ap.cells_checked, out.history.len() * g.cell_count());
    assert!(ap.sup_norm_h > 0.0 && ap.int_norm_v_sq > 0.0 && ap.int_tau_sq > 0.0);
}

#[test]
fn steady_weak_residual_shrinks_with_refinement() {
    let mut defects = Vec::new();
    let mut own = Vec::new();
    for n in [8, 16, 32] {
        let g = Grid::new(4, n, 1.0, 2.0).unwrap();
        let sc = Scenario::channel(g, 1.0).unwrap();
        let fluid = FluidParams::new(1.0, 0.0).unwrap();
        let flow = sc.flow(fluid).unwrap();
        let mut c = cfg(0.05, 60.0, 4.0);
        c.steady_tol = 1e-10;
        let out = simulate(&sc.initial_field(), &flow, &c, RunOptions::default()).unwrap();
        assert!(out.steady);
        // exact profile and discrete steady state against a wall-vanishing shear flow
        let exact = StaggeredField::from_fn(&g, |_, y| 0.5 * y * (2.0 - y), |_, _| 0.0);
        let test = StaggeredField::from_fn(
            &g,
            |_, y| (std::f64::consts::PI * y / 2.0).sin().powi(2),
            |_, _| 0.0,
        );
        defects.push(
            weak_residual_at(None, &exact, out.t, &test, &flow, c.m)
                .unwrap()
                .abs(),
        );
        own.push(
            weak_residual_at(None, &out.state, out.t, &test, &flow, c.m)
                .unwrap()
                .abs(),
        );
    }
    // the defect is pure quadrature, so it must vanish at second order or better
    for seq in [&defects, &own] {
        for w in seq.windows(2) {
            assert!((w[0] / w[1]).log2() >= 2.0, "{seq:?}");
        }
    }
}

#[test]
fn weak_residual_over_history_is_small_for_decay() {
    let g = Grid::new(10, 10, 1.0, 1.0).unwrap();
    let sc = Scenario::decay(g, 3, 1.0);
    let flow = sc.flow(FluidParams::new(0.1, 0.0).unwrap()).unwrap();
    let c = cfg(0.01, 0.1, 2.0);
    let out = simulate(&sc.initial_field(), &flow, &c, history_run()).unwrap();
    let phi = solenoidal_field(&g, &flow.bc, 77, 2, 1.0);
    let r = weak_residual(&out.history, &phi, &flow, c.m).unwrap();
    // splitting error only; the integrated pairings are O(1)
    assert!(r.abs() < 1e-2, "{r:e}");
}
