//! Runtime checks of the computable identities of the flow: energy balance,
//! weak-form and variational-inequality residuals, a-priori norms and
//! perturbation decay.
//!
//! All functions here only read recorded states. Strain rates are the
//! cell-centered tensors of [`compute_strain`]; the dissipation entering the
//! energy ledger uses the corner quadrature of the solver's viscous operator so
//! that the ledger residual measures time discretization only.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constitutive::{biviscosity_stress, gamma_m, FluidParams, RegIndex, SymTensor2};
use crate::error::{Error, Result};
use crate::grid::{
    compute_divergence, compute_strain, inner_h, ladyzhenskaya_ratio, max_abs, norm_h, norm_v,
    BoundarySpec, Grid, StaggeredField, TensorField,
};
use crate::solver::{
    advection_term, dissipation, prepare_initial, step, strain_energy, viscosity_field, Flow,
    History, SolveConfig, StepOutcome, TimeStep,
};

/// Relative slack for inequalities that hold exactly in real arithmetic.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// Energy balance over `[s1, s2]`; all entries per unit density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub s1: f64,
    pub s2: f64,
    pub kinetic_start: f64,
    pub kinetic_end: f64,
    pub dissipation: f64,
    /// `2μ ∫∫|Du|²` over the same interval and quadrature.
    pub coercive_bound: f64,
    pub work: f64,
    pub residual: f64,
}

impl EnergyLedger {
    pub fn coercive_ok(&self) -> bool {
        self.dissipation >= self.coercive_bound * (1.0 - ROUNDING_SLACK)
    }
}

/// Instantaneous energy quantities of one state.
#[derive(Debug, Clone, Copy)]
struct EnergySample {
    t: f64,
    kinetic: f64,
    dissipation_rate: f64,
    coercive_rate: f64,
    work_rate: f64,
}

fn energy_sample(t: f64, f: &StaggeredField, flow: &Flow, m: RegIndex) -> Result<EnergySample> {
    let (g, bc) = (&flow.grid, &flow.bc);
    let strain = compute_strain(f, g, bc)?;
    let eta = viscosity_field(f, &strain, g, bc, &flow.fluid, m);
    let work_rate = if flow.forcing.is_zero() {
        0.0
    } else {
        inner_h(&flow.forcing.on_faces(g, bc, t), f, g)
    };
    Ok(EnergySample {
        t,
        kinetic: 0.5 * inner_h(f, f, g),
        dissipation_rate: dissipation(f, g, bc, &eta),
        coercive_rate: 2.0 * flow.fluid.mu() * strain_energy(f, g, bc),
        work_rate,
    })
}

/// Trapezoidal accumulation of an energy ledger.
#[derive(Debug, Clone)]
struct LedgerAccumulator {
    start: EnergySample,
    last: EnergySample,
    dissipation: f64,
    coercive: f64,
    work: f64,
}

impl LedgerAccumulator {
    fn new(s: EnergySample) -> Self {
        Self {
            start: s,
            last: s,
            dissipation: 0.0,
            coercive: 0.0,
            work: 0.0,
        }
    }

    fn push(&mut self, s: EnergySample) {
        let dt = s.t - self.last.t;
        self.dissipation += 0.5 * dt * (self.last.dissipation_rate + s.dissipation_rate);
        self.coercive += 0.5 * dt * (self.last.coercive_rate + s.coercive_rate);
        self.work += 0.5 * dt * (self.last.work_rate + s.work_rate);
        self.last = s;
    }

    fn ledger(&self) -> EnergyLedger {
        EnergyLedger {
            s1: self.start.t,
            s2: self.last.t,
            kinetic_start: self.start.kinetic,
            kinetic_end: self.last.kinetic,
            dissipation: self.dissipation,
            coercive_bound: self.coercive,
            work: self.work,
            residual: self.last.kinetic + self.dissipation - self.work - self.start.kinetic,
        }
    }
}

/// Per-run record: scalar series, energy ledgers and hard-assertion flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub config: BTreeMap<String, serde_json::Value>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub ledgers: Vec<EnergyLedger>,
    pub assertions: BTreeMap<String, bool>,
    pub summary: BTreeMap<String, f64>,
    pub steady: bool,
}

impl RunReport {
    pub fn all_assertions_pass(&self) -> bool {
        self.assertions.values().all(|&ok| ok)
    }

    pub fn series(&self, name: &str) -> &[f64] {
        self.series.get(name).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Growth bound `|τ_m(D)| ≤ τ_y + 2μ|D|` over a tensor field; returns violations.
pub fn growth_violations(strain: &TensorField, fluid: &FluidParams, m: RegIndex) -> usize {
    strain
        .data
        .iter()
        .filter(|d| {
            let bound = fluid.tau_y() + 2.0 * fluid.mu() * d.norm();
            biviscosity_stress(**d, fluid, m).norm() > bound * (1.0 + ROUNDING_SLACK)
        })
        .count()
}

fn tau_l2_sq(strain: &TensorField, g: &Grid, fluid: &FluidParams, m: RegIndex) -> f64 {
    strain
        .data
        .iter()
        .map(|d| biviscosity_stress(*d, fluid, m).norm_sq())
        .sum::<f64>()
        * g.cell_volume()
}

/// Fraction of cells on the plastic branch `|D| > γ_m`.
pub fn yielded_fraction(strain: &TensorField, fluid: &FluidParams, m: RegIndex) -> f64 {
    let gamma = gamma_m(fluid, m);
    let n = strain.data.iter().filter(|d| d.norm() > gamma).count();
    n as f64 / strain.data.len() as f64
}

/// Builds a [`RunReport`] from states observed during a run.
pub struct Recorder<'a> {
    flow: &'a Flow,
    cfg: SolveConfig,
    report: RunReport,
    ledger: Option<LedgerAccumulator>,
    steps_in_ledger: usize,
    prev_kinetic: Option<f64>,
    growth_violations: usize,
    energy_increases: usize,
    max_div: f64,
    picard_total: usize,
    ortho_max: f64,
}

impl<'a> Recorder<'a> {
    pub fn new(flow: &'a Flow, cfg: &SolveConfig) -> Self {
        let mut report = RunReport::default();
        let c = &mut report.config;
        c.insert("nx".into(), flow.grid.nx.into());
        c.insert("ny".into(), flow.grid.ny.into());
        c.insert("lx".into(), flow.grid.lx.into());
        c.insert("ly".into(), flow.grid.ly.into());
        c.insert("mu".into(), flow.fluid.mu().into());
        c.insert("tau_y".into(), flow.fluid.tau_y().into());
        c.insert("m".into(), cfg.m.value().into());
        c.insert(
            "boundary".into(),
            serde_json::to_value(flow.bc).unwrap_or(serde_json::Value::Null),
        );
        c.insert(
            "solve".into(),
            serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null),
        );
        c.insert("forcing".into(), format!("{:?}", flow.forcing).into());
        Self {
            flow,
            cfg: *cfg,
            report,
            ledger: None,
            steps_in_ledger: 0,
            prev_kinetic: None,
            growth_violations: 0,
            energy_increases: 0,
            max_div: 0.0,
            picard_total: 0,
            ortho_max: 0.0,
        }
    }

    fn push(&mut self, name: &str, v: f64) {
        self.report
            .series
            .entry(name.to_string())
            .or_default()
            .push(v);
    }

    /// Records a state; `step` carries the outcome that produced it and the
    /// steady-state change measure.
    pub fn observe(&mut self, t: f64, f: &StaggeredField, step: Option<(&StepOutcome, f64)>) {
        let (flow, m) = (self.flow, self.cfg.m);
        let (g, bc) = (&flow.grid, &flow.bc);
        let Ok(strain) = compute_strain(f, g, bc) else {
            return;
        };
        let sample = match energy_sample(t, f, flow, m) {
            Ok(s) => s,
            Err(_) => return,
        };
        self.push("t", t);
        self.push("norm_h", norm_h(f, g));
        self.push("norm_v", norm_v(f, g, bc));
        self.push("tau_l2", tau_l2_sq(&strain, g, &flow.fluid, m).sqrt());
        self.push(
            "ladyzhenskaya_ratio",
            ladyzhenskaya_ratio(f, g, bc).unwrap_or(0.0),
        );
        self.push(
            "yielded_fraction",
            yielded_fraction(&strain, &flow.fluid, m),
        );
        self.push("kinetic", sample.kinetic);
        self.growth_violations += growth_violations(&strain, &flow.fluid, m);

        let div = compute_divergence(f, g)
            .map(|d| max_abs(&d))
            .unwrap_or(f64::NAN);
        self.push("max_div", div);

        if let Some((out, change)) = step {
            self.max_div = self.max_div.max(out.max_divergence);
            self.picard_total += out.picard_iterations;
            self.ortho_max = self.ortho_max.max(out.advection_orthogonality.abs());
            self.push("picard", out.picard_iterations as f64);
            self.push("poisson_iterations", out.poisson_iterations as f64);
            self.push("dt", out.dt);
            self.push("change", change);
            self.push("advection_orthogonality", out.advection_orthogonality);
            if let Some(prev) = self.prev_kinetic {
                // forward-Euler advection may add at most ½dt²‖C(u)u‖² plus the
                // orthogonality defect
                let allowance = out.advection_energy_allowance + 1e-14 * prev.max(1e-300);
                if sample.kinetic > prev + allowance {
                    self.energy_increases += 1;
                }
            }
        }
        self.prev_kinetic = Some(sample.kinetic);

        match self.ledger.as_mut() {
            None => self.ledger = Some(LedgerAccumulator::new(sample)),
            Some(acc) => {
                acc.push(sample);
                self.steps_in_ledger += 1;
                if self.steps_in_ledger >= self.cfg.report_every {
                    self.report.ledgers.push(acc.ledger());
                    self.ledger = Some(LedgerAccumulator::new(sample));
                    self.steps_in_ledger = 0;
                }
            }
        }
    }

    pub fn finish(mut self, steady: bool, steps: usize, t: f64) -> RunReport {
        if let Some(acc) = self.ledger.take() {
            if self.steps_in_ledger > 0 {
                self.report.ledgers.push(acc.ledger());
            }
        }
        let flow = self.flow;
        let r = &mut self.report;
        r.steady = steady;
        let max_over =
            |name: &str, r: &RunReport| r.series(name).iter().fold(0.0f64, |a, &b| a.max(b));
        let lady = max_over("ladyzhenskaya_ratio", r);
        let sup_h = max_over("norm_h", r);
        r.summary.insert("steps".into(), steps as f64);
        r.summary.insert("t_final".into(), t);
        r.summary.insert("max_div".into(), self.max_div);
        r.summary.insert("max_ladyzhenskaya_ratio".into(), lady);
        r.summary.insert("sup_norm_h".into(), sup_h);
        r.summary
            .insert("picard_total".into(), self.picard_total as f64);
        r.summary
            .insert("max_advection_orthogonality".into(), self.ortho_max);
        r.summary
            .insert("growth_violations".into(), self.growth_violations as f64);

        let finite = r.series.values().all(|s| s.iter().all(|v| v.is_finite()));
        let nonneg = ["norm_h", "norm_v", "tau_l2", "kinetic"]
            .iter()
            .all(|k| r.series(k).iter().all(|&v| v >= 0.0));
        r.assertions
            .insert("norms_finite_nonnegative".into(), finite && nonneg);
        r.assertions.insert(
            "divergence_within_10x_poisson_tol".into(),
            self.max_div <= 10.0 * self.cfg.poisson_tol,
        );
        r.assertions
            .insert("growth_bound".into(), self.growth_violations == 0);
        r.assertions.insert(
            "coercive_dissipation".into(),
            r.ledgers.iter().all(EnergyLedger::coercive_ok),
        );
        if flow.forcing.is_zero() && !flow.bc.has_moving_wall() {
            r.assertions
                .insert("energy_nonincreasing".into(), self.energy_increases == 0);
        }
        if flow.fluid.is_newtonian() {
            let single = r.series("picard").iter().all(|&n| n == 1.0);
            r.assertions
                .insert("picard_single_when_newtonian".into(), single);
        }
        self.report
    }
}

fn check_window(history: &History) -> Result<(f64, f64)> {
    match (history.snapshots.first(), history.snapshots.last()) {
        (Some(a), Some(b)) => Ok((a.t, b.t)),
        _ => Err(Error::invalid("history", "empty history")),
    }
}

/// Energy ledger between `s1` and `s2` from recorded states (trapezoidal in time).
pub fn energy_audit(
    history: &History,
    flow: &Flow,
    m: RegIndex,
    s1: f64,
    s2: f64,
) -> Result<EnergyLedger> {
    let (start, end) = check_window(history)?;
    let eps = 1e-9 * (end - start).abs().max(1.0);
    for t in [s1, s2] {
        if t < start - eps || t > end + eps {
            return Err(Error::TimeOutOfRange { t, start, end });
        }
    }
    if !(s1 < s2) {
        return Err(Error::invalid(
            "s1",
            format!("requires s1 < s2, got {s1} >= {s2}"),
        ));
    }
    let mut acc: Option<LedgerAccumulator> = None;
    for snap in &history.snapshots {
        if snap.t < s1 - eps || snap.t > s2 + eps {
            continue;
        }
        let s = energy_sample(snap.t, &snap.field, flow, m)?;
        match acc.as_mut() {
            None => acc = Some(LedgerAccumulator::new(s)),
            Some(a) => a.push(s),
        }
    }
    acc.map(|a| a.ledger())
        .ok_or_else(|| Error::invalid("history", "no snapshots inside the window"))
}

/// Cell-quadrature pairing `∫ A:B` of two tensor fields.
fn pair_tensors(a: &TensorField, b: &TensorField, g: &Grid) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| x.ddot(y))
        .sum::<f64>()
        * g.cell_volume()
}

fn require_solenoidal(test: &StaggeredField, g: &Grid, tol: f64) -> Result<()> {
    let d = max_abs(&compute_divergence(test, g)?);
    if d > tol {
        Err(Error::NonSolenoidal { max_div: d })
    } else {
        Ok(())
    }
}

/// Default divergence tolerance accepted for test fields.
pub const TEST_FIELD_DIV_TOL: f64 = 1e-8;

/// Weak-form defect at one time level with backward time difference:
/// `⟨(u − u_prev)/dt, φ⟩ + ∫τ_m(Du):Dφ + ⟨(u_prev·∇)u_prev, φ⟩ − ⟨f(t_prev), φ⟩`.
/// Without a previous state the time derivative is dropped and the convective
/// and forcing terms use `u` and `t`. Test strain rates use homogeneous walls.
pub fn weak_residual_at(
    prev: Option<(&StaggeredField, f64)>,
    u: &StaggeredField,
    t: f64,
    test: &StaggeredField,
    flow: &Flow,
    m: RegIndex,
) -> Result<f64> {
    let (g, bc) = (&flow.grid, &flow.bc);
    let du = compute_strain(u, g, bc)?;
    let stress = TensorField {
        nx: g.nx,
        ny: g.ny,
        data: du
            .data
            .iter()
            .map(|d| biviscosity_stress(*d, &flow.fluid, m))
            .collect(),
    };
    let dphi = compute_strain(test, g, &bc.homogeneous())?;
    let mut r = pair_tensors(&stress, &dphi, g);
    let (conv_state, t_force) = match prev {
        Some((p, dt)) => {
            r += inner_h(&u.axpy(-1.0, p), test, g) / dt;
            (p, t - dt)
        }
        None => (u, t),
    };
    r += inner_h(&advection_term(conv_state, g, bc), test, g);
    if !flow.forcing.is_zero() {
        r -= inner_h(&flow.forcing.on_faces(g, bc, t_force), test, g);
    }
    Ok(r)
}

/// Time-integrated weak-form defect over the whole history.
pub fn weak_residual(
    history: &History,
    test: &StaggeredField,
    flow: &Flow,
    m: RegIndex,
) -> Result<f64> {
    check_window(history)?;
    require_solenoidal(test, &flow.grid, TEST_FIELD_DIV_TOL)?;
    let mut total = 0.0;
    for w in history.snapshots.windows(2) {
        let dt = w[1].t - w[0].t;
        total +=
            dt * weak_residual_at(Some((&w[0].field, dt)), &w[1].field, w[1].t, test, flow, m)?;
    }
    Ok(total)
}

/// Left side minus right side of the Bingham variational inequality at one time
/// level (backward time difference as in [`weak_residual_at`]).
pub fn vi_residual_at(
    prev: Option<(&StaggeredField, f64)>,
    u: &StaggeredField,
    t: f64,
    test: &StaggeredField,
    flow: &Flow,
) -> Result<f64> {
    let (g, bc) = (&flow.grid, &flow.bc);
    let (mu, tau_y) = (flow.fluid.mu(), flow.fluid.tau_y());
    let du = compute_strain(u, g, bc)?;
    let dphi = compute_strain(test, g, bc)?;
    let vol = g.cell_volume();
    let mut r = 0.0;
    for (a, b) in du.data.iter().zip(&dphi.data) {
        r += (2.0 * mu * a.ddot(&(*b - *a)) + tau_y * (b.norm() - a.norm())) * vol;
    }
    let diff = test.axpy(-1.0, u);
    let (conv_state, t_force) = match prev {
        Some((p, dt)) => {
            r += inner_h(&u.axpy(-1.0, p), &diff, g) / dt;
            (p, t - dt)
        }
        None => (u, t),
    };
    r += inner_h(&advection_term(conv_state, g, bc), test, g);
    if !flow.forcing.is_zero() {
        r -= inner_h(&flow.forcing.on_faces(g, bc, t_force), &diff, g);
    }
    Ok(r)
}

/// Time-integrated variational-inequality residual over the history.
pub fn vi_residual(history: &History, test: &StaggeredField, flow: &Flow) -> Result<f64> {
    check_window(history)?;
    require_solenoidal(test, &flow.grid, TEST_FIELD_DIV_TOL)?;
    let mut total = 0.0;
    for w in history.snapshots.windows(2) {
        let dt = w[1].t - w[0].t;
        total += dt * vi_residual_at(Some((&w[0].field, dt)), &w[1].field, w[1].t, test, flow)?;
    }
    Ok(total)
}

/// VI residual together with a computable lower bound.
///
/// For the regularized solution the residual splits as
/// `w(φ − u) + b(u,u,u) + ∫g`, where `w` is the weak-form defect (linear in
/// the test field) and `g ≥ −τ_y·γ_m/4` cellwise, so `residual ≥ −tolerance`
/// with `tolerance = τ_y·γ_m·|Ω|/4 + |w(φ − u)| + |b(u,u,u)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViCheck {
    pub residual: f64,
    pub tolerance: f64,
    pub regularization_gap: f64,
    pub consistency: f64,
}

impl ViCheck {
    pub fn holds(&self) -> bool {
        self.residual >= -self.tolerance
    }
}

pub fn vi_check_at(
    prev: Option<(&StaggeredField, f64)>,
    u: &StaggeredField,
    t: f64,
    test: &StaggeredField,
    flow: &Flow,
    m: RegIndex,
) -> Result<ViCheck> {
    let g = &flow.grid;
    require_solenoidal(test, g, TEST_FIELD_DIV_TOL)?;
    let residual = vi_residual_at(prev, u, t, test, flow)?;
    let w_diff = weak_residual_at(prev, u, t, &test.axpy(-1.0, u), flow, m)?;
    let conv_state = prev.map(|(p, _)| p).unwrap_or(u);
    let b_uuu = inner_h(&advection_term(conv_state, g, &flow.bc), u, g);
    let regularization_gap = 0.25 * flow.fluid.tau_y() * gamma_m(&flow.fluid, m) * g.lx * g.ly;
    let consistency = w_diff.abs() + b_uuu.abs();
    Ok(ViCheck {
        residual,
        tolerance: regularization_gap + consistency,
        regularization_gap,
        consistency,
    })
}

/// A-priori quantities of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AprioriSummary {
    pub sup_norm_h: f64,
    pub int_norm_v_sq: f64,
    pub int_tau_sq: f64,
    pub growth_violations: usize,
    pub cells_checked: usize,
}

pub fn apriori_tracker(history: &History, flow: &Flow, m: RegIndex) -> Result<AprioriSummary> {
    let (g, bc) = (&flow.grid, &flow.bc);
    let mut out = AprioriSummary::default();
    let mut prev: Option<(f64, f64, f64)> = None;
    for snap in &history.snapshots {
        let strain = compute_strain(&snap.field, g, bc)?;
        let nv = norm_v(&snap.field, g, bc);
        let tau = tau_l2_sq(&strain, g, &flow.fluid, m);
        out.sup_norm_h = out.sup_norm_h.max(norm_h(&snap.field, g));
        out.growth_violations += growth_violations(&strain, &flow.fluid, m);
        out.cells_checked += strain.data.len();
        if let Some((t0, v0, s0)) = prev {
            let dt = snap.t - t0;
            out.int_norm_v_sq += 0.5 * dt * (v0 + nv * nv);
            out.int_tau_sq += 0.5 * dt * (s0 + tau);
        }
        prev = Some((snap.t, nv * nv, tau));
    }
    Ok(out)
}

/// Twin-trajectory comparison.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub difference: Vec<f64>,
    /// `∫₀ᵗ ‖u₁‖²_V ds` of the base trajectory.
    pub v_integral: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Fitted constant in `‖δ(t)‖² ≤ ‖δ(0)‖²·exp(c·∫‖u₁‖²_V)`.
    pub gronwall_c: f64,
    pub initial: f64,
    pub final_ratio: f64,
    pub monotone: bool,
    pub envelope_ok: bool,
    pub both_steady: bool,
    /// `‖u₁ − u₂‖_H` at the end of the run.
    pub final_difference: f64,
}

/// Runs `base_init` and `base_init + delta` in lockstep with identical steps
/// until both are steady or `t_end` is reached.
pub fn perturbation_decay(
    base_init: &StaggeredField,
    delta: &StaggeredField,
    flow: &Flow,
    cfg: &SolveConfig,
) -> Result<DecayReport> {
    cfg.validate()?;
    let g = &flow.grid;
    let bc = &flow.bc;
    let mut a = prepare_initial(base_init, flow, cfg)?;
    let mut b = prepare_initial(&base_init.axpy(1.0, delta), flow, cfg)?;
    let mut rep = DecayReport::default();
    let mut t = 0.0;
    let mut integral = 0.0;
    let mut prev_v = norm_v(&a, g, bc).powi(2);
    let record = |rep: &mut DecayReport, t: f64, a: &StaggeredField, b: &StaggeredField, i: f64| {
        rep.times.push(t);
        rep.difference.push(norm_h(&a.axpy(-1.0, b), g));
        rep.v_integral.push(i);
    };
    record(&mut rep, t, &a, &b, integral);
    while t < cfg.t_end * (1.0 - 1e-12) {
        let dt = cfg.dt_for(&a, g, t);
        let fixed = SolveConfig {
            time_step: TimeStep::Fixed(dt),
            ..*cfg
        };
        let sa = step(&a, flow, t, &fixed)?;
        let sb = step(&b, flow, t, &fixed)?;
        let ca = norm_h(&sa.field.axpy(-1.0, &a), g) / dt;
        let cb = norm_h(&sb.field.axpy(-1.0, &b), g) / dt;
        a = sa.field;
        b = sb.field;
        t += dt;
        let v = norm_v(&a, g, bc).powi(2);
        integral += 0.5 * dt * (prev_v + v);
        prev_v = v;
        record(&mut rep, t, &a, &b, integral);
        if ca < cfg.steady_tol && cb < cfg.steady_tol {
            rep.both_steady = true;
            break;
        }
    }
    finish_decay(&mut rep);
    rep.final_difference = norm_h(&a.axpy(-1.0, &b), g);
    Ok(rep)
}

fn finish_decay(rep: &mut DecayReport) {
    let d0 = rep.difference[0];
    rep.initial = d0;
    let last = *rep.difference.last().unwrap_or(&0.0);
    rep.final_ratio = if d0 > 0.0 { last / d0 } else { 0.0 };
    rep.monotone = rep
        .difference
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + ROUNDING_SLACK));
    let mut c: f64 = 0.0;
    if d0 > 0.0 {
        for (d, i) in rep.difference.iter().zip(&rep.v_integral) {
            if *i > 0.0 && *d > 0.0 {
                c = c.max(2.0 * (d / d0).ln() / i);
            }
        }
    }
    rep.gronwall_c = c;
    rep.envelope = rep
        .v_integral
        .iter()
        .map(|i| d0 * (0.5 * c * i).exp())
        .collect();
    rep.envelope_ok = rep
        .difference
        .iter()
        .zip(&rep.envelope)
        .all(|(d, e)| *d <= e * (1.0 + ROUNDING_SLACK));
}

/// Discretely solenoidal velocity with zero wall-normal component: the
/// discrete curl of a random smooth streamfunction that vanishes with its
/// normal derivative on the walls (periodic in `x` when the walls are).
/// Scaled so the largest face velocity equals `amplitude`.
pub fn solenoidal_field(
    g: &Grid,
    bc: &BoundarySpec,
    seed: u64,
    modes: usize,
    amplitude: f64,
) -> StaggeredField {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = modes.max(1);
    let bump = |s: f64, k: usize| (PI * s).sin() * (k as f64 * PI * s).sin();
    let mut coeffs = Vec::new();
    for kx in 0..=modes {
        for ky in 1..=modes {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            coeffs.push((kx, ky, a / ((kx + 1) * ky) as f64, phase));
        }
    }
    let psi = |x: f64, y: f64| -> f64 {
        let (sx, sy) = (x / g.lx, y / g.ly);
        coeffs
            .iter()
            .map(|&(kx, ky, a, phase)| {
                let xf = if bc.periodic_x {
                    (2.0 * PI * kx as f64 * sx + phase).cos()
                } else {
                    bump(sx, kx + 1)
                };
                a * xf * bump(sy, ky)
            })
            .sum()
    };
    let mut corner = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            corner[g.corner(i, j)] = psi(i as f64 * g.dx, j as f64 * g.dy);
        }
    }
    let mut f = StaggeredField::zeros(g);
    for j in 0..g.ny {
        for i in 0..=g.nx {
            let val = (corner[g.corner(i, j + 1)] - corner[g.corner(i, j)]) / g.dy;
            f.set_u(i, j, val);
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            let val = -(corner[g.corner(i + 1, j)] - corner[g.corner(i, j)]) / g.dx;
            f.set_v(i, j, val);
        }
    }
    f.apply_bcs(bc);
    let (um, vm) = f.max_abs_velocity();
    let peak = um.max(vm);
    if peak > 0.0 {
        let s = amplitude / peak;
        f.u.iter_mut().chain(f.v.iter_mut()).for_each(|x| *x *= s);
    }
    f
}

/// Zero strain tensor helper for callers comparing tensor fields.
pub fn zero_tensor_field(g: &Grid) -> TensorField {
    TensorField {
        nx: g.nx,
        ny: g.ny,
        data: vec![SymTensor2::ZERO; g.cell_count()],
    }
}
