//! Sweeps over the regularization index `m` toward the Bingham limit.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constitutive::{
    bingham_stress, biviscosity_stress, gamma_m, FluidParams, RegIndex, StressResult,
};
use crate::diagnostics::{RunReport, ROUNDING_SLACK};
use crate::error::{Error, Result};
use crate::grid::{compute_strain, norm_h, norm_v, StaggeredField, TensorField};
use crate::scenario::{bingham_plug_half_width, channel_plug_half_width, Scenario, ScenarioKind};
use crate::solver::{run_to_steady, SolveConfig};

/// Fixed-threshold yield classification uses `|D| > EPS_YIELD · max|D|`.
pub const EPS_YIELD: f64 = 1e-6;

/// Steady `‖u‖_H` over the sweep (from `m = 4` on) must stay within this ratio.
pub const NORM_BAND: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MSchedule {
    values: Vec<RegIndex>,
    pub warm_start: bool,
}

impl MSchedule {
    pub fn new(values: &[f64], warm_start: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("m_schedule", "must not be empty"));
        }
        let values = values
            .iter()
            .map(|&m| RegIndex::new(m))
            .collect::<Result<Vec<_>>>()?;
        if values.windows(2).any(|w| w[1].value() <= w[0].value()) {
            return Err(Error::invalid("m_schedule", "must be strictly increasing"));
        }
        Ok(Self { values, warm_start })
    }

    pub fn single(m: RegIndex) -> Self {
        Self {
            values: vec![m],
            warm_start: true,
        }
    }

    pub fn values(&self) -> &[RegIndex] {
        &self.values
    }
}

impl Default for MSchedule {
    fn default() -> Self {
        Self::new(&[2.0, 4.0, 8.0, 16.0, 32.0, 64.0], true).expect("default schedule is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YieldState {
    Yielded,
    Unyielded,
}

/// Per-cell branch membership: yielded iff `|D| > γ_m`.
pub fn classify_yield(d: &TensorField, p: &FluidParams, r: RegIndex) -> Vec<YieldState> {
    let gamma = gamma_m(p, r);
    d.data
        .iter()
        .map(|t| {
            if t.norm() > gamma {
                YieldState::Yielded
            } else {
                YieldState::Unyielded
            }
        })
        .collect()
}

/// Stress statistics of one steady state split by branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldStats {
    pub yielded_fraction: f64,
    pub yielded_fraction_fixed: f64,
    pub max_unyielded_stress: f64,
    pub unyielded_bound: f64,
    pub bound_violations: usize,
    /// `max |τ_m(D) − τ(D)|` over yielded cells.
    pub yielded_deviation: f64,
}

pub fn yield_stats(d: &TensorField, p: &FluidParams, r: RegIndex) -> YieldStats {
    let flags = classify_yield(d, p, r);
    let bound = r.unyielded_bound(p);
    let max_shear = d.data.iter().fold(0.0f64, |a, t| a.max(t.norm()));
    let eps = EPS_YIELD * max_shear;
    let mut stats = YieldStats {
        yielded_fraction: 0.0,
        yielded_fraction_fixed: 0.0,
        max_unyielded_stress: 0.0,
        unyielded_bound: bound,
        bound_violations: 0,
        yielded_deviation: 0.0,
    };
    let (mut yielded, mut fixed) = (0usize, 0usize);
    for (t, flag) in d.data.iter().zip(&flags) {
        if t.norm() > eps {
            fixed += 1;
        }
        let tau_m = biviscosity_stress(*t, p, r);
        match flag {
            YieldState::Yielded => {
                yielded += 1;
                let dev = match bingham_stress(*t, p) {
                    StressResult::Yielded(tau) => (tau_m - tau).norm(),
                    StressResult::Unyielded { .. } => f64::INFINITY,
                };
                stats.yielded_deviation = stats.yielded_deviation.max(dev);
            }
            YieldState::Unyielded => {
                let s = tau_m.norm();
                stats.max_unyielded_stress = stats.max_unyielded_stress.max(s);
                if s > bound * (1.0 + ROUNDING_SLACK) {
                    stats.bound_violations += 1;
                }
            }
        }
    }
    let n = d.data.len().max(1) as f64;
    stats.yielded_fraction = yielded as f64 / n;
    stats.yielded_fraction_fixed = fixed as f64 / n;
    stats
}

/// Half-width of the unyielded band in the middle column of a channel state.
pub fn plug_half_width(flags: &[YieldState], nx: usize, ny: usize, dy: f64) -> f64 {
    let i = nx / 2;
    let n = (0..ny)
        .filter(|&j| flags[j * nx + i] == YieldState::Unyielded)
        .count();
    0.5 * n as f64 * dy
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MEntry {
    pub m: f64,
    pub steady: bool,
    pub steps: usize,
    pub t_final: f64,
    /// `‖u_m − u_{m_prev}‖_H`; absent for the first member.
    pub delta_h: Option<f64>,
    pub norm_h: f64,
    pub norm_v: f64,
    pub sup_norm_h: f64,
    pub stats: YieldStats,
    pub plug_half_width: Option<f64>,
    pub oracle_plug_half_width: Option<f64>,
    pub max_div: f64,
    pub picard_total: f64,
    pub assertions: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitReport {
    pub scenario: String,
    pub warm_start: bool,
    pub entries: Vec<MEntry>,
    /// Rigid-core half-width of the Bingham limit (channel with `τ_y > 0`).
    pub bingham_plug_half_width: Option<f64>,
    pub cell_height: f64,
    pub contracts: BTreeMap<String, bool>,
    #[serde(skip)]
    pub states: Vec<StaggeredField>,
}

impl LimitReport {
    pub fn contracts_hold(&self) -> bool {
        self.contracts.values().all(|&ok| ok)
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.delta_h).collect()
    }

    /// One CSV row of scalar metrics per `m`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "m,steady,delta_h,norm_h,norm_v,yielded_fraction,yielded_fraction_fixed,\
             max_unyielded_stress,unyielded_bound,bound_violations,yielded_deviation,\
             plug_half_width,oracle_plug_half_width,max_div,picard_total"
        )?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{},{},{:e},{}",
                e.m,
                e.steady,
                opt(e.delta_h),
                e.norm_h,
                e.norm_v,
                e.stats.yielded_fraction,
                e.stats.yielded_fraction_fixed,
                e.stats.max_unyielded_stress,
                e.stats.unyielded_bound,
                e.stats.bound_violations,
                e.stats.yielded_deviation,
                opt(e.plug_half_width),
                opt(e.oracle_plug_half_width),
                e.max_div,
                e.picard_total
            )?;
        }
        Ok(())
    }
}

fn summary(r: &RunReport, key: &str) -> f64 {
    r.summary.get(key).copied().unwrap_or(f64::NAN)
}

/// Steady solves of `scenario` for every `m` in the schedule.
///
/// With `warm_start`, each member starts from the previous steady state. When
/// `τ_y = 0` the law does not depend on `m` and every member starts from the
/// scenario's initial field, so the states agree bitwise.
pub fn run_m_sweep(
    scenario: &Scenario,
    schedule: &MSchedule,
    cfg: &SolveConfig,
    fluid: FluidParams,
) -> Result<LimitReport> {
    let flow = scenario.flow(fluid)?;
    let g = &scenario.grid;
    let channel_force = match scenario.kind {
        ScenarioKind::Channel { force_gx } => Some(force_gx),
        _ => None,
    };
    let track_plug = channel_force.is_some() && !fluid.is_newtonian();
    let warm = schedule.warm_start && !fluid.is_newtonian();

    let mut entries = Vec::new();
    let mut states: Vec<StaggeredField> = Vec::new();
    for &r in schedule.values() {
        let wrap = |e: Error| Error::Sweep {
            m: r.value(),
            source: Box::new(e),
        };
        let init = match states.last() {
            Some(prev) if warm => prev.clone(),
            _ => scenario.initial_field(),
        };
        let mut member_cfg = *cfg;
        member_cfg.m = r;
        let (state, report) = run_to_steady(&init, &flow, &member_cfg).map_err(wrap)?;
        let strain = compute_strain(&state, g, &flow.bc).map_err(wrap)?;
        let stats = yield_stats(&strain, &fluid, r);
        let (plug, oracle_plug) = match channel_force {
            Some(force) if track_plug => {
                let flags = classify_yield(&strain, &fluid, r);
                (
                    Some(plug_half_width(&flags, g.nx, g.ny, g.dy)),
                    Some(channel_plug_half_width(
                        force,
                        scenario.half_width(),
                        &fluid,
                        r,
                    )),
                )
            }
            _ => (None, None),
        };
        entries.push(MEntry {
            m: r.value(),
            steady: report.steady,
            steps: summary(&report, "steps") as usize,
            t_final: summary(&report, "t_final"),
            delta_h: states.last().map(|prev| norm_h(&state.axpy(-1.0, prev), g)),
            norm_h: norm_h(&state, g),
            norm_v: norm_v(&state, g, &flow.bc),
            sup_norm_h: summary(&report, "sup_norm_h"),
            stats,
            plug_half_width: plug,
            oracle_plug_half_width: oracle_plug,
            max_div: summary(&report, "max_div"),
            picard_total: summary(&report, "picard_total"),
            assertions: report.assertions,
        });
        states.push(state);
    }

    let mut report = LimitReport {
        scenario: scenario.name().to_string(),
        warm_start: warm,
        entries,
        bingham_plug_half_width: match channel_force {
            Some(force) if track_plug => Some(bingham_plug_half_width(force, &fluid)),
            _ => None,
        },
        cell_height: g.dy,
        contracts: BTreeMap::new(),
        states,
    };
    report.contracts = evaluate_contracts(&report);
    Ok(report)
}

fn evaluate_contracts(rep: &LimitReport) -> BTreeMap<String, bool> {
    let mut c = BTreeMap::new();
    let e = &rep.entries;
    let deltas = rep.deltas();
    c.insert(
        "deltas_nonincreasing".into(),
        deltas
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + ROUNDING_SLACK) + f64::MIN_POSITIVE),
    );
    c.insert(
        "unyielded_bound".into(),
        e.iter().all(|x| x.stats.bound_violations == 0),
    );
    c.insert(
        "yielded_deviation_zero".into(),
        e.iter().all(|x| x.stats.yielded_deviation == 0.0),
    );
    c.insert("all_steady".into(), e.iter().all(|x| x.steady));
    c.insert(
        "member_assertions".into(),
        e.iter().all(|x| x.assertions.values().all(|&ok| ok)),
    );
    let band: Vec<f64> = e.iter().filter(|x| x.m >= 4.0).map(|x| x.norm_h).collect();
    if band.len() >= 2 {
        let hi = band.iter().cloned().fold(f64::MIN, f64::max);
        let lo = band.iter().cloned().fold(f64::MAX, f64::min);
        c.insert("norm_band".into(), hi <= NORM_BAND * lo);
    }
    if let Some(limit) = rep.bingham_plug_half_width {
        let plugs: Vec<(f64, f64)> = e
            .iter()
            .filter_map(|x| Some((x.plug_half_width?, x.oracle_plug_half_width?)))
            .collect();
        let h = rep.cell_height;
        c.insert(
            "plug_within_one_cell".into(),
            plugs
                .iter()
                .all(|(got, want)| (got - want).abs() <= h * (1.0 + 1e-9)),
        );
        let monotone = plugs.windows(2).all(|w| w[1].0 <= w[0].0);
        let closer = match (plugs.first(), plugs.last()) {
            (Some(a), Some(b)) => (b.0 - limit).abs() <= (a.0 - limit).abs(),
            _ => true,
        };
        c.insert("plug_monotone_toward_limit".into(), monotone && closer);
    }
    c
}
