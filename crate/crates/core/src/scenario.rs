//! Benchmark problems and the closed-form channel profile.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::constitutive::{FluidParams, RegIndex};
use crate::continuation::{classify_yield, plug_half_width};
use crate::diagnostics::solenoidal_field;
use crate::error::{Error, Result};
use crate::grid::{compute_strain, BoundarySpec, Grid, StaggeredField};
use crate::solver::{Flow, Forcing};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Plates at `y = 0` and `y = ly`, periodic in `x`, driven by a uniform
    /// body force `G` along `x`.
    Channel { force_gx: f64 },
    /// Closed box with the top wall sliding at `lid_speed`.
    Cavity { lid_speed: f64 },
    /// Closed box, no forcing, random solenoidal initial field.
    Decay { seed: u64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub grid: Grid,
}

impl Scenario {
    pub fn channel(grid: Grid, force_gx: f64) -> Result<Self> {
        if !(force_gx.is_finite() && force_gx > 0.0) {
            return Err(Error::invalid(
                "force_gx",
                format!("must be > 0, got {force_gx}"),
            ));
        }
        Ok(Self {
            kind: ScenarioKind::Channel { force_gx },
            grid,
        })
    }

    pub fn cavity(grid: Grid, lid_speed: f64) -> Result<Self> {
        if !lid_speed.is_finite() {
            return Err(Error::invalid("lid_speed", "must be finite"));
        }
        Ok(Self {
            kind: ScenarioKind::Cavity { lid_speed },
            grid,
        })
    }

    pub fn decay(grid: Grid, seed: u64, amplitude: f64) -> Self {
        Self {
            kind: ScenarioKind::Decay { seed, amplitude },
            grid,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ScenarioKind::Channel { .. } => "channel",
            ScenarioKind::Cavity { .. } => "cavity",
            ScenarioKind::Decay { .. } => "decay",
        }
    }

    pub fn boundary(&self) -> BoundarySpec {
        match self.kind {
            ScenarioKind::Channel { .. } => BoundarySpec::channel(),
            ScenarioKind::Cavity { lid_speed } => BoundarySpec::lid_driven(lid_speed),
            ScenarioKind::Decay { .. } => BoundarySpec::no_slip(),
        }
    }

    pub fn forcing(&self) -> Forcing {
        match self.kind {
            ScenarioKind::Channel { force_gx } => Forcing::Constant {
                gx: force_gx,
                gy: 0.0,
            },
            _ => Forcing::Zero,
        }
    }

    pub fn initial_field(&self) -> StaggeredField {
        match self.kind {
            ScenarioKind::Decay { seed, amplitude } => {
                solenoidal_field(&self.grid, &self.boundary(), seed, 4, amplitude)
            }
            _ => StaggeredField::zeros(&self.grid),
        }
    }

    pub fn flow(&self, fluid: FluidParams) -> Result<Flow> {
        Flow::new(self.grid, self.boundary(), fluid, self.forcing())
    }

    /// Channel half-width `ly/2`; the centerline is `y = ly/2`.
    pub fn half_width(&self) -> f64 {
        0.5 * self.grid.ly
    }
}

/// Distance from the centerline below which the steady bi-viscosity channel
/// flow sits on the Newtonian branch: `m/(m−1)·τ_y/(√2·G)`, capped at `H`.
///
/// Under the `|A|² = A:A` norm, simple shear has `|τ| = √2·|τ_xy|`, so the
/// shear stress `G·|y|` reaches the branch switch at `|τ_xy| = m/(m−1)·τ_y/√2`.
pub fn channel_plug_half_width(g_force: f64, h_half: f64, p: &FluidParams, r: RegIndex) -> f64 {
    (r.unyielded_bound(p) / (SQRT_2 * g_force)).min(h_half)
}

/// Rigid-core half-width of the Bingham limit, `τ_y/(√2·G)`.
pub fn bingham_plug_half_width(g_force: f64, p: &FluidParams) -> f64 {
    p.tau_y() / (SQRT_2 * g_force)
}

/// Exact steady velocity of the force-driven bi-viscosity channel at distance
/// `y` from the centerline, with no-slip plates at `y = ±h_half`.
///
/// With `τ_xy = −G·y`, the plastic branch gives `μ|u'| = G|y| − τ_y/√2` and the
/// Newtonian branch `mμ|u'| = G|y|`; integrating from the wall yields the
/// piecewise profile below.
pub fn channel_oracle(
    y: f64,
    g_force: f64,
    h_half: f64,
    p: &FluidParams,
    r: RegIndex,
) -> Result<f64> {
    if !(g_force.is_finite() && g_force > 0.0) {
        return Err(Error::invalid("G", format!("must be > 0, got {g_force}")));
    }
    if !(h_half.is_finite() && h_half > 0.0) {
        return Err(Error::invalid(
            "H_half",
            format!("must be > 0, got {h_half}"),
        ));
    }
    let y = y.abs();
    if y > h_half * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "y",
            format!("|y| = {y} exceeds the half-width {h_half}"),
        ));
    }
    let y = y.min(h_half);
    let (mu, m) = (p.mu(), r.value());
    let yc = r.unyielded_bound(p) / (SQRT_2 * g_force);
    let plastic = |s: f64| {
        (0.5 * g_force * (h_half * h_half - s * s) - p.tau_y() / SQRT_2 * (h_half - s)) / mu
    };
    let newtonian = |s: f64, top: f64| 0.5 * g_force * (top * top - s * s) / (m * mu);
    Ok(if yc >= h_half {
        newtonian(y, h_half)
    } else if y >= yc {
        plastic(y)
    } else {
        plastic(yc) + newtonian(y, yc)
    })
}

/// Steady channel state against [`channel_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    /// Relative L² error of the cell-center velocity, all columns.
    pub rel_l2_error: f64,
    pub max_abs_error: f64,
    pub centerline_velocity: f64,
    pub oracle_centerline_velocity: f64,
    /// Detected unyielded half-width in the middle column (`τ_y > 0` only).
    pub plug_half_width: Option<f64>,
    pub oracle_plug_half_width: Option<f64>,
    pub cell_height: f64,
}

impl ProfileComparison {
    pub fn plug_within_one_cell(&self) -> bool {
        match (self.plug_half_width, self.oracle_plug_half_width) {
            (Some(a), Some(b)) => (a - b).abs() <= self.cell_height * (1.0 + 1e-9),
            _ => true,
        }
    }
}

pub fn compare_channel_profile(
    f: &StaggeredField,
    scenario: &Scenario,
    fluid: &FluidParams,
    r: RegIndex,
) -> Result<ProfileComparison> {
    let ScenarioKind::Channel { force_gx } = scenario.kind else {
        return Err(Error::invalid(
            "scenario",
            "profile comparison needs a channel",
        ));
    };
    let g = &scenario.grid;
    f.check(g)?;
    let h = scenario.half_width();
    let (mut num, mut den, mut max_err) = (0.0, 0.0, 0.0f64);
    for j in 0..g.ny {
        let (_, y) = g.cell_center(0, j);
        let exact = channel_oracle(y - h, force_gx, h, fluid, r)?;
        for i in 0..g.nx {
            let (u, _) = f.center_velocity(i, j);
            num += (u - exact).powi(2);
            den += exact * exact;
            max_err = max_err.max((u - exact).abs());
        }
    }
    let (plug, oracle_plug) = if fluid.is_newtonian() {
        (None, None)
    } else {
        let strain = compute_strain(f, g, &scenario.boundary())?;
        let flags = classify_yield(&strain, fluid, r);
        (
            Some(plug_half_width(&flags, g.nx, g.ny, g.dy)),
            Some(channel_plug_half_width(force_gx, h, fluid, r)),
        )
    };
    let jc = g.ny / 2;
    let centerline = if g.ny % 2 == 0 {
        0.5 * (f.center_velocity(g.nx / 2, jc - 1).0 + f.center_velocity(g.nx / 2, jc).0)
    } else {
        f.center_velocity(g.nx / 2, jc).0
    };
    Ok(ProfileComparison {
        rel_l2_error: if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        },
        max_abs_error: max_err,
        centerline_velocity: centerline,
        oracle_centerline_velocity: channel_oracle(0.0, force_gx, h, fluid, r)?,
        plug_half_width: plug,
        oracle_plug_half_width: oracle_plug,
        cell_height: g.dy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(mu: f64, tau_y: f64) -> FluidParams {
        FluidParams::new(mu, tau_y).unwrap()
    }

    fn r(m: f64) -> RegIndex {
        RegIndex::new(m).unwrap()
    }

    #[test]
    fn newtonian_is_parabolic() {
        let fl = p(0.7, 0.0);
        for k in 0..=20 {
            let y = -1.3 + k as f64 * 0.13;
            let u = channel_oracle(y, 2.0, 1.3, &fl, r(9.0)).unwrap();
            let expect = 2.0 / (2.0 * 0.7) * (1.3 * 1.3 - y * y);
            assert!((u - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn wall_value_is_zero() {
        let fl = p(1.0, 0.5);
        for m in [2.0, 8.0, 64.0] {
            assert_eq!(channel_oracle(1.0, 1.0, 1.0, &fl, r(m)).unwrap(), 0.0);
            assert_eq!(channel_oracle(-1.0, 1.0, 1.0, &fl, r(m)).unwrap(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let fl = p(1.0, 0.5);
        assert!(channel_oracle(1.5, 1.0, 1.0, &fl, r(4.0)).is_err());
        assert!(channel_oracle(0.0, 0.0, 1.0, &fl, r(4.0)).is_err());
        assert!(channel_oracle(0.0, 1.0, -1.0, &fl, r(4.0)).is_err());
    }

    #[test]
    fn profile_is_continuous_at_branch_switch() {
        let fl = p(1.0, 0.5);
        let m = r(64.0);
        let yc = channel_plug_half_width(1.0, 1.0, &fl, m);
        let a = channel_oracle(yc * (1.0 - 1e-12), 1.0, 1.0, &fl, m).unwrap();
        let b = channel_oracle(yc * (1.0 + 1e-12), 1.0, 1.0, &fl, m).unwrap();
        assert!((a - b).abs() < 1e-11);
        assert!((yc - 64.0 / 63.0 * 0.5 / SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn fully_newtonian_when_switch_beyond_wall() {
        // m/(m−1)·τ_y/(√2 G) ≥ H: the whole gap is on the mμ branch
        let fl = p(1.0, 3.0);
        let m = r(2.0);
        let u0 = channel_oracle(0.0, 1.0, 1.0, &fl, m).unwrap();
        assert!((u0 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn scenario_wiring() {
        let g = Grid::new(8, 16, 0.5, 2.0).unwrap();
        let ch = Scenario::channel(g, 1.0).unwrap();
        assert!(ch.boundary().periodic_x);
        assert_eq!(ch.half_width(), 1.0);
        assert!(!ch.forcing().is_zero());
        let cav = Scenario::cavity(g, 2.0).unwrap();
        assert!(cav.boundary().has_moving_wall());
        let dec = Scenario::decay(g, 3, 1.0);
        assert!(dec.forcing().is_zero());
        assert!(dec.initial_field().u.iter().any(|&u| u != 0.0));
        assert!(Scenario::channel(g, 0.0).is_err());
    }

    #[test]
    fn exact_profile_compares_cleanly() {
        let g = Grid::new(4, 16, 1.0, 2.0).unwrap();
        let sc = Scenario::channel(g, 1.0).unwrap();
        let fl = p(1.0, 0.0);
        let m = r(4.0);
        let f = StaggeredField::from_fn(
            &g,
            |_, y| channel_oracle(y - 1.0, 1.0, 1.0, &fl, m).unwrap(),
            |_, _| 0.0,
        );
        let cmp = compare_channel_profile(&f, &sc, &fl, m).unwrap();
        assert!(cmp.rel_l2_error < 1e-15);
        assert!(cmp.plug_half_width.is_none());
        let cav = Scenario::cavity(g, 1.0).unwrap();
        assert!(compare_channel_profile(&f, &cav, &fl, m).is_err());
    }
}
