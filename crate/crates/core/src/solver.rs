//! Time integration of the incompressible bi-viscosity flow on the MAC grid.
//!
//! One step is `advect → force → diffuse (implicit, Picard) → project`:
//!
//! * advection is explicit and written in flux form with centered face values,
//!   which makes `⟨C(u)u, u⟩ = 0` whenever `u` is discretely solenoidal;
//! * the viscous term `∇·(2η D u)` is implicit, with `η` at cell centers for
//!   normal stresses and the harmonic mean of the adjacent cell values at
//!   corners for shear stresses, frozen between Picard sweeps;
//! * incompressibility is restored by an incremental pressure projection.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constitutive::{effective_viscosity_unchecked, FluidParams, RegIndex};
use crate::diagnostics::{Recorder, RunReport};
use crate::error::{Error, Result};
use crate::grid::{
    compute_divergence, compute_strain, inner_h, max_abs, norm_h, pressure_gradient, BoundarySpec,
    Grid, StaggeredField, TensorField,
};
use crate::linalg::{pcg, Anderson, CgOptions, CgOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeStep {
    Fixed(f64),
    /// Target Courant number; `dt` is recomputed every step.
    Cfl(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub time_step: TimeStep,
    pub t_end: f64,
    pub m: RegIndex,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub poisson_tol: f64,
    pub steady_tol: f64,
    /// Steps per energy-ledger interval in run reports.
    pub report_every: usize,
}

impl SolveConfig {
    pub fn new(time_step: TimeStep, t_end: f64, m: RegIndex) -> Self {
        Self {
            time_step,
            t_end,
            m,
            picard_tol: 1e-6,
            picard_max: 100,
            poisson_tol: 1e-9,
            steady_tol: 1e-6,
            report_every: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be > 0, got {v}")))
            }
        };
        match self.time_step {
            TimeStep::Fixed(dt) => positive("dt", dt)?,
            TimeStep::Cfl(c) => {
                positive("cfl", c)?;
                if c > 1.0 {
                    return Err(Error::invalid("cfl", format!("must be <= 1, got {c}")));
                }
            }
        }
        positive("t_end", self.t_end)?;
        positive("picard_tol", self.picard_tol)?;
        positive("poisson_tol", self.poisson_tol)?;
        positive("steady_tol", self.steady_tol)?;
        if self.picard_max == 0 {
            return Err(Error::invalid("picard_max", "must be >= 1"));
        }
        if self.report_every == 0 {
            return Err(Error::invalid("report_every", "must be >= 1"));
        }
        Ok(())
    }

    /// Step size for the given state, clipped so the run lands on `t_end`.
    pub fn dt_for(&self, f: &StaggeredField, g: &Grid, t: f64) -> f64 {
        let dt = match self.time_step {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Cfl(c) => {
                let (um, vm) = f.max_abs_velocity();
                let rate = (um / g.dx).max(vm / g.dy);
                if rate > 0.0 {
                    c / rate
                } else {
                    c * g.dx.min(g.dy)
                }
            }
        };
        let left = self.t_end - t;
        if left > 0.0 && left < dt * (1.0 + 1e-9) {
            left
        } else {
            dt
        }
    }
}

type ForceFn = dyn Fn(f64, f64, f64) -> (f64, f64) + Send + Sync;

/// Body force per unit mass, `f(x, y, t)`.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    Constant { gx: f64, gy: f64 },
    Field(Arc<ForceFn>),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Constant { gx, gy } => write!(f, "Constant({gx}, {gy})"),
            Forcing::Field(_) => write!(f, "Field(..)"),
        }
    }
}

impl Forcing {
    pub fn field(func: impl Fn(f64, f64, f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Forcing::Field(Arc::new(func))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Zero => true,
            Forcing::Constant { gx, gy } => *gx == 0.0 && *gy == 0.0,
            Forcing::Field(_) => false,
        }
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        match self {
            Forcing::Zero => (0.0, 0.0),
            Forcing::Constant { gx, gy } => (*gx, *gy),
            Forcing::Field(func) => func(x, y, t),
        }
    }

    /// Force components sampled on the interior faces (walls stay zero).
    pub fn on_faces(&self, g: &Grid, bc: &BoundarySpec, t: f64) -> StaggeredField {
        let mut out = StaggeredField::zeros(g);
        if matches!(self, Forcing::Zero) {
            return out;
        }
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let (x, y) = g.u_face(i, j);
                out.set_u(i, j, self.eval(x, y, t).0);
            }
        }
        for j in 0..=g.ny {
            for i in 0..g.nx {
                let (x, y) = g.v_face(i, j);
                out.set_v(i, j, self.eval(x, y, t).1);
            }
        }
        out.apply_bcs(bc);
        out
    }
}

/// Everything that defines the flow problem apart from the numerics.
#[derive(Debug, Clone)]
pub struct Flow {
    pub grid: Grid,
    pub bc: BoundarySpec,
    pub fluid: FluidParams,
    pub forcing: Forcing,
}

impl Flow {
    pub fn new(grid: Grid, bc: BoundarySpec, fluid: FluidParams, forcing: Forcing) -> Result<Self> {
        bc.validate()?;
        Ok(Self {
            grid,
            bc,
            fluid,
            forcing,
        })
    }
}

/// Frozen viscosity: cell values for normal stresses, corner values for shear.
#[derive(Debug, Clone, PartialEq)]
pub struct Viscosity {
    pub cell: Vec<f64>,
    pub corner: Vec<f64>,
}

impl Viscosity {
    pub fn uniform(g: &Grid, eta: f64) -> Self {
        Self {
            cell: vec![eta; g.cell_count()],
            corner: vec![eta; (g.nx + 1) * (g.ny + 1)],
        }
    }

    /// Corner values from the cell values by harmonic averaging over the
    /// adjacent cells (four inside, two on a wall, one in a box corner).
    pub fn from_cells(g: &Grid, bc: &BoundarySpec, cell: Vec<f64>) -> Self {
        let mut corner = vec![0.0; (g.nx + 1) * (g.ny + 1)];
        let nx = g.nx as isize;
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let mut inv = 0.0;
                let mut n = 0usize;
                for dj in [-1isize, 0] {
                    let cj = j as isize + dj;
                    if cj < 0 || cj >= g.ny as isize {
                        continue;
                    }
                    for di in [-1isize, 0] {
                        let mut ci = i as isize + di;
                        if bc.periodic_x {
                            ci = ci.rem_euclid(nx);
                        } else if ci < 0 || ci >= nx {
                            continue;
                        }
                        inv += 1.0 / cell[g.cell(ci as usize, cj as usize)];
                        n += 1;
                    }
                }
                corner[g.corner(i, j)] = n as f64 / inv;
            }
        }
        Self { cell, corner }
    }
}

/// `η(|D|)` from the bi-viscosity law at cells and at corners. Corners use the
/// corner shear with normal strains averaged from the adjacent cells; on walls
/// the normal strains vanish. With `τ_y = 0` the law is Newtonian and `η ≡ μ`
/// independently of `m`.
pub fn viscosity_field(
    f: &StaggeredField,
    strain: &TensorField,
    g: &Grid,
    bc: &BoundarySpec,
    fluid: &FluidParams,
    m: RegIndex,
) -> Viscosity {
    if fluid.is_newtonian() {
        return Viscosity::uniform(g, fluid.mu());
    }
    let eta = |n: f64| effective_viscosity_unchecked(n, fluid, m);
    let cell = strain.data.iter().map(|d| eta(d.norm())).collect();
    let (nx, ny) = (g.nx, g.ny);
    let mut corner = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            let half_shear = 0.5 * crate::grid::corner_shear(f, g, bc, i, j);
            let side_wall = !bc.periodic_x && (i == 0 || i == nx);
            let (mut xx, mut yy) = (0.0, 0.0);
            if j > 0 && j < ny && !side_wall {
                let (il, ir) = if i == 0 || i == nx {
                    (nx - 1, 0)
                } else {
                    (i - 1, i)
                };
                for (ci, cj) in [(il, j - 1), (ir, j - 1), (il, j), (ir, j)] {
                    let d = strain.at(ci, cj);
                    xx += 0.25 * d.xx;
                    yy += 0.25 * d.yy;
                }
            }
            let n = (xx * xx + yy * yy + 2.0 * half_shear * half_shear).sqrt();
            corner[g.corner(i, j)] = eta(n);
        }
    }
    Viscosity { cell, corner }
}

/// `∇·(2η D w)` on the interior faces; wall faces are left at zero.
pub fn viscous_divergence(
    w: &StaggeredField,
    g: &Grid,
    bc: &BoundarySpec,
    eta: &Viscosity,
) -> StaggeredField {
    let (nx, ny) = (g.nx, g.ny);
    let mut txx = vec![0.0; nx * ny];
    let mut tyy = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = g.cell(i, j);
            txx[c] = 2.0 * eta.cell[c] * (w.u(i + 1, j) - w.u(i, j)) / g.dx;
            tyy[c] = 2.0 * eta.cell[c] * (w.v(i, j + 1) - w.v(i, j)) / g.dy;
        }
    }
    let mut txy = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            let k = g.corner(i, j);
            txy[k] = eta.corner[k] * crate::grid::corner_shear(w, g, bc, i, j);
        }
    }
    let mut out = StaggeredField::zeros(g);
    let (i_lo, i_hi) = u_dof_range(g, bc);
    for j in 0..ny {
        for i in i_lo..i_hi {
            let left = if i == 0 { nx - 1 } else { i - 1 };
            let right = if i == nx { 0 } else { i };
            let val = (txx[g.cell(right, j)] - txx[g.cell(left, j)]) / g.dx
                + (txy[g.corner(i, j + 1)] - txy[g.corner(i, j)]) / g.dy;
            out.set_u(i, j, val);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let val = (txy[g.corner(i + 1, j)] - txy[g.corner(i, j)]) / g.dx
                + (tyy[g.cell(i, j)] - tyy[g.cell(i, j - 1)]) / g.dy;
            out.set_v(i, j, val);
        }
    }
    out.apply_bcs(bc);
    out
}

/// Discrete dissipation `∫ τ:Du` in the quadrature that matches
/// [`viscous_divergence`]: `−⟨∇·(2ηDu), u⟩ = dissipation` when all walls are at rest.
pub fn dissipation(f: &StaggeredField, g: &Grid, bc: &BoundarySpec, eta: &Viscosity) -> f64 {
    let vol = g.cell_volume();
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let xx = (f.u(i + 1, j) - f.u(i, j)) / g.dx;
            let yy = (f.v(i, j + 1) - f.v(i, j)) / g.dy;
            s += 2.0 * eta.cell[g.cell(i, j)] * (xx * xx + yy * yy) * vol;
        }
    }
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let sh = crate::grid::corner_shear(f, g, bc, i, j);
            s += eta.corner[g.corner(i, j)] * sh * sh * g.corner_weight(i, j);
        }
    }
    s
}

/// `∫|Du|²` in the same quadrature as [`dissipation`].
pub fn strain_energy(f: &StaggeredField, g: &Grid, bc: &BoundarySpec) -> f64 {
    0.5 * dissipation(f, g, bc, &Viscosity::uniform(g, 1.0))
}

fn u_dof_range(g: &Grid, bc: &BoundarySpec) -> (usize, usize) {
    if bc.periodic_x {
        (0, g.nx)
    } else {
        (1, g.nx)
    }
}

/// Unknown velocity faces, packed as a flat vector.
struct Dofs {
    u: Vec<usize>,
    v: Vec<usize>,
}

impl Dofs {
    fn new(g: &Grid, bc: &BoundarySpec) -> Self {
        let (lo, hi) = u_dof_range(g, bc);
        let mut u = Vec::new();
        for j in 0..g.ny {
            for i in lo..hi {
                u.push(j * (g.nx + 1) + i);
            }
        }
        let mut v = Vec::new();
        for j in 1..g.ny {
            for i in 0..g.nx {
                v.push(j * g.nx + i);
            }
        }
        Self { u, v }
    }

    fn len(&self) -> usize {
        self.u.len() + self.v.len()
    }

    fn pack(&self, f: &StaggeredField, out: &mut [f64]) {
        let n = self.u.len();
        for (k, &idx) in self.u.iter().enumerate() {
            out[k] = f.u[idx];
        }
        for (k, &idx) in self.v.iter().enumerate() {
            out[n + k] = f.v[idx];
        }
    }

    fn unpack(&self, x: &[f64], f: &mut StaggeredField) {
        let n = self.u.len();
        for (k, &idx) in self.u.iter().enumerate() {
            f.u[idx] = x[k];
        }
        for (k, &idx) in self.v.iter().enumerate() {
            f.v[idx] = x[n + k];
        }
    }
}

/// Sparse map from packed dofs to the strain samples of the dissipation
/// quadrature (homogeneous walls): rows are `D_xx` per cell, `D_yy` per cell,
/// then `2D_xy` per corner. The viscous operator on dofs is `−Bᵀ C B / (dx·dy)`.
struct StrainMap {
    start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl StrainMap {
    fn new(g: &Grid, bc: &BoundarySpec) -> Self {
        let (nx, ny) = (g.nx, g.ny);
        let periodic = bc.periodic_x;
        let n_u = if periodic { nx * ny } else { (nx - 1) * ny };
        // ghost rows reflect through the wall, so a sign flip, not a new dof
        let u_dof = |i: isize, j: isize| -> Option<(usize, f64)> {
            let (j, sign) = if j < 0 {
                (0, -1.0)
            } else if j as usize >= ny {
                (ny - 1, -1.0)
            } else {
                (j as usize, 1.0)
            };
            if periodic {
                let i = i.rem_euclid(nx as isize) as usize;
                Some((j * nx + i, sign))
            } else if i <= 0 || i as usize >= nx {
                None
            } else {
                Some((j * (nx - 1) + i as usize - 1, sign))
            }
        };
        let v_dof = |i: isize, j: usize| -> Option<(usize, f64)> {
            if j == 0 || j >= ny {
                return None;
            }
            let (i, sign) = if periodic {
                (i.rem_euclid(nx as isize) as usize, 1.0)
            } else if i < 0 {
                (0, -1.0)
            } else if i as usize >= nx {
                (nx - 1, -1.0)
            } else {
                (i as usize, 1.0)
            };
            Some((n_u + (j - 1) * nx + i, sign))
        };
        let mut map = Self {
            start: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        };
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
        let push_row = |map: &mut Self, row: &mut Vec<(usize, f64)>| {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let (c, mut v) = row[k];
                k += 1;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    map.cols.push(c);
                    map.vals.push(v);
                }
            }
            map.start.push(map.cols.len());
            row.clear();
        };
        for j in 0..ny {
            for i in 0..nx {
                let (ii, jj) = (i as isize, j as isize);
                row.extend(u_dof(ii + 1, jj).map(|(c, s)| (c, s / g.dx)));
                row.extend(u_dof(ii, jj).map(|(c, s)| (c, -s / g.dx)));
                push_row(&mut map, &mut row);
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                row.extend(v_dof(i as isize, j + 1).map(|(c, s)| (c, s / g.dy)));
                row.extend(v_dof(i as isize, j).map(|(c, s)| (c, -s / g.dy)));
                push_row(&mut map, &mut row);
            }
        }
        for j in 0..=ny {
            for i in 0..=nx {
                let (ii, jj) = (i as isize, j as isize);
                row.extend(u_dof(ii, jj).map(|(c, s)| (c, s / g.dy)));
                row.extend(u_dof(ii, jj - 1).map(|(c, s)| (c, -s / g.dy)));
                row.extend(v_dof(ii, j).map(|(c, s)| (c, s / g.dx)));
                row.extend(v_dof(ii - 1, j).map(|(c, s)| (c, -s / g.dx)));
                push_row(&mut map, &mut row);
            }
        }
        map
    }

    /// Quadrature weight times viscosity for every row.
    fn row_weights(&self, g: &Grid, eta: &Viscosity) -> Vec<f64> {
        let vol = g.cell_volume();
        let mut c = Vec::with_capacity(self.start.len() - 1);
        c.extend(eta.cell.iter().map(|e| 2.0 * e * vol));
        c.extend(eta.cell.iter().map(|e| 2.0 * e * vol));
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                c.push(eta.corner[g.corner(i, j)] * g.corner_weight(i, j));
            }
        }
        c
    }

    /// `out = x + scale·Bᵀ diag(c) B x`.
    fn apply(&self, c: &[f64], scale: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        for (r, &cr) in c.iter().enumerate() {
            let (a, b) = (self.start[r], self.start[r + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.vals[k] * x[self.cols[k]];
            }
            s *= cr * scale;
            for k in a..b {
                out[self.cols[k]] += self.vals[k] * s;
            }
        }
    }

    fn diagonal(&self, c: &[f64], scale: f64, n: usize) -> Vec<f64> {
        let mut d = vec![1.0; n];
        for (r, &cr) in c.iter().enumerate() {
            for k in self.start[r]..self.start[r + 1] {
                d[self.cols[k]] += scale * cr * self.vals[k] * self.vals[k];
            }
        }
        d
    }
}

/// Solves `(I − dt·∇·(2η D ·)) u = rhs` for a frozen viscosity, starting from `guess`.
/// Wall values of the result come from `bc`; the pressure of `rhs` is carried over.
pub fn solve_viscous_system(
    rhs: &StaggeredField,
    guess: &StaggeredField,
    g: &Grid,
    bc: &BoundarySpec,
    eta: &Viscosity,
    dt: f64,
    rel_tol: f64,
) -> Result<(StaggeredField, CgOutcome)> {
    rhs.check(g)?;
    guess.check(g)?;
    let dofs = Dofs::new(g, bc);
    let n = dofs.len();

    let mut x0 = guess.clone();
    x0.p.clone_from(&rhs.p);
    x0.apply_bcs(bc);

    // residual of the affine problem at the guess
    let lx0 = viscous_divergence(&x0, g, bc, eta);
    let mut r_field = rhs.clone();
    for k in 0..r_field.u.len() {
        r_field.u[k] -= x0.u[k] - dt * lx0.u[k];
    }
    for k in 0..r_field.v.len() {
        r_field.v[k] -= x0.v[k] - dt * lx0.v[k];
    }
    let mut b = vec![0.0; n];
    dofs.pack(&r_field, &mut b);

    let map = StrainMap::new(g, bc);
    let weights = map.row_weights(g, eta);
    let scale = dt / g.cell_volume();
    let diag = map.diagonal(&weights, scale, n);
    let apply = |x: &[f64], out: &mut [f64]| map.apply(&weights, scale, x, out);
    let mut delta = vec![0.0; n];
    let outcome = pcg(
        apply,
        &b,
        &mut delta,
        &diag,
        CgOptions {
            rel_tol,
            abs_tol_inf: None,
            max_iter: 20 * n.max(50),
            zero_mean: false,
        },
    );
    if !outcome.converged {
        return Err(Error::LinearSolver {
            context: "implicit viscous step",
            iterations: outcome.iterations,
            residual: outcome.rel_residual,
        });
    }
    let mut base = vec![0.0; n];
    dofs.pack(&x0, &mut base);
    for (a, d) in base.iter_mut().zip(&delta) {
        *a += d;
    }
    dofs.unpack(&base, &mut x0);
    x0.apply_bcs(bc);
    Ok((x0, outcome))
}

/// Implicit variable-viscosity diffusion by Picard iteration on `η(|Du|)`.
/// Returns the new field and the number of linear solves.
///
/// Near the yield surface the plain Picard map contracts only by about
/// `(m−1)/m`, so iterates are combined by Anderson mixing.
pub fn diffuse_implicit(
    f: &StaggeredField,
    flow: &Flow,
    dt: f64,
    cfg: &SolveConfig,
) -> Result<(StaggeredField, usize)> {
    let (g, bc) = (&flow.grid, &flow.bc);
    f.check(g)?;
    // each solve is a correction whose right-hand side shrinks with the Picard
    // update, so a fixed relative tolerance suffices once the law is nonlinear
    let lin_tol = if flow.fluid.is_newtonian() {
        (cfg.picard_tol * 1e-3).clamp(1e-14, 1e-6)
    } else {
        PICARD_LINEAR_TOL
    };
    let mut current = f.clone();
    current.apply_bcs(bc);
    let mut mixer = Anderson::new(ANDERSON_DEPTH);
    let mut update = f64::INFINITY;
    let mut best = f64::INFINITY;
    for it in 1..=cfg.picard_max {
        let strain = compute_strain(&current, g, bc)?;
        let eta = viscosity_field(&current, &strain, g, bc, &flow.fluid, cfg.m);
        let (next, _) = solve_viscous_system(f, &current, g, bc, &eta, dt, lin_tol)?;
        if flow.fluid.is_newtonian() {
            return Ok((next, 1));
        }
        let diff = max_abs_diff(&next, &current);
        let scale = next.max_abs_velocity();
        let scale = scale.0.max(scale.1);
        update = if scale > 0.0 { diff / scale } else { diff };
        if update < cfg.picard_tol {
            return Ok((next, it));
        }
        // restart the mixing history when it stops helping
        if update > 10.0 * best {
            mixer.reset();
        }
        best = best.min(update);
        let x: Vec<f64> = current.u.iter().chain(&current.v).copied().collect();
        let gx: Vec<f64> = next.u.iter().chain(&next.v).copied().collect();
        let mixed = mixer.next(&x, &gx);
        let nu = current.u.len();
        current = next;
        current.u.copy_from_slice(&mixed[..nu]);
        current.v.copy_from_slice(&mixed[nu..]);
        current.apply_bcs(bc);
    }
    Err(Error::PicardNotConverged {
        iterations: cfg.picard_max,
        update,
    })
}

const ANDERSON_DEPTH: usize = 5;
const PICARD_LINEAR_TOL: f64 = 1e-4;

fn max_abs_diff(a: &StaggeredField, b: &StaggeredField) -> f64 {
    let du =
        a.u.iter()
            .zip(&b.u)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let dv =
        a.v.iter()
            .zip(&b.v)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    du.max(dv)
}

/// Convective term `(u·∇)u` on the interior faces in conservative flux form.
pub fn advection_term(f: &StaggeredField, g: &Grid, bc: &BoundarySpec) -> StaggeredField {
    let (nx, ny) = (g.nx, g.ny);
    let (dx, dy) = (g.dx, g.dy);
    let inv_vol = 1.0 / g.cell_volume();
    let mut out = StaggeredField::zeros(g);
    let (i_lo, i_hi) = u_dof_range(g, bc);
    let wrap = |i: isize| -> usize { i.rem_euclid(nx as isize) as usize };
    for j in 0..ny {
        for i in i_lo..i_hi {
            let ii = i as isize;
            let uc = f.u(i, j);
            let ue = f.u_ext(bc, ii + 1, j as isize);
            let uw = f.u_ext(bc, ii - 1, j as isize);
            let (fe, fw) = (0.5 * (uc + ue) * dy, 0.5 * (uw + uc) * dy);
            let il = if bc.periodic_x { wrap(ii - 1) } else { i - 1 };
            let fnorth = 0.5 * (f.v(il, j + 1) + f.v(i % nx, j + 1)) * dx;
            let fsouth = 0.5 * (f.v(il, j) + f.v(i % nx, j)) * dx;
            let un = 0.5 * (uc + f.u_ext(bc, ii, j as isize + 1));
            let us = 0.5 * (uc + f.u_ext(bc, ii, j as isize - 1));
            let val = fe * 0.5 * (uc + ue) - fw * 0.5 * (uw + uc) + fnorth * un - fsouth * us;
            out.set_u(i, j, val * inv_vol);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let ii = i as isize;
            let vc = f.v(i, j);
            let (vn, vs) = (f.v(i, j + 1), f.v(i, j - 1));
            let (fnorth, fsouth) = (0.5 * (vc + vn) * dx, 0.5 * (vs + vc) * dx);
            let feast = 0.5 * (f.u(i + 1, j - 1) + f.u(i + 1, j)) * dy;
            let fwest = 0.5 * (f.u(i, j - 1) + f.u(i, j)) * dy;
            let ve = 0.5 * (vc + f.v_ext(bc, ii + 1, j));
            let vw = 0.5 * (vc + f.v_ext(bc, ii - 1, j));
            let val = fnorth * 0.5 * (vc + vn) - fsouth * 0.5 * (vs + vc) + feast * ve - fwest * vw;
            out.set_v(i, j, val * inv_vol);
        }
    }
    out.apply_bcs(bc);
    out
}

pub fn courant_number(f: &StaggeredField, g: &Grid, dt: f64) -> f64 {
    let (um, vm) = f.max_abs_velocity();
    (um * dt / g.dx).max(vm * dt / g.dy)
}

/// Explicit advection update `u − dt·(u·∇)u`; wall values are unchanged.
pub fn advect(f: &StaggeredField, g: &Grid, bc: &BoundarySpec, dt: f64) -> Result<StaggeredField> {
    f.check(g)?;
    let cfl = courant_number(f, g, dt);
    if cfl > 1.0 {
        return Err(Error::CflViolation { cfl });
    }
    Ok(f.axpy(-dt, &advection_term(f, g, bc)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionStats {
    pub iterations: usize,
    pub max_divergence: f64,
}

/// Poisson operator `−∇²` on cell centers with homogeneous Neumann walls.
fn neg_laplacian(g: &Grid, bc: &BoundarySpec, x: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let (ax, ay) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    for j in 0..ny {
        for i in 0..nx {
            let c = g.cell(i, j);
            let xc = x[c];
            let mut s = 0.0;
            if i > 0 {
                s += ax * (xc - x[c - 1]);
            } else if bc.periodic_x {
                s += ax * (xc - x[g.cell(nx - 1, j)]);
            }
            if i + 1 < nx {
                s += ax * (xc - x[c + 1]);
            } else if bc.periodic_x {
                s += ax * (xc - x[g.cell(0, j)]);
            }
            if j > 0 {
                s += ay * (xc - x[c - nx]);
            }
            if j + 1 < ny {
                s += ay * (xc - x[c + nx]);
            }
            out[c] = s;
        }
    }
}

/// Solves `∇²φ = div(u*)/dt` and sets `u = u* − dt∇φ`, `p ← p + φ` (zero mean).
///
/// The solve stops once the relative residual is below `poisson_tol` and
/// `dt·‖r‖_∞ ≤ poisson_tol`; since the post-projection divergence equals
/// `dt·r`, the cellwise divergence is bounded by `poisson_tol` up to rounding.
pub fn pressure_project(
    f: &StaggeredField,
    g: &Grid,
    bc: &BoundarySpec,
    dt: f64,
    cfg: &SolveConfig,
) -> Result<(StaggeredField, ProjectionStats)> {
    f.check(g)?;
    let div = compute_divergence(f, g)?;
    let b: Vec<f64> = div.iter().map(|d| -d / dt).collect();
    let (ax, ay) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let diag: Vec<f64> = (0..g.cell_count())
        .map(|c| {
            let (i, j) = (c % g.nx, c / g.nx);
            let mut d = 0.0;
            if bc.periodic_x {
                d += 2.0 * ax;
            } else {
                d += ax * ((i > 0) as u8 + (i + 1 < g.nx) as u8) as f64;
            }
            d += ay * ((j > 0) as u8 + (j + 1 < g.ny) as u8) as f64;
            d
        })
        .collect();
    let mut phi = vec![0.0; g.cell_count()];
    let outcome = pcg(
        |x, out| neg_laplacian(g, bc, x, out),
        &b,
        &mut phi,
        &diag,
        CgOptions {
            rel_tol: cfg.poisson_tol,
            abs_tol_inf: Some(cfg.poisson_tol / dt),
            max_iter: 20 * g.cell_count().max(100),
            zero_mean: true,
        },
    );
    if !outcome.converged {
        return Err(Error::LinearSolver {
            context: "pressure Poisson",
            iterations: outcome.iterations,
            residual: outcome.rel_residual,
        });
    }
    let (gx, gy) = pressure_gradient(&phi, g, bc);
    let mut out = f.clone();
    for (u, gr) in out.u.iter_mut().zip(&gx) {
        *u -= dt * gr;
    }
    for (v, gr) in out.v.iter_mut().zip(&gy) {
        *v -= dt * gr;
    }
    out.apply_bcs(bc);
    for (p, ph) in out.p.iter_mut().zip(&phi) {
        *p += ph;
    }
    let mean = out.p.iter().sum::<f64>() / out.p.len() as f64;
    out.p.iter_mut().for_each(|p| *p -= mean);
    let max_divergence = max_abs(&compute_divergence(&out, g)?);
    Ok((
        out,
        ProjectionStats {
            iterations: outcome.iterations,
            max_divergence,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub field: StaggeredField,
    pub dt: f64,
    pub picard_iterations: usize,
    pub poisson_iterations: usize,
    pub max_divergence: f64,
    /// `⟨(u·∇)u, u⟩_H` at the start of the step; zero for the exact trilinear form.
    pub advection_orthogonality: f64,
    /// Largest kinetic-energy gain explicit advection can cause in this step,
    /// `½dt²‖(u·∇)u‖² + dt·|⟨(u·∇)u, u⟩|`.
    pub advection_energy_allowance: f64,
}

/// One step from time `t`.
pub fn step(f: &StaggeredField, flow: &Flow, t: f64, cfg: &SolveConfig) -> Result<StepOutcome> {
    let (g, bc) = (&flow.grid, &flow.bc);
    f.check(g)?;
    let dt = cfg.dt_for(f, g, t);
    let cfl = courant_number(f, g, dt);
    if cfl > 1.0 {
        return Err(Error::CflViolation { cfl });
    }
    let conv = advection_term(f, g, bc);
    let advection_orthogonality = inner_h(&conv, f, g);
    let advection_energy_allowance =
        0.5 * dt * dt * inner_h(&conv, &conv, g) + dt * advection_orthogonality.abs();
    let mut tentative = f.axpy(-dt, &conv);
    if !flow.forcing.is_zero() {
        tentative = tentative.axpy(dt, &flow.forcing.on_faces(g, bc, t));
    }
    let (gpx, gpy) = pressure_gradient(&f.p, g, bc);
    for (u, gp) in tentative.u.iter_mut().zip(&gpx) {
        *u -= dt * gp;
    }
    for (v, gp) in tentative.v.iter_mut().zip(&gpy) {
        *v -= dt * gp;
    }
    tentative.apply_bcs(bc);
    let (diffused, picard_iterations) = diffuse_implicit(&tentative, flow, dt, cfg)?;
    let (field, proj) = pressure_project(&diffused, g, bc, dt, cfg)?;
    Ok(StepOutcome {
        field,
        dt,
        picard_iterations,
        poisson_iterations: proj.iterations,
        max_divergence: proj.max_divergence,
        advection_orthogonality,
        advection_energy_allowance,
    })
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: StaggeredField,
}

/// Recorded trajectory, ordered in time.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub snapshots: Vec<Snapshot>,
}

impl History {
    pub fn push(&mut self, t: f64, field: StaggeredField) {
        self.snapshots.push(Snapshot { t, field });
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub stop_at_steady: bool,
    pub keep_history: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stop_at_steady: true,
            keep_history: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: StaggeredField,
    pub t: f64,
    pub steps: usize,
    pub steady: bool,
    pub history: History,
    pub report: RunReport,
}

/// Makes an initial datum admissible: wall values enforced, one projection,
/// pressure reset to zero.
pub fn prepare_initial(
    init: &StaggeredField,
    flow: &Flow,
    cfg: &SolveConfig,
) -> Result<StaggeredField> {
    let mut f = init.clone();
    f.check(&flow.grid)?;
    f.apply_bcs(&flow.bc);
    let (mut f, _) = pressure_project(&f, &flow.grid, &flow.bc, 1.0, cfg)?;
    f.p.iter_mut().for_each(|p| *p = 0.0);
    Ok(f)
}

/// Steps from `init` until steady (when requested) or `t_end`.
pub fn simulate(
    init: &StaggeredField,
    flow: &Flow,
    cfg: &SolveConfig,
    opts: RunOptions,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let g = &flow.grid;
    let mut state = prepare_initial(init, flow, cfg)?;
    let mut t = 0.0;
    let mut history = History::default();
    if opts.keep_history {
        history.push(t, state.clone());
    }
    let mut recorder = Recorder::new(flow, cfg);
    recorder.observe(t, &state, None);
    let mut steps = 0usize;
    let mut steady = false;
    while t < cfg.t_end * (1.0 - 1e-12) {
        let out = step(&state, flow, t, cfg)?;
        t += out.dt;
        steps += 1;
        let change = norm_h(&out.field.axpy(-1.0, &state), g) / out.dt;
        recorder.observe(t, &out.field, Some((&out, change)));
        state = out.field;
        if opts.keep_history {
            history.push(t, state.clone());
        }
        if opts.stop_at_steady && change < cfg.steady_tol {
            steady = true;
            break;
        }
    }
    let report = recorder.finish(steady, steps, t);
    Ok(RunOutcome {
        state,
        t,
        steps,
        steady,
        history,
        report,
    })
}

/// Steps until `‖u^{n+1} − u^n‖_H / dt < steady_tol` or `t_end`; the report says which.
pub fn run_to_steady(
    init: &StaggeredField,
    flow: &Flow,
    cfg: &SolveConfig,
) -> Result<(StaggeredField, RunReport)> {
    let out = simulate(init, flow, cfg, RunOptions::default())?;
    Ok((out.state, out.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{compute_divergence, norm_h};

    fn cfg(dt: f64) -> SolveConfig {
        SolveConfig::new(TimeStep::Fixed(dt), 1.0, RegIndex::new(8.0).unwrap())
    }

    fn flow(bc: BoundarySpec, tau_y: f64) -> Flow {
        Flow::new(
            Grid::new(12, 12, 1.0, 1.0).unwrap(),
            bc,
            FluidParams::new(0.1, tau_y).unwrap(),
            Forcing::Zero,
        )
        .unwrap()
    }

    fn swirl(g: &Grid) -> StaggeredField {
        // discrete curl of ψ = sin²(πx) sin²(πy): solenoidal and zero on walls
        let psi = |x: f64, y: f64| {
            let (a, b) = (
                (std::f64::consts::PI * x).sin(),
                (std::f64::consts::PI * y).sin(),
            );
            a * a * b * b
        };
        let mut f = StaggeredField::zeros(g);
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let x = i as f64 * g.dx;
                let val = (psi(x, (j + 1) as f64 * g.dy) - psi(x, j as f64 * g.dy)) / g.dy;
                f.set_u(i, j, val);
            }
        }
        for j in 0..=g.ny {
            for i in 0..g.nx {
                let y = j as f64 * g.dy;
                let val = -(psi((i + 1) as f64 * g.dx, y) - psi(i as f64 * g.dx, y)) / g.dx;
                f.set_v(i, j, val);
            }
        }
        f
    }

    #[test]
    fn assembled_operator_matches_stencil() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for bc in [BoundarySpec::no_slip(), BoundarySpec::channel()] {
            let g = Grid::new(7, 6, 1.3, 0.9).unwrap();
            let cells: Vec<f64> = (0..g.cell_count())
                .map(|_| rng.gen_range(0.1..5.0))
                .collect();
            let eta = Viscosity::from_cells(&g, &bc, cells);
            let mut w = StaggeredField::zeros(&g);
            w.u.iter_mut()
                .chain(w.v.iter_mut())
                .for_each(|a| *a = rng.gen_range(-1.0..1.0));
            w.apply_bcs(&bc);
            let dofs = Dofs::new(&g, &bc);
            let mut x = vec![0.0; dofs.len()];
            dofs.pack(&w, &mut x);
            let map = StrainMap::new(&g, &bc);
            let c = map.row_weights(&g, &eta);
            let dt = 0.3;
            let mut y = vec![0.0; x.len()];
            map.apply(&c, dt / g.cell_volume(), &x, &mut y);
            let l = viscous_divergence(&w, &g, &bc, &eta);
            let mut lp = vec![0.0; x.len()];
            dofs.pack(&l, &mut lp);
            for k in 0..x.len() {
                assert!(
                    (y[k] - (x[k] - dt * lp[k])).abs() < 1e-12 * (1.0 + y[k].abs()),
                    "{k}"
                );
            }
            let d = map.diagonal(&c, dt / g.cell_volume(), x.len());
            for k in 0..x.len() {
                let mut e = vec![0.0; x.len()];
                e[k] = 1.0;
                map.apply(&c, dt / g.cell_volume(), &e, &mut y);
                assert!((y[k] - d[k]).abs() < 1e-12 * d[k], "diag {k}");
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(0.1);
        assert!(c.validate().is_ok());
        c.picard_tol = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg(0.1);
        c.time_step = TimeStep::Cfl(1.5);
        assert!(c.validate().is_err());
    }

    #[test]
    fn advect_zero_and_uniform() {
        let fl = flow(BoundarySpec::channel(), 0.0);
        let g = fl.grid;
        let z = StaggeredField::zeros(&g);
        assert_eq!(advect(&z, &g, &fl.bc, 0.1).unwrap(), z);

        let mut c = StaggeredField::from_fn(&g, |_, _| 0.7, |_, _| 0.0);
        c.apply_bcs(&fl.bc);
        let out = advect(&c, &g, &fl.bc, 0.1).unwrap();
        assert!(max_abs_diff(&out, &c) < 1e-14);
    }

    #[test]
    fn advect_reports_cfl() {
        let fl = flow(BoundarySpec::channel(), 0.0);
        let c = StaggeredField::from_fn(&fl.grid, |_, _| 10.0, |_, _| 0.0);
        match advect(&c, &fl.grid, &fl.bc, 0.1) {
            Err(Error::CflViolation { cfl }) => assert!((cfl - 12.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn advection_is_energy_neutral_on_solenoidal_fields() {
        let fl = flow(BoundarySpec::no_slip(), 0.0);
        let f = swirl(&fl.grid);
        assert!(max_abs(&compute_divergence(&f, &fl.grid).unwrap()) < 1e-12);
        let c = advection_term(&f, &fl.grid, &fl.bc);
        let scale = norm_h(&c, &fl.grid) * norm_h(&f, &fl.grid);
        assert!(inner_h(&c, &f, &fl.grid).abs() < 1e-13 * scale);
    }

    #[test]
    fn diffuse_zero_and_newtonian_count() {
        let fl = flow(BoundarySpec::no_slip(), 0.0);
        let z = StaggeredField::zeros(&fl.grid);
        let (out, n) = diffuse_implicit(&z, &fl, 0.1, &cfg(0.1)).unwrap();
        assert_eq!(out, z);
        assert_eq!(n, 1);
        let (_, n) = diffuse_implicit(&swirl(&fl.grid), &fl, 0.1, &cfg(0.1)).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn diffusion_dissipates_with_matching_quadrature() {
        let fl = flow(BoundarySpec::no_slip(), 0.05);
        let g = fl.grid;
        let f = swirl(&g);
        let strain = compute_strain(&f, &g, &fl.bc).unwrap();
        let eta = viscosity_field(
            &f,
            &strain,
            &g,
            &fl.bc,
            &fl.fluid,
            RegIndex::new(8.0).unwrap(),
        );
        let l = viscous_divergence(&f, &g, &fl.bc, &eta);
        let lhs = -inner_h(&l, &f, &g);
        let rhs = dissipation(&f, &g, &fl.bc, &eta);
        assert!((lhs - rhs).abs() < 1e-12 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn bingham_diffusion_converges() {
        let fl = flow(BoundarySpec::no_slip(), 0.05);
        let f = swirl(&fl.grid);
        let (out, n) = diffuse_implicit(&f, &fl, 0.05, &cfg(0.05)).unwrap();
        assert!(n >= 1);
        assert!(norm_h(&out, &fl.grid) < norm_h(&f, &fl.grid));
    }

    #[test]
    fn projection_of_solenoidal_field_is_identity() {
        let fl = flow(BoundarySpec::no_slip(), 0.0);
        let f = swirl(&fl.grid);
        // solenoidal up to rounding, so only rounding-level corrections are allowed
        let (out, stats) = pressure_project(&f, &fl.grid, &fl.bc, 0.1, &cfg(0.1)).unwrap();
        assert!(stats.max_divergence < 1e-12);
        assert!(max_abs_diff(&out, &f) < 1e-13);
        assert!(max_abs(&out.p) < 1e-13);

        let z = StaggeredField::zeros(&fl.grid);
        let (out, stats) = pressure_project(&z, &fl.grid, &fl.bc, 0.1, &cfg(0.1)).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(out, z);
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let fl = flow(BoundarySpec::no_slip(), 0.3);
        let c = cfg(0.05);
        let mut f = StaggeredField::zeros(&fl.grid);
        let mut t = 0.0;
        for _ in 0..5 {
            let out = step(&f, &fl, t, &c).unwrap();
            t += out.dt;
            f = out.field;
        }
        assert!(f.u.iter().chain(&f.v).chain(&f.p).all(|&x| x == 0.0));
    }
}
