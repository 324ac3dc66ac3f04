//! Staggered (MAC) grid storage, discrete differential operators and norms.
//!
//! Layout on an `nx × ny` cell grid over `[0, lx] × [0, ly]`:
//!
//! * `u` lives on vertical faces, `(nx + 1) × ny`, face `(i, j)` at `(i·dx, (j+½)·dy)`;
//! * `v` lives on horizontal faces, `nx × (ny + 1)`, face `(i, j)` at `((i+½)·dx, j·dy)`;
//! * `p` lives at cell centers, `nx × ny`.
//!
//! Tangential wall values enter through ghost reflection (`ghost = 2·wall − interior`),
//! never through stored ghost rows. With `periodic_x` the faces `i = 0` and
//! `i = nx` of `u` are the same face and are kept equal by [`StaggeredField::apply_bcs`].
//!
//! Quadrature is the midpoint rule on the native control volumes: face volumes for
//! velocities (halved on walls), cell volumes for centered quantities and corner
//! volumes (halved per wall) for corner quantities.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::constitutive::SymTensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::invalid(
                "grid",
                format!("needs at least 4 cells per direction, got {nx}x{ny}"),
            ));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::invalid(
                "grid",
                format!("domain lengths must be positive, got {lx} x {ly}"),
            ));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    pub fn u_face(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx, (j as f64 + 0.5) * self.dy)
    }

    pub fn v_face(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, j as f64 * self.dy)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn corner(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Control-volume weight of corner `(i, j)`, halved on each wall it touches.
    #[inline]
    pub fn corner_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        wx * wy * self.cell_volume()
    }

    #[inline]
    pub fn u_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.nx {
            0.5 * self.cell_volume()
        } else {
            self.cell_volume()
        }
    }

    #[inline]
    pub fn v_weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.ny {
            0.5 * self.cell_volume()
        } else {
            self.cell_volume()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Wall {
    NoSlip,
    /// Tangential wall speed (m/s).
    MovingLid(f64),
}

impl Wall {
    pub fn speed(&self) -> f64 {
        match *self {
            Wall::NoSlip => 0.0,
            Wall::MovingLid(s) => s,
        }
    }
}

/// Wall conditions. Only the top wall may move. With `periodic_x` the left and
/// right walls are replaced by periodicity and must be `NoSlip` placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub bottom: Wall,
    pub top: Wall,
    pub left: Wall,
    pub right: Wall,
    pub periodic_x: bool,
}

impl BoundarySpec {
    pub fn no_slip() -> Self {
        Self {
            bottom: Wall::NoSlip,
            top: Wall::NoSlip,
            left: Wall::NoSlip,
            right: Wall::NoSlip,
            periodic_x: false,
        }
    }

    pub fn lid_driven(speed: f64) -> Self {
        Self {
            top: Wall::MovingLid(speed),
            ..Self::no_slip()
        }
    }

    /// No-slip plates at `y = 0` and `y = ly`, periodic in `x`.
    pub fn channel() -> Self {
        Self {
            periodic_x: true,
            ..Self::no_slip()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let moving = |w: &Wall| matches!(w, Wall::MovingLid(_));
        if moving(&self.bottom) || moving(&self.left) || moving(&self.right) {
            return Err(Error::invalid("boundary", "only the top wall may move"));
        }
        if let Wall::MovingLid(s) = self.top {
            if !s.is_finite() {
                return Err(Error::invalid("boundary", "lid speed must be finite"));
            }
        }
        Ok(())
    }

    /// Same geometry with every wall at rest.
    pub fn homogeneous(&self) -> Self {
        Self {
            top: Wall::NoSlip,
            ..*self
        }
    }

    pub fn has_moving_wall(&self) -> bool {
        self.top.speed() != 0.0
    }
}

/// MAC velocity/pressure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField {
    pub nx: usize,
    pub ny: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl StaggeredField {
    pub fn zeros(g: &Grid) -> Self {
        Self {
            nx: g.nx,
            ny: g.ny,
            u: vec![0.0; (g.nx + 1) * g.ny],
            v: vec![0.0; g.nx * (g.ny + 1)],
            p: vec![0.0; g.nx * g.ny],
        }
    }

    /// Samples `fu` on `u` faces and `fv` on `v` faces; pressure is zero.
    pub fn from_fn(g: &Grid, fu: impl Fn(f64, f64) -> f64, fv: impl Fn(f64, f64) -> f64) -> Self {
        let mut f = Self::zeros(g);
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let (x, y) = g.u_face(i, j);
                f.set_u(i, j, fu(x, y));
            }
        }
        for j in 0..=g.ny {
            for i in 0..g.nx {
                let (x, y) = g.v_face(i, j);
                f.set_v(i, j, fv(x, y));
            }
        }
        f
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        let ok = self.nx == g.nx
            && self.ny == g.ny
            && self.u.len() == (g.nx + 1) * g.ny
            && self.v.len() == g.nx * (g.ny + 1)
            && self.p.len() == g.nx * g.ny;
        if ok {
            Ok(())
        } else {
            Err(Error::SizeMismatch {
                expected: format!("{}x{} grid", g.nx, g.ny),
                got: format!(
                    "{}x{} field (u {}, v {}, p {})",
                    self.nx,
                    self.ny,
                    self.u.len(),
                    self.v.len(),
                    self.p.len()
                ),
            })
        }
    }

    #[inline]
    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[j * (self.nx + 1) + i]
    }

    #[inline]
    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.nx + i]
    }

    #[inline]
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[j * self.nx + i]
    }

    #[inline]
    pub fn set_u(&mut self, i: usize, j: usize, val: f64) {
        self.u[j * (self.nx + 1) + i] = val;
    }

    #[inline]
    pub fn set_v(&mut self, i: usize, j: usize, val: f64) {
        self.v[j * self.nx + i] = val;
    }

    /// `u` at `(i, j)` with `j ∈ [−1, ny]`; rows outside the domain are
    /// reflected through the wall value. `i` may be `−1` or `nx + 1` only when
    /// periodic.
    #[inline]
    pub fn u_ext(&self, bc: &BoundarySpec, i: isize, j: isize) -> f64 {
        let nx = self.nx as isize;
        let i = if bc.periodic_x { i.rem_euclid(nx) } else { i } as usize;
        if j < 0 {
            2.0 * bc.bottom.speed() - self.u(i, 0)
        } else if j as usize >= self.ny {
            2.0 * bc.top.speed() - self.u(i, self.ny - 1)
        } else {
            self.u(i, j as usize)
        }
    }

    /// `v` at `(i, j)` with `i ∈ [−1, nx]`; side walls reflect, periodic wraps.
    #[inline]
    pub fn v_ext(&self, bc: &BoundarySpec, i: isize, j: usize) -> f64 {
        let nx = self.nx as isize;
        if bc.periodic_x {
            self.v(i.rem_euclid(nx) as usize, j)
        } else if i < 0 {
            -self.v(0, j)
        } else if i >= nx {
            -self.v(self.nx - 1, j)
        } else {
            self.v(i as usize, j)
        }
    }

    /// Enforce wall-normal velocities (and periodic face identity).
    pub fn apply_bcs(&mut self, bc: &BoundarySpec) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            if bc.periodic_x {
                let w = self.u(0, j);
                self.set_u(nx, j, w);
            } else {
                self.set_u(0, j, 0.0);
                self.set_u(nx, j, 0.0);
            }
        }
        for i in 0..nx {
            self.set_v(i, 0, 0.0);
            self.set_v(i, ny, 0.0);
        }
    }

    /// Cell-centered velocity by face averaging.
    pub fn center_velocity(&self, i: usize, j: usize) -> (f64, f64) {
        (
            0.5 * (self.u(i, j) + self.u(i + 1, j)),
            0.5 * (self.v(i, j) + self.v(i, j + 1)),
        )
    }

    pub fn max_abs_velocity(&self) -> (f64, f64) {
        let m = |xs: &[f64]| xs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        (m(&self.u), m(&self.v))
    }

    /// `self + scale·other` for the velocity components; pressure copied from `self`.
    pub fn axpy(&self, scale: f64, other: &StaggeredField) -> StaggeredField {
        let mut out = self.clone();
        for (a, b) in out.u.iter_mut().zip(&other.u) {
            *a += scale * b;
        }
        for (a, b) in out.v.iter_mut().zip(&other.v) {
            *a += scale * b;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.u
            .iter()
            .chain(&self.v)
            .chain(&self.p)
            .all(|x| x.is_finite())
    }
}

/// Cell-centered symmetric tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<SymTensor2>,
}

impl TensorField {
    pub fn zeros(g: &Grid) -> Self {
        Self {
            nx: g.nx,
            ny: g.ny,
            data: vec![SymTensor2::ZERO; g.cell_count()],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> SymTensor2 {
        self.data[j * self.nx + i]
    }
}

/// `2·D_xy = ∂u/∂y + ∂v/∂x` at corner `(i, j)`, the point `(i·dx, j·dy)`.
#[inline]
pub fn corner_shear(f: &StaggeredField, g: &Grid, bc: &BoundarySpec, i: usize, j: usize) -> f64 {
    let (ii, jj) = (i as isize, j as isize);
    let du_dy = (f.u_ext(bc, ii, jj) - f.u_ext(bc, ii, jj - 1)) / g.dy;
    let dv_dx = (f.v_ext(bc, ii, j) - f.v_ext(bc, ii - 1, j)) / g.dx;
    du_dy + dv_dx
}

/// `2·D_xy` at every corner, `(nx + 1) × (ny + 1)`.
pub fn corner_shears(f: &StaggeredField, g: &Grid, bc: &BoundarySpec) -> Vec<f64> {
    let mut out = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            out[g.corner(i, j)] = corner_shear(f, g, bc, i, j);
        }
    }
    out
}

/// Cell-centered strain rate `Du = ½(∇u + ∇uᵀ)`.
///
/// Diagonal entries come from the two faces of the cell; the off-diagonal entry
/// is the average of the four corner values.
pub fn compute_strain(f: &StaggeredField, g: &Grid, bc: &BoundarySpec) -> Result<TensorField> {
    f.check(g)?;
    let shears = corner_shears(f, g, bc);
    let mut out = TensorField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let xx = (f.u(i + 1, j) - f.u(i, j)) / g.dx;
            let yy = (f.v(i, j + 1) - f.v(i, j)) / g.dy;
            let s = shears[g.corner(i, j)]
                + shears[g.corner(i + 1, j)]
                + shears[g.corner(i, j + 1)]
                + shears[g.corner(i + 1, j + 1)];
            out.data[g.cell(i, j)] = SymTensor2::new(xx, yy, 0.125 * s);
        }
    }
    Ok(out)
}

/// MAC divergence per cell.
pub fn compute_divergence(f: &StaggeredField, g: &Grid) -> Result<Vec<f64>> {
    f.check(g)?;
    let mut out = vec![0.0; g.cell_count()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            out[g.cell(i, j)] =
                (f.u(i + 1, j) - f.u(i, j)) / g.dx + (f.v(i, j + 1) - f.v(i, j)) / g.dy;
        }
    }
    Ok(out)
}

pub fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Face-weighted L² inner product of the velocity components.
pub fn inner_h(a: &StaggeredField, b: &StaggeredField, g: &Grid) -> f64 {
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..=g.nx {
            s += g.u_weight(i) * a.u(i, j) * b.u(i, j);
        }
    }
    for j in 0..=g.ny {
        let w = g.v_weight(j);
        for i in 0..g.nx {
            s += w * a.v(i, j) * b.v(i, j);
        }
    }
    s
}

/// `‖v‖_H = (∫|v|²)^½`.
pub fn norm_h(f: &StaggeredField, g: &Grid) -> f64 {
    inner_h(f, f, g).max(0.0).sqrt()
}

/// `‖v‖_V = (∫|∇v|²)^½`: normal derivatives at cell centers, cross derivatives
/// at corners.
pub fn norm_v(f: &StaggeredField, g: &Grid, bc: &BoundarySpec) -> f64 {
    let mut s = 0.0;
    let vol = g.cell_volume();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let ux = (f.u(i + 1, j) - f.u(i, j)) / g.dx;
            let vy = (f.v(i, j + 1) - f.v(i, j)) / g.dy;
            s += vol * (ux * ux + vy * vy);
        }
    }
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let (ii, jj) = (i as isize, j as isize);
            let uy = (f.u_ext(bc, ii, jj) - f.u_ext(bc, ii, jj - 1)) / g.dy;
            let vx = (f.v_ext(bc, ii, j) - f.v_ext(bc, ii - 1, j)) / g.dx;
            s += g.corner_weight(i, j) * (uy * uy + vx * vx);
        }
    }
    s.sqrt()
}

/// `‖ |v| ‖_{L⁴}` with velocities averaged to cell centers.
pub fn norm_l4(f: &StaggeredField, g: &Grid) -> f64 {
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (u, v) = f.center_velocity(i, j);
            let m2 = u * u + v * v;
            s += m2 * m2;
        }
    }
    (s * g.cell_volume()).powf(0.25)
}

/// Empirical Ladyzhenskaya ratio `‖v‖²_{L⁴} / (‖v‖_V·‖v‖_H)`; `None` for a zero field.
pub fn ladyzhenskaya_ratio(f: &StaggeredField, g: &Grid, bc: &BoundarySpec) -> Option<f64> {
    let h = norm_h(f, g);
    let v = norm_v(f, g, bc);
    if h > 0.0 && v > 0.0 {
        let l4 = norm_l4(f, g);
        Some(l4 * l4 / (v * h))
    } else {
        None
    }
}

/// Discrete pressure gradient on the `u` and `v` faces; wall-normal faces are zero.
pub fn pressure_gradient(p: &[f64], g: &Grid, bc: &BoundarySpec) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (g.nx, g.ny);
    let mut gx = vec![0.0; (nx + 1) * ny];
    let mut gy = vec![0.0; nx * (ny + 1)];
    for j in 0..ny {
        for i in 0..=nx {
            let val = if i == 0 || i == nx {
                if bc.periodic_x {
                    (p[g.cell(0, j)] - p[g.cell(nx - 1, j)]) / g.dx
                } else {
                    0.0
                }
            } else {
                (p[g.cell(i, j)] - p[g.cell(i - 1, j)]) / g.dx
            };
            gx[j * (nx + 1) + i] = val;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            gy[j * nx + i] = (p[g.cell(i, j)] - p[g.cell(i, j - 1)]) / g.dy;
        }
    }
    (gx, gy)
}

/// Writes one row per cell center: `x,y,u,v,p` plus any extra named columns.
pub fn write_fields_csv<W: Write>(
    mut w: W,
    f: &StaggeredField,
    g: &Grid,
    extra: &[(&str, &[f64])],
) -> Result<()> {
    f.check(g)?;
    write!(w, "x,y,u,v,p")?;
    for (name, col) in extra {
        if col.len() != g.cell_count() {
            return Err(Error::SizeMismatch {
                expected: format!("{} cell values", g.cell_count()),
                got: format!("{} values for column {name}", col.len()),
            });
        }
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = g.cell_center(i, j);
            let (u, v) = f.center_velocity(i, j);
            write!(w, "{x},{y},{u},{v},{}", f.p(i, j))?;
            for (_, col) in extra {
                write!(w, ",{}", col[g.cell(i, j)])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Checkpoint metadata carried in the header line.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub t: f64,
    pub m: f64,
    pub config_hash: u64,
}

/// Field CSV plus the raw west/south face values of every cell, which together
/// with [`StaggeredField::apply_bcs`] reconstruct the staggered state exactly.
pub fn write_checkpoint<W: Write>(
    mut w: W,
    f: &StaggeredField,
    g: &Grid,
    header: &CheckpointHeader,
) -> Result<()> {
    writeln!(
        w,
        "# t={},m={},config_hash={:016x},nx={},ny={},lx={},ly={}",
        header.t, header.m, header.config_hash, g.nx, g.ny, g.lx, g.ly
    )?;
    let mut west = vec![0.0; g.cell_count()];
    let mut south = vec![0.0; g.cell_count()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            west[g.cell(i, j)] = f.u(i, j);
            south[g.cell(i, j)] = f.v(i, j);
        }
    }
    write_fields_csv(w, f, g, &[("u_west", &west), ("v_south", &south)])
}

pub fn read_checkpoint<R: BufRead>(
    r: R,
    bc: &BoundarySpec,
) -> Result<(Grid, StaggeredField, CheckpointHeader)> {
    let mut lines = r.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty checkpoint".into()))??;
    let head = head
        .strip_prefix("# ")
        .ok_or_else(|| Error::Format("missing checkpoint header".into()))?;
    let mut kv = std::collections::HashMap::new();
    for part in head.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header entry `{part}`")))?;
        kv.insert(k.trim(), v.trim().to_string());
    }
    let get = |k: &str| {
        kv.get(k)
            .cloned()
            .ok_or_else(|| Error::Format(format!("header lacks `{k}`")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("header `{k}`: {e}")))
    };
    let int = |k: &str| -> Result<usize> {
        get(k)?
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("header `{k}`: {e}")))
    };
    let g = Grid::new(int("nx")?, int("ny")?, num("lx")?, num("ly")?)?;
    let header = CheckpointHeader {
        t: num("t")?,
        m: num("m")?,
        config_hash: u64::from_str_radix(&get("config_hash")?, 16)
            .map_err(|e| Error::Format(format!("config hash: {e}")))?,
    };
    let cols = lines
        .next()
        .ok_or_else(|| Error::Format("missing column header".into()))??;
    let names: Vec<&str> = cols.split(',').collect();
    let idx = |name: &str| {
        names
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
    };
    let (ip, iu, iv) = (idx("p")?, idx("u_west")?, idx("v_south")?);
    let mut f = StaggeredField::zeros(&g);
    let mut count = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if count >= g.cell_count() {
            return Err(Error::Format("too many rows".into()));
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", count + 1)))?;
        if vals.len() != names.len() {
            return Err(Error::Format(format!("row {} has wrong arity", count + 1)));
        }
        let (i, j) = (count % g.nx, count / g.nx);
        f.set_u(i, j, vals[iu]);
        f.set_v(i, j, vals[iv]);
        f.p[g.cell(i, j)] = vals[ip];
        count += 1;
    }
    if count != g.cell_count() {
        return Err(Error::Format(format!(
            "expected {} rows, found {count}",
            g.cell_count()
        )));
    }
    f.apply_bcs(bc);
    Ok((g, f, header))
}
