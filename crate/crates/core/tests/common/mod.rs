#![allow(dead_code)]

//! Independent reference computations shared by the integration tests.
//!
//! Everything here works on padded dense arrays built directly from the
//! boundary rules, without going through the library's ghost accessors.

use bingham_core::grid::{BoundarySpec, Grid, StaggeredField, Wall};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wall_speed(w: Wall) -> f64 {
    match w {
        Wall::NoSlip => 0.0,
        Wall::MovingLid(s) => s,
    }
}

/// `u` on rows `-1..=ny` and columns `-1..=nx+1`, index `[j + 1][i + 1]`.
pub fn padded_u(f: &StaggeredField, bc: &BoundarySpec) -> Vec<Vec<f64>> {
    let (nx, ny) = (f.nx, f.ny);
    let mut a = vec![vec![0.0; nx + 3]; ny + 2];
    for j in 0..ny {
        for i in 0..=nx {
            a[j + 1][i + 1] = f.u[j * (nx + 1) + i];
        }
        if bc.periodic_x {
            a[j + 1][0] = f.u[j * (nx + 1) + nx - 1];
            a[j + 1][nx + 2] = f.u[j * (nx + 1) + 1];
        }
    }
    let (bot, top) = (wall_speed(bc.bottom), wall_speed(bc.top));
    for i in 0..nx + 3 {
        a[0][i] = 2.0 * bot - a[1][i];
        a[ny + 1][i] = 2.0 * top - a[ny][i];
    }
    a
}

/// `v` on rows `0..=ny` and columns `-1..=nx`, index `[j][i + 1]`.
pub fn padded_v(f: &StaggeredField, bc: &BoundarySpec) -> Vec<Vec<f64>> {
    let (nx, ny) = (f.nx, f.ny);
    let mut a = vec![vec![0.0; nx + 2]; ny + 1];
    for (j, row) in a.iter_mut().enumerate() {
        for i in 0..nx {
            row[i + 1] = f.v[j * nx + i];
        }
        if bc.periodic_x {
            row[0] = row[nx];
            row[nx + 1] = row[1];
        } else {
            row[0] = -row[1];
            row[nx + 1] = -row[nx];
        }
    }
    a
}

/// `(xx, yy, xy)` per cell, row-major.
pub fn dense_strain(f: &StaggeredField, g: &Grid, bc: &BoundarySpec) -> Vec<[f64; 3]> {
    let (pu, pv) = (padded_u(f, bc), padded_v(f, bc));
    // 2·D_xy at corner (i, j)
    let corner = |i: usize, j: usize| {
        (pu[j + 1][i + 1] - pu[j][i + 1]) / g.dy + (pv[j][i + 1] - pv[j][i]) / g.dx
    };
    let mut out = Vec::with_capacity(g.nx * g.ny);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let xx = (pu[j + 1][i + 2] - pu[j + 1][i + 1]) / g.dx;
            let yy = (pv[j + 1][i + 1] - pv[j][i + 1]) / g.dy;
            let xy =
                (corner(i, j) + corner(i + 1, j) + corner(i, j + 1) + corner(i + 1, j + 1)) / 8.0;
            out.push([xx, yy, xy]);
        }
    }
    out
}

pub fn dense_divergence(f: &StaggeredField, g: &Grid) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let du = f.u[j * (g.nx + 1) + i + 1] - f.u[j * (g.nx + 1) + i];
            let dv = f.v[(j + 1) * g.nx + i] - f.v[j * g.nx + i];
            out.push(du / g.dx + dv / g.dy);
        }
    }
    out
}

/// Trapezoidal weight along a face line with `n + 1` nodes.
fn trap(k: usize, n: usize) -> f64 {
    if k == 0 || k == n {
        0.5
    } else {
        1.0
    }
}

pub fn dense_norm_h(f: &StaggeredField, g: &Grid) -> f64 {
    let vol = g.dx * g.dy;
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..=g.nx {
            s += trap(i, g.nx) * vol * f.u[j * (g.nx + 1) + i].powi(2);
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            s += trap(j, g.ny) * vol * f.v[j * g.nx + i].powi(2);
        }
    }
    s.sqrt()
}

pub fn dense_norm_v(f: &StaggeredField, g: &Grid, bc: &BoundarySpec) -> f64 {
    let (pu, pv) = (padded_u(f, bc), padded_v(f, bc));
    let vol = g.dx * g.dy;
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let ux = (pu[j + 1][i + 2] - pu[j + 1][i + 1]) / g.dx;
            let vy = (pv[j + 1][i + 1] - pv[j][i + 1]) / g.dy;
            s += vol * (ux * ux + vy * vy);
        }
    }
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let uy = (pu[j + 1][i + 1] - pu[j][i + 1]) / g.dy;
            let vx = (pv[j][i + 1] - pv[j][i]) / g.dx;
            s += trap(i, g.nx) * trap(j, g.ny) * vol * (uy * uy + vx * vx);
        }
    }
    s.sqrt()
}

/// Face values drawn uniformly from `[-1, 1]`, wall-normal faces fixed.
pub fn random_field(g: &Grid, bc: &BoundarySpec, seed: u64) -> StaggeredField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = StaggeredField::zeros(g);
    f.u.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    f.v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    f.p.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    f.apply_bcs(bc);
    f
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a
        .iter()
        .chain(b)
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-300);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Worst relative mismatch between library operators and the dense versions
/// over `trials` random fields on no-slip, lid-driven and channel boundaries.
pub fn operator_mismatch(trials: u64) -> f64 {
    use bingham_core::grid::{compute_divergence, compute_strain, norm_h, norm_v};
    let mut worst = 0.0f64;
    let bcs = [
        BoundarySpec::no_slip(),
        BoundarySpec::lid_driven(0.7),
        BoundarySpec::channel(),
    ];
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let nx = rng.gen_range(4..20);
        let ny = rng.gen_range(4..20);
        let g = Grid::new(nx, ny, rng.gen_range(0.3..3.0), rng.gen_range(0.3..3.0)).unwrap();
        let bc = bcs[seed as usize % bcs.len()];
        let f = random_field(&g, &bc, seed);
        let lib: Vec<f64> = compute_strain(&f, &g, &bc)
            .unwrap()
            .data
            .iter()
            .flat_map(|d| [d.xx, d.yy, d.xy])
            .collect();
        let dense: Vec<f64> = dense_strain(&f, &g, &bc).into_iter().flatten().collect();
        worst = worst.max(max_rel_diff(&lib, &dense));
        worst = worst.max(max_rel_diff(
            &compute_divergence(&f, &g).unwrap(),
            &dense_divergence(&f, &g),
        ));
        worst = worst.max(max_rel_diff(&[norm_h(&f, &g)], &[dense_norm_h(&f, &g)]));
        worst = worst.max(max_rel_diff(
            &[norm_v(&f, &g, &bc)],
            &[dense_norm_v(&f, &g, &bc)],
        ));
    }
    worst
}

/// Observed orders of the cell strain error (discrete L²) for a smooth
/// periodic channel field on `n × n`, `2n × 2n`, `4n × 4n`.
pub fn strain_refinement_orders(n: usize) -> Vec<f64> {
    use bingham_core::grid::compute_strain;
    use std::f64::consts::PI;
    let k = 2.0 * PI;
    // u = sin(kx) sin(πy), v = cos(kx) sin(πy) on [0,1]²
    let exact = |x: f64, y: f64| {
        let ux = k * (k * x).cos() * (PI * y).sin();
        let uy = PI * (k * x).sin() * (PI * y).cos();
        let vx = -k * (k * x).sin() * (PI * y).sin();
        let vy = PI * (k * x).cos() * (PI * y).cos();
        [ux, vy, 0.5 * (uy + vx)]
    };
    let bc = BoundarySpec::channel();
    let mut errs = Vec::new();
    for level in 0..3 {
        let m = n << level;
        let g = Grid::new(m, m, 1.0, 1.0).unwrap();
        let f = StaggeredField::from_fn(
            &g,
            |x, y| (k * x).sin() * (PI * y).sin(),
            |x, y| (k * x).cos() * (PI * y).sin(),
        );
        let d = compute_strain(&f, &g, &bc).unwrap();
        let mut s = 0.0;
        for j in 0..m {
            for i in 0..m {
                let (x, y) = g.cell_center(i, j);
                let e = exact(x, y);
                let t = d.at(i, j);
                s += ((t.xx - e[0]).powi(2) + (t.yy - e[1]).powi(2) + 2.0 * (t.xy - e[2]).powi(2))
                    * g.cell_volume();
            }
        }
        errs.push(s.sqrt());
    }
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Thomas algorithm for `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i`.
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / den;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}
