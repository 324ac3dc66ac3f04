//! Jacobi-preconditioned conjugate gradients for the SPD systems of the solver.

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Stop when `‖r‖₂ ≤ rel_tol·‖b‖₂`.
    pub rel_tol: f64,
    /// Additionally require `‖r‖_∞ ≤ abs_tol_inf` when set.
    pub abs_tol_inf: Option<f64>,
    pub max_iter: usize,
    /// Keep iterates orthogonal to constants (singular Neumann/periodic problems).
    pub zero_mean: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Solves `A x = b` starting from the given `x`. `apply(x, out)` writes `A x`.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    diag: &[f64],
    opts: CgOptions,
) -> CgOutcome {
    let n = b.len();
    let mut rhs = b.to_vec();
    if opts.zero_mean {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let b_norm = dot(&rhs, &rhs).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }

    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&rhs) {
        *ri = bi - *ri;
    }
    if opts.zero_mean {
        remove_mean(&mut r);
    }

    let done = |r: &[f64]| {
        let rel = dot(r, r).sqrt() / b_norm;
        let inf_ok = match opts.abs_tol_inf {
            Some(t) => r.iter().all(|v| v.abs() <= t),
            None => true,
        };
        (rel, rel <= opts.rel_tol && inf_ok)
    };

    let (mut rel, mut ok) = done(&r);
    if ok {
        return CgOutcome {
            iterations: 0,
            rel_residual: rel,
            converged: true,
        };
    }

    let precondition = |r: &[f64], z: &mut [f64]| {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(diag) {
            *zi = ri / di;
        }
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    if opts.zero_mean {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return CgOutcome {
                iterations: it,
                rel_residual: rel,
                converged: false,
            };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if opts.zero_mean {
            remove_mean(&mut r);
        }
        (rel, ok) = done(&r);
        if ok {
            if opts.zero_mean {
                remove_mean(x);
            }
            return CgOutcome {
                iterations: it,
                rel_residual: rel,
                converged: true,
            };
        }
        precondition(&r, &mut z);
        if opts.zero_mean {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        iterations: opts.max_iter,
        rel_residual: rel,
        converged: false,
    }
}

/// Anderson mixing for a fixed-point map `x ↦ G(x)`: the next iterate is the
/// combination of recent `G` values that minimises the linearised residual.
#[derive(Debug, Clone)]
pub struct Anderson {
    depth: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    df: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
}

impl Anderson {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            prev: None,
            df: Vec::new(),
            dg: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.prev = None;
        self.df.clear();
        self.dg.clear();
    }

    /// Takes `x` and `gx = G(x)`, returns the next iterate.
    pub fn next(&mut self, x: &[f64], gx: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = gx.iter().zip(x).map(|(g, x)| g - x).collect();
        if let Some((f_old, g_old)) = self.prev.take() {
            self.df
                .push(f.iter().zip(&f_old).map(|(a, b)| a - b).collect());
            self.dg
                .push(gx.iter().zip(&g_old).map(|(a, b)| a - b).collect());
            if self.df.len() > self.depth {
                self.df.remove(0);
                self.dg.remove(0);
            }
        }
        self.prev = Some((f.clone(), gx.to_vec()));
        let k = self.df.len();
        if k == 0 {
            return gx.to_vec();
        }
        // normal equations with a small Tikhonov shift
        let mut a = vec![vec![0.0; k]; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            for j in 0..=i {
                let v = dot(&self.df[i], &self.df[j]);
                a[i][j] = v;
                a[j][i] = v;
            }
            rhs[i] = dot(&self.df[i], &f);
        }
        let trace: f64 = (0..k).map(|i| a[i][i]).sum();
        if !(trace > 0.0) {
            return gx.to_vec();
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-10 * trace;
        }
        let Some(gamma) = solve_small(a, rhs) else {
            self.reset();
            return gx.to_vec();
        };
        let mut out = gx.to_vec();
        for (gm, dg) in gamma.iter().zip(&self.dg) {
            for (o, d) in out.iter_mut().zip(dg) {
                *o -= gm * d;
            }
        }
        out
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c] == 0.0 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let s = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= s * a[c][k];
            }
            b[r] -= s * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
