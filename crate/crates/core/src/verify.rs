//! Randomized checks of the constitutive inequalities and of the channel oracle.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constitutive::{
    bingham_stress, biviscosity_stress, gamma_m, FluidParams, RegIndex, SymTensor2,
};
use crate::error::Result;
use crate::oracle::channel_profile_quadrature;
use crate::scenario::channel_oracle;

/// Relative rounding allowance of every inequality check.
pub const REL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub samples: usize,
    pub seed: u64,
    /// Pairs by branch of (A, B): Newtonian/Newtonian, Newtonian/plastic,
    /// plastic/Newtonian, plastic/plastic.
    pub branch_pairs: [usize; 4],
    pub coercivity_violations: usize,
    pub growth_violations: usize,
    pub monotonicity_violations: usize,
    pub continuity_violations: usize,
    pub plastic_identity_violations: usize,
    pub max_continuity_defect: f64,
    pub seconds: f64,
}

impl PropertyReport {
    pub fn violations(&self) -> usize {
        self.coercivity_violations
            + self.growth_violations
            + self.monotonicity_violations
            + self.continuity_violations
            + self.plastic_identity_violations
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0 && self.branch_pairs.iter().all(|&n| n > 0)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn direction(rng: &mut ChaCha8Rng) -> SymTensor2 {
    loop {
        let t = SymTensor2::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = t.norm();
        if n > 1e-3 {
            return (1.0 / n) * t;
        }
    }
}

/// A tensor on the requested branch; `plastic = false` with `γ_m = 0` gives zero.
fn sample_on_branch(rng: &mut ChaCha8Rng, gamma: f64, plastic: bool) -> SymTensor2 {
    let dir = direction(rng);
    let size = if plastic {
        let base = if gamma > 0.0 { gamma } else { 1.0 };
        base * (1.0 + log_uniform(rng, 1e-6, 1e3))
    } else {
        gamma * rng.gen_range(0.0..1.0)
    };
    size * dir
}

fn sample_fluid(rng: &mut ChaCha8Rng) -> (FluidParams, RegIndex) {
    let mu = log_uniform(rng, 1e-2, 1e2);
    let tau_y = if rng.gen_bool(0.1) {
        0.0
    } else {
        log_uniform(rng, 1e-3, 1e2)
    };
    let m = 2.0 + log_uniform(rng, 1e-3, 1e4);
    (
        FluidParams::new(mu, tau_y).expect("sampled parameters are valid"),
        RegIndex::new(m).expect("sampled m is valid"),
    )
}

/// Runs `samples` random tensor pairs through the inequalities of the law.
pub fn property_suite(samples: usize, seed: u64) -> PropertyReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = PropertyReport {
        samples,
        seed,
        ..Default::default()
    };
    for k in 0..samples {
        let (p, r) = sample_fluid(&mut rng);
        let (mu, m) = (p.mu(), r.value());
        let gamma = gamma_m(&p, r);
        let combo = k % 4;
        let a = sample_on_branch(&mut rng, gamma, combo >= 2);
        let b = if k % 8 == 7 {
            // nearby pair on the same side
            a + (1e-7 * (1.0 + a.norm())) * direction(&mut rng)
        } else {
            sample_on_branch(&mut rng, gamma, combo % 2 == 1)
        };
        let pa = a.norm() > gamma;
        let pb = b.norm() > gamma;
        rep.branch_pairs[2 * pa as usize + pb as usize] += 1;

        let (ta, tb) = (biviscosity_stress(a, &p, r), biviscosity_stress(b, &p, r));
        let (na, nb) = (a.norm(), b.norm());

        let lhs = ta.ddot(&a);
        let rhs = 2.0 * mu * na * na;
        if lhs < rhs - REL_SLACK * (ta.norm() * na + rhs) {
            rep.coercivity_violations += 1;
        }

        if ta.norm() > (p.tau_y() + 2.0 * mu * na) * (1.0 + REL_SLACK) {
            rep.growth_violations += 1;
        }

        let (dt, dd) = (ta - tb, a - b);
        let gap = dt.ddot(&dd);
        let bound = 2.0 * mu * dd.norm_sq();
        let slack =
            REL_SLACK * ((ta.norm() + tb.norm()) * dd.norm() + dt.norm() * (na + nb) + bound);
        if gap < bound - slack {
            rep.monotonicity_violations += 1;
        }

        for (t, x, plastic) in [(ta, a, pa), (tb, b, pb)] {
            if plastic && Some(t) != bingham_stress(x, &p).stress() {
                rep.plastic_identity_violations += 1;
            }
        }

        // both branch formulas on a tensor scaled onto the switch
        if gamma > 0.0 {
            let e = gamma * direction(&mut rng);
            let n = e.norm();
            let newtonian = (2.0 * m * mu) * e;
            let plastic = (2.0 * mu + p.tau_y() / n) * e;
            let defect = (newtonian - plastic).norm() / newtonian.norm();
            rep.max_continuity_defect = rep.max_continuity_defect.max(defect);
            if defect > REL_SLACK {
                rep.continuity_violations += 1;
            }
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    rep
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub parameter_sets: usize,
    pub points_per_set: usize,
    /// `max |closed − quadrature| / max|u|` over all sets.
    pub max_rel_error: f64,
    pub seed: u64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= 1e-10
    }
}

/// Closed-form channel profile against the quadrature solution for random parameters.
pub fn oracle_consistency(sets: usize, points: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..sets {
        let mu = log_uniform(&mut rng, 0.1, 10.0);
        let tau_y = if rng.gen_bool(0.15) {
            0.0
        } else {
            log_uniform(&mut rng, 1e-2, 5.0)
        };
        let p = FluidParams::new(mu, tau_y)?;
        let r = RegIndex::new(2.0 + log_uniform(&mut rng, 1e-2, 500.0))?;
        let g = log_uniform(&mut rng, 0.2, 10.0);
        let h = log_uniform(&mut rng, 0.2, 5.0);
        let ys: Vec<f64> = (0..points).map(|_| rng.gen_range(-h..=h)).collect();
        let quad = channel_profile_quadrature(&ys, g, h, &p, r)?;
        let closed = ys
            .iter()
            .map(|&y| channel_oracle(y, g, h, &p, r))
            .collect::<Result<Vec<_>>>()?;
        let scale = channel_oracle(0.0, g, h, &p, r)?;
        for (a, b) in quad.iter().zip(&closed) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(OracleReport {
        parameter_sets: sets,
        points_per_set: points,
        max_rel_error: worst,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub properties: PropertyReport,
    pub oracle: OracleReport,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.properties.passed() && self.oracle.passed()
    }
}

pub fn run_verify(samples: usize, seed: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        properties: property_suite(samples, seed),
        oracle: oracle_consistency(20, 1000, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_is_clean() {
        let rep = property_suite(4000, 1);
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.branch_pairs.iter().sum::<usize>(), 4000);
    }

    #[test]
    fn oracle_agrees_on_a_few_sets() {
        let rep = oracle_consistency(3, 50, 5).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
