//! `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constitutive::{FluidParams, RegIndex};
use crate::continuation::MSchedule;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scenario::Scenario;
use crate::solver::{SolveConfig, TimeStep};

/// Amplitude of the random initial field of the decay scenario.
pub const DECAY_AMPLITUDE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioName {
    Channel,
    Cavity,
    Decay,
}

impl ScenarioName {
    fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Channel => "channel",
            ScenarioName::Cavity => "cavity",
            ScenarioName::Decay => "decay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MSpec {
    Single(f64),
    Schedule(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSpec {
    Dt(f64),
    Cfl(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub scenario: ScenarioName,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub mu: f64,
    pub tau_y: f64,
    pub m: MSpec,
    pub step: StepSpec,
    pub t_end: f64,
    pub steady_tol: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub poisson_tol: f64,
    pub lid_speed: f64,
    pub force_gx: f64,
    pub out_dir: String,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scenario: ScenarioName::Channel,
            nx: 32,
            ny: 128,
            lx: 1.0,
            ly: 2.0,
            mu: 1.0,
            tau_y: 0.5,
            m: MSpec::Single(64.0),
            step: StepSpec::Dt(0.05),
            t_end: 50.0,
            steady_tol: 1e-6,
            picard_tol: 1e-6,
            picard_max: 100,
            poisson_tol: 1e-9,
            lid_speed: 1.0,
            force_gx: 1.0,
            out_dir: "out".into(),
            seed: 42,
        }
    }
}

pub const KEYS: &[&str] = &[
    "scenario",
    "nx",
    "ny",
    "lx",
    "ly",
    "mu",
    "tau_y",
    "m",
    "m_schedule",
    "dt",
    "cfl",
    "t_end",
    "steady_tol",
    "picard_tol",
    "picard_max",
    "poisson_tol",
    "lid_speed",
    "force_gx",
    "out_dir",
    "seed",
];

fn num(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn positive(v: &str) -> std::result::Result<f64, String> {
    let x = num(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be > 0, got {x}"))
    }
}

fn count(v: &str, min: usize) -> std::result::Result<usize, String> {
    let n: usize = v
        .parse()
        .map_err(|_| format!("`{v}` is not a non-negative integer"))?;
    if n < min {
        return Err(format!("must be >= {min}, got {n}"));
    }
    Ok(n)
}

fn reg_index(v: &str) -> std::result::Result<f64, String> {
    let m = num(v)?;
    RegIndex::new(m).map_err(|e| e.to_string())?;
    Ok(m)
}

impl Config {
    /// Sets one key; the value is checked against the type invariants.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "scenario" => {
                self.scenario = match value {
                    "channel" => ScenarioName::Channel,
                    "cavity" => ScenarioName::Cavity,
                    "decay" => ScenarioName::Decay,
                    other => return Err(format!("unknown scenario `{other}`")),
                }
            }
            "nx" => self.nx = count(value, 4)?,
            "ny" => self.ny = count(value, 4)?,
            "lx" => self.lx = positive(value)?,
            "ly" => self.ly = positive(value)?,
            "mu" => self.mu = positive(value)?,
            "tau_y" => {
                let t = num(value)?;
                if t < 0.0 {
                    return Err(format!("must be >= 0, got {t}"));
                }
                self.tau_y = t;
            }
            "m" => self.m = MSpec::Single(reg_index(value)?),
            "m_schedule" => {
                let ms = value
                    .split(',')
                    .map(|s| reg_index(s.trim()))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                MSchedule::new(&ms, true).map_err(|e| e.to_string())?;
                self.m = MSpec::Schedule(ms);
            }
            "dt" => self.step = StepSpec::Dt(positive(value)?),
            "cfl" => {
                let c = positive(value)?;
                if c > 1.0 {
                    return Err(format!("must be <= 1, got {c}"));
                }
                self.step = StepSpec::Cfl(c);
            }
            "t_end" => self.t_end = positive(value)?,
            "steady_tol" => self.steady_tol = positive(value)?,
            "picard_tol" => self.picard_tol = positive(value)?,
            "picard_max" => self.picard_max = count(value, 1)?,
            "poisson_tol" => self.poisson_tol = positive(value)?,
            "lid_speed" => self.lid_speed = num(value)?,
            "force_gx" => self.force_gx = positive(value)?,
            "out_dir" => {
                if value.is_empty() || value.contains('#') {
                    return Err("must be non-empty and free of `#`".into());
                }
                self.out_dir = value.to_string();
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a u64"))?
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<(String, usize)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let err = |message: String| Error::Config {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            // the two spellings of one setting may not both appear
            let family = match key {
                "m_schedule" => "m",
                "cfl" => "dt",
                k => k,
            };
            if let Some(&(_, first)) = seen.iter().find(|(k, _)| *k == family) {
                return Err(err(format!("`{key}` conflicts with line {first}")));
            }
            cfg.set(key, value)
                .map_err(|m| err(format!("`{key}`: {m}")))?;
            seen.push((family.to_string(), line_no));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Applies a `key=value` command-line override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec.split_once('=').ok_or_else(|| Error::Config {
            line: 0,
            message: format!("override `{spec}` is not `key=value`"),
        })?;
        self.set(key.trim(), value).map_err(|m| Error::Config {
            line: 0,
            message: format!("override `{}`: {m}", key.trim()),
        })
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scenario", self.scenario.as_str().into());
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("lx", self.lx.to_string());
        kv("ly", self.ly.to_string());
        kv("mu", self.mu.to_string());
        kv("tau_y", self.tau_y.to_string());
        match &self.m {
            MSpec::Single(m) => kv("m", m.to_string()),
            MSpec::Schedule(ms) => kv(
                "m_schedule",
                ms.iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
            ),
        }
        match self.step {
            StepSpec::Dt(dt) => kv("dt", dt.to_string()),
            StepSpec::Cfl(c) => kv("cfl", c.to_string()),
        }
        kv("t_end", self.t_end.to_string());
        kv("steady_tol", self.steady_tol.to_string());
        kv("picard_tol", self.picard_tol.to_string());
        kv("picard_max", self.picard_max.to_string());
        kv("poisson_tol", self.poisson_tol.to_string());
        kv("lid_speed", self.lid_speed.to_string());
        kv("force_gx", self.force_gx.to_string());
        kv("out_dir", self.out_dir.clone());
        kv("seed", self.seed.to_string());
        s
    }

    /// FNV-1a of the serialized form; identifies the config in checkpoints.
    pub fn hash(&self) -> u64 {
        self.serialize()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
            })
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let g = self.grid()?;
        match self.scenario {
            ScenarioName::Channel => Scenario::channel(g, self.force_gx),
            ScenarioName::Cavity => Scenario::cavity(g, self.lid_speed),
            ScenarioName::Decay => Ok(Scenario::decay(g, self.seed, DECAY_AMPLITUDE)),
        }
    }

    pub fn fluid(&self) -> Result<FluidParams> {
        FluidParams::new(self.mu, self.tau_y)
    }

    pub fn schedule(&self) -> Result<MSchedule> {
        match &self.m {
            MSpec::Single(m) => Ok(MSchedule::single(RegIndex::new(*m)?)),
            MSpec::Schedule(ms) => MSchedule::new(ms, true),
        }
    }

    /// Solver settings; `m` is the last (largest) value of the schedule.
    pub fn solve_config(&self) -> Result<SolveConfig> {
        let schedule = self.schedule()?;
        let m = *schedule.values().last().expect("schedules are non-empty");
        let step = match self.step {
            StepSpec::Dt(dt) => TimeStep::Fixed(dt),
            StepSpec::Cfl(c) => TimeStep::Cfl(c),
        };
        let mut cfg = SolveConfig::new(step, self.t_end, m);
        cfg.steady_tol = self.steady_tol;
        cfg.picard_tol = self.picard_tol;
        cfg.picard_max = self.picard_max;
        cfg.poisson_tol = self.poisson_tol;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads a config file and builds every run input from it.
pub fn parse_config(path: &Path) -> Result<(Scenario, SolveConfig, FluidParams, MSchedule)> {
    let cfg = Config::from_path(path)?;
    Ok((
        cfg.scenario()?,
        cfg.solve_config()?,
        cfg.fluid()?,
        cfg.schedule()?,
    ))
}
