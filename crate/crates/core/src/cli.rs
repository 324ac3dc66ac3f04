//! Command-line front end: `run`, `sweep`, `verify`, `report`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::constitutive::{FluidParams, RegIndex};
use crate::continuation::{classify_yield, run_m_sweep, LimitReport, YieldState};
use crate::diagnostics::RunReport;
use crate::error::{Error, Result};
use crate::grid::{
    compute_strain, write_checkpoint, write_fields_csv, CheckpointHeader, StaggeredField,
};
use crate::scenario::{compare_channel_profile, ProfileComparison, Scenario, ScenarioKind};
use crate::solver::{simulate, RunOptions};
use crate::verify::{run_verify, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "bingham",
    version,
    about = "2D Bingham flow solver with verification diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Suppress the stdout summary.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single solve at the configured `m`.
    Run,
    /// Continuation over the `m` schedule.
    Sweep,
    /// Constitutive property suite and oracle cross-check; no flow solve.
    Verify {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Re-print the summary of a saved report.
    Report {
        /// `report.json`, or a directory holding one (default: the output directory).
        path: Option<PathBuf>,
    },
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputReport {
    pub command: String,
    pub config: String,
    pub config_hash: String,
    pub run: Option<RunReport>,
    pub profile: Option<ProfileComparison>,
    pub limit: Option<LimitReport>,
    pub verify: Option<VerifyReport>,
}

impl OutputReport {
    pub fn passed(&self) -> bool {
        self.run.as_ref().is_none_or(RunReport::all_assertions_pass)
            && self.limit.as_ref().is_none_or(LimitReport::contracts_hold)
            && self.verify.as_ref().is_none_or(VerifyReport::passed)
    }
}

enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::InvalidParameter { .. }
            | Error::Io(_)
            | Error::Json(_) => Failure::Usage(e),
            other => Failure::Runtime(other),
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_path(path)?,
        None => Config::default(),
    };
    for spec in &cli.overrides {
        cfg.apply_override(spec)?;
    }
    if let Some(out) = &cli.out {
        cfg.set("out_dir", &out.to_string_lossy())
            .map_err(|message| Error::Config { line: 0, message })?;
    }
    Ok(cfg)
}

fn tag(m: f64) -> String {
    format!("m{m}")
}

fn write_fields(
    dir: &Path,
    f: &StaggeredField,
    scenario: &Scenario,
    fluid: &FluidParams,
    r: RegIndex,
    header: &CheckpointHeader,
) -> Result<()> {
    let g = &scenario.grid;
    let strain = compute_strain(f, g, &scenario.boundary())?;
    let shear: Vec<f64> = strain.data.iter().map(|d| d.norm()).collect();
    let yielded: Vec<f64> = classify_yield(&strain, fluid, r)
        .iter()
        .map(|&y| if y == YieldState::Yielded { 1.0 } else { 0.0 })
        .collect();
    let t = tag(r.value());
    let mut w = BufWriter::new(File::create(dir.join(format!("fields_{t}.csv")))?);
    write_fields_csv(&mut w, f, g, &[("|D|", &shear), ("yielded", &yielded)])?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(format!("checkpoint_{t}.csv")))?);
    write_checkpoint(&mut w, f, g, header)?;
    w.flush()?;
    Ok(())
}

fn new_report(command: &str, cfg: &Config) -> OutputReport {
    OutputReport {
        command: command.into(),
        config: cfg.serialize(),
        config_hash: format!("{:016x}", cfg.hash()),
        run: None,
        profile: None,
        limit: None,
        verify: None,
    }
}

fn save_report(dir: &Path, rep: &OutputReport) -> Result<()> {
    let w = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(w, rep)?;
    Ok(())
}

fn cmd_run(cfg: &Config) -> std::result::Result<OutputReport, Failure> {
    let scenario = cfg.scenario()?;
    let fluid = cfg.fluid()?;
    let solve = cfg.solve_config()?;
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir).map_err(Error::from)?;
    let flow = scenario.flow(fluid)?;
    let out = simulate(
        &scenario.initial_field(),
        &flow,
        &solve,
        RunOptions::default(),
    )
    .map_err(Failure::Runtime)?;
    let header = CheckpointHeader {
        t: out.t,
        m: solve.m.value(),
        config_hash: cfg.hash(),
    };
    write_fields(&dir, &out.state, &scenario, &fluid, solve.m, &header)?;
    let mut rep = new_report("run", cfg);
    if matches!(scenario.kind, ScenarioKind::Channel { .. }) {
        rep.profile = Some(compare_channel_profile(
            &out.state, &scenario, &fluid, solve.m,
        )?);
    }
    rep.run = Some(out.report);
    save_report(&dir, &rep)?;
    Ok(rep)
}

fn cmd_sweep(cfg: &Config) -> std::result::Result<OutputReport, Failure> {
    let scenario = cfg.scenario()?;
    let fluid = cfg.fluid()?;
    let solve = cfg.solve_config()?;
    let schedule = cfg.schedule()?;
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir).map_err(Error::from)?;
    let limit = run_m_sweep(&scenario, &schedule, &solve, fluid).map_err(Failure::Runtime)?;
    for (entry, state) in limit.entries.iter().zip(&limit.states) {
        let header = CheckpointHeader {
            t: entry.t_final,
            m: entry.m,
            config_hash: cfg.hash(),
        };
        write_fields(
            &dir,
            state,
            &scenario,
            &fluid,
            RegIndex::new(entry.m)?,
            &header,
        )?;
    }
    let mut w = BufWriter::new(File::create(dir.join("limit.csv")).map_err(Error::from)?);
    limit.write_csv(&mut w)?;
    w.flush().map_err(Error::from)?;
    let mut rep = new_report("sweep", cfg);
    rep.limit = Some(limit);
    save_report(&dir, &rep)?;
    Ok(rep)
}

fn cmd_verify(
    cfg: &Config,
    samples: usize,
    out: Option<&Path>,
) -> std::result::Result<OutputReport, Failure> {
    let mut rep = new_report("verify", cfg);
    rep.verify = Some(run_verify(samples, cfg.seed)?);
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        save_report(dir, &rep)?;
    }
    Ok(rep)
}

fn cmd_report(path: &Path) -> std::result::Result<OutputReport, Failure> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(Error::from)?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

/// Plain-text summary of a report.
pub fn write_summary<W: Write>(w: &mut W, rep: &OutputReport) -> std::io::Result<()> {
    writeln!(w, "command: {} (config {})", rep.command, rep.config_hash)?;
    if let Some(run) = &rep.run {
        let s = |k: &str| run.summary.get(k).copied().unwrap_or(f64::NAN);
        writeln!(
            w,
            "run: {} steps to t = {:.6}, steady = {}",
            s("steps"),
            s("t_final"),
            run.steady
        )?;
        writeln!(
            w,
            "max |div u| = {:.3e}, sup ||u||_H = {:.6e}, Picard solves = {}",
            s("max_div"),
            s("sup_norm_h"),
            s("picard_total")
        )?;
        for (name, ok) in &run.assertions {
            writeln!(w, "  {:<36} {}", name, if *ok { "ok" } else { "FAILED" })?;
        }
    }
    if let Some(p) = &rep.profile {
        writeln!(
            w,
            "channel oracle: relative L2 error {:.3e}, centerline {:.6} (oracle {:.6})",
            p.rel_l2_error, p.centerline_velocity, p.oracle_centerline_velocity
        )?;
        if let (Some(a), Some(b)) = (p.plug_half_width, p.oracle_plug_half_width) {
            writeln!(
                w,
                "plug half-width {a:.6} (oracle {b:.6}, cell {:.6})",
                p.cell_height
            )?;
        }
    }
    if let Some(l) = &rep.limit {
        writeln!(w, "m-sweep on {} (warm start {})", l.scenario, l.warm_start)?;
        for e in &l.entries {
            let delta = e.delta_h.map_or("-".to_string(), |d| format!("{d:.3e}"));
            let plug = e
                .plug_half_width
                .map_or("-".to_string(), |p| format!("{p:.4}"));
            writeln!(
                w,
                "  m = {:<8} delta_H = {:<10} yielded = {:.4} max unyielded |tau| = {:.4e} (bound {:.4e}) plug = {}",
                e.m,
                delta,
                e.stats.yielded_fraction,
                e.stats.max_unyielded_stress,
                e.stats.unyielded_bound,
                plug
            )?;
        }
        for (name, ok) in &l.contracts {
            writeln!(w, "  {:<36} {}", name, if *ok { "ok" } else { "FAILED" })?;
        }
    }
    if let Some(v) = &rep.verify {
        let p = &v.properties;
        writeln!(
            w,
            "property suite: {} pairs (seed {}), {} violations, {:.2} s",
            p.samples,
            p.seed,
            p.violations(),
            p.seconds
        )?;
        writeln!(
            w,
            "  coercivity {} growth {} monotonicity {} continuity {} plastic identity {}",
            p.coercivity_violations,
            p.growth_violations,
            p.monotonicity_violations,
            p.continuity_violations,
            p.plastic_identity_violations
        )?;
        writeln!(w, "  branch pairs NN/NP/PN/PP = {:?}", p.branch_pairs)?;
        writeln!(
            w,
            "channel oracle vs quadrature: {} sets x {} points, max relative error {:.3e}",
            v.oracle.parameter_sets, v.oracle.points_per_set, v.oracle.max_rel_error
        )?;
    }
    writeln!(w, "{}", if rep.passed() { "PASSED" } else { "FAILED" })
}

/// Parses `args` and runs the selected command; returns the process exit code.
pub fn main_cli<I, T, O, E>(args: I, out: &mut O, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    O: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{text}");
            return EXIT_OK;
        }
    };
    let result = load_config(&cli)
        .map_err(Failure::from)
        .and_then(|cfg| match &cli.command {
            Command::Run => cmd_run(&cfg),
            Command::Sweep => cmd_sweep(&cfg),
            Command::Verify { samples } => cmd_verify(&cfg, *samples, cli.out.as_deref()),
            Command::Report { path } => {
                let path = path.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
                cmd_report(&path)
            }
        });
    match result {
        Ok(rep) => {
            if !cli.quiet {
                let _ = write_summary(out, &rep);
            }
            if rep.passed() {
                EXIT_OK
            } else {
                EXIT_ASSERTION
            }
        }
        Err(Failure::Usage(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ASSERTION
        }
    }
}
