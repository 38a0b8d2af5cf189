//! `geoflat` command line: verify, plan, reconstruct, simulate.

mod plot;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flatmap::{flat_output, ReconstructedSample, DT_FD};
use crate::flatness::{check_delta_equivariance, check_dim_condition, check_orthogonality, check_regularity, generic_control_rank};
use crate::planner::{plan_waypoints, FlatTrajectory, Waypoints};
use crate::sampling::init_thread_pool;
use crate::sim::{reconstruct_series, roundtrip_verify, track_charts, write_csv};
use crate::systems::{load_model, Atlas};
use crate::MechanicalSystem;

/// Orthogonality and equivariance residuals must stay below this.
pub const GEOMETRIC_TOL: f64 = 1e-9;
/// Minimum fraction of sampled roots that must be regular.
pub const REGULAR_FRACTION: f64 = 0.99;

#[derive(Debug, Parser)]
#[command(name = "geoflat", version, about = "Geometric flat outputs for mechanical systems on principal bundles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the flatness conditions of a model and write a JSON report.
    Verify {
        model: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "verify.json")]
        out: PathBuf,
    },
    /// Plan a minimum-snap flat trajectory through waypoints.
    Plan {
        model: PathBuf,
        waypoints: PathBuf,
        #[arg(long, default_value = "traj.json")]
        out: PathBuf,
    },
    /// Reconstruct states and inputs along a flat trajectory.
    Reconstruct {
        model: PathBuf,
        traj: PathBuf,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value = "states.csv")]
        out: PathBuf,
        /// Directory for SVG plots.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Reconstruct, integrate, and compare against the flat trajectory.
    Simulate {
        model: PathBuf,
        traj: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Also write the simulated states.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

/// Exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// A checked condition failed, or the trajectory is singular.
    Failed,
    /// Bad input files or arguments.
    Malformed,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::Failed => 1,
            Outcome::Malformed => 2,
        }
    }
}

/// Exit status for an error that aborted a command.
pub fn error_outcome(e: &Error) -> Outcome {
    match e {
        Error::Model(_)
        | Error::Io(_)
        | Error::Planner(_)
        | Error::InvalidParameter { .. }
        | Error::DimensionMismatch { .. }
        | Error::GroupMismatch { .. }
        | Error::ChartMismatch { .. } => Outcome::Malformed,
        _ => Outcome::Failed,
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub condition: &'static str,
    pub residual: f64,
}

impl CheckResult {
    fn new(name: impl Into<String>, pass: bool, residual: f64) -> Self {
        Self { name: name.into(), condition: if pass { "pass" } else { "fail" }, residual }
    }

    pub fn passed(&self) -> bool {
        self.condition == "pass"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub system: String,
    pub samples: usize,
    pub seed: u64,
    pub condition: &'static str,
    pub checks: Vec<CheckResult>,
}

/// Runs every flatness check on a loaded model.
pub fn verify_model(sys: &dyn MechanicalSystem, atlas: &Atlas, samples: usize, seed: u64) -> VerifyReport {
    let mut checks = Vec::new();
    let rank = generic_control_rank(sys);
    let dim_ok = check_dim_condition(sys);
    checks.push(CheckResult::new("dim_condition", dim_ok, (rank as f64 - sys.group_kind().dim() as f64).abs()));
    if !dim_ok {
        // The remaining checks assume dim G unactuated directions.
        return VerifyReport { system: sys.name().to_string(), samples, seed, condition: "fail", checks };
    }
    let eq = check_delta_equivariance(sys, samples, seed);
    checks.push(match eq {
        Ok(r) => CheckResult::new("delta_equivariance", r < GEOMETRIC_TOL, r),
        Err(_) => CheckResult::new("delta_equivariance", false, f64::INFINITY),
    });
    for triv in &atlas.trivializations {
        let name = triv.section.name().to_string();
        let r = check_orthogonality(sys, triv.section.as_ref(), samples, seed).unwrap_or(f64::INFINITY);
        checks.push(CheckResult::new(format!("orthogonality:{name}"), r < GEOMETRIC_TOL, r));
        let reg = check_regularity(sys, triv, samples, seed);
        let pass = reg.roots > 0 && reg.generic_fraction >= REGULAR_FRACTION;
        checks.push(CheckResult::new(format!("regularity:{name}"), pass, 1.0 - reg.generic_fraction));
    }
    let all = checks.iter().all(CheckResult::passed);
    VerifyReport { system: sys.name().to_string(), samples, seed, condition: if all { "pass" } else { "fail" }, checks }
}

fn load_traj(sys: &dyn MechanicalSystem, atlas: &Atlas, path: &Path) -> Result<FlatTrajectory> {
    let traj: FlatTrajectory = read_json(path)?;
    traj.validate()?;
    if traj.group_kind != sys.group_kind() {
        return Err(Error::GroupMismatch { expected: format!("{:?}", sys.group_kind()), found: format!("{:?}", traj.group_kind) });
    }
    if traj.chart >= atlas.len() {
        return Err(Error::Model(format!("trajectory chart {} not in atlas", traj.chart)));
    }
    Ok(traj)
}

fn check_step(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: name.to_string(), value: v })
    }
}

/// Writes `t, chart, y…, s…, q…, qdot…, u…, residual` rows.
pub fn reconstruction_csv(sys: &dyn MechanicalSystem, atlas: &Atlas, traj: &FlatTrajectory, samples: &[ReconstructedSample]) -> Result<String> {
    let triv = &atlas.trivializations[traj.chart];
    let qs: Vec<_> = samples.iter().map(|r| &r.q).collect();
    let charts = track_charts(sys, atlas, traj.chart, &qs);
    let mut out = String::new();
    if let Some(r0) = samples.first() {
        let y0 = flat_output(sys, triv, &r0.q)?;
        let mut head = vec!["t".to_string(), "chart".to_string()];
        head.extend((0..y0.data.len()).map(|i| format!("y{i}")));
        head.extend((0..r0.shape.coords.len()).map(|i| format!("s{i}")));
        head.extend((0..r0.q.coords.len()).map(|i| format!("q{i}")));
        head.extend((0..r0.qdot.comps.len()).map(|i| format!("qdot{i}")));
        head.extend((0..r0.force_coeffs.len()).map(|i| format!("u{i}")));
        head.push("residual".into());
        out.push_str(&head.join(","));
        out.push('\n');
    }
    for (r, c) in samples.iter().zip(&charts) {
        let y = flat_output(sys, triv, &r.q)?;
        let mut row = vec![format!("{}", r.t), c.to_string()];
        let cols = y.data.iter().chain(r.shape.coords.iter()).chain(r.q.coords.iter()).chain(r.qdot.comps.iter()).chain(r.force_coeffs.iter());
        row.extend(cols.map(|v| format!("{v:e}")));
        row.push(format!("{:e}", r.residual));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn run_command(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Verify { model, samples, seed, out } => {
            let (sys, atlas) = load_model(&model)?;
            if samples == 0 {
                return Err(Error::InvalidParameter { name: "samples".into(), value: 0.0 });
            }
            let report = verify_model(sys.as_ref(), &atlas, samples, seed);
            write_json(&out, &report)?;
            for c in &report.checks {
                println!("{:<28} {} {:e}", c.name, c.condition, c.residual);
            }
            Ok(if report.condition == "pass" { Outcome::Ok } else { Outcome::Failed })
        }
        Command::Plan { model, waypoints, out } => {
            let (sys, _) = load_model(&model)?;
            let w: Waypoints = read_json(&waypoints)?;
            let traj = plan_waypoints(sys.group_kind(), &w)?;
            write_json(&out, &traj)?;
            Ok(Outcome::Ok)
        }
        Command::Reconstruct { model, traj, dt, out, plot } => {
            check_step("dt", dt)?;
            let (sys, atlas) = load_model(&model)?;
            let traj = load_traj(sys.as_ref(), &atlas, &traj)?;
            let triv = &atlas.trivializations[traj.chart];
            let samples = match reconstruct_series(sys.as_ref(), triv, &traj, dt, DT_FD) {
                Ok(s) => s,
                Err(e) => {
                    let t = first_failure(sys.as_ref(), &atlas, &traj, dt);
                    eprintln!("reconstruction failed near t = {t}: {e}");
                    return Ok(error_outcome(&e));
                }
            };
            let csv = reconstruction_csv(sys.as_ref(), &atlas, &traj, &samples)?;
            write_atomic(&out, csv.as_bytes())?;
            if let Some(dir) = plot {
                plot::reconstruction_plots(sys.as_ref(), triv, &samples, &dir)?;
            }
            Ok(Outcome::Ok)
        }
        Command::Simulate { model, traj, dt, tol, out, csv, plot } => {
            check_step("dt", dt)?;
            check_step("tol", tol)?;
            let (sys, atlas) = load_model(&model)?;
            let traj = load_traj(sys.as_ref(), &atlas, &traj)?;
            let rt = roundtrip_verify(sys.as_ref(), &atlas, &traj, dt, DT_FD)?;
            write_json(&out, &rt.report)?;
            if let Some(path) = csv {
                let mut buf = Vec::new();
                write_csv(&mut buf, &rt)?;
                write_atomic(&path, &buf)?;
            }
            if let Some(dir) = plot {
                plot::flat_error_plot(&rt, &dir)?;
            }
            println!("max_flat_error {:e}", rt.report.max_flat_error);
            Ok(if rt.report.max_flat_error < tol { Outcome::Ok } else { Outcome::Failed })
        }
    }
}

/// First sample time at which a point-wise reconstruction fails.
fn first_failure(sys: &dyn MechanicalSystem, atlas: &Atlas, traj: &FlatTrajectory, dt: f64) -> f64 {
    let triv = &atlas.trivializations[traj.chart];
    let n = ((traj.end() - traj.start()) / dt).round() as usize;
    let mut guess = None;
    for k in 0..=n {
        let t = (traj.start() + k as f64 * dt).min(traj.end());
        let r = traj.eval(t, 4).and_then(|y| crate::flatmap::reconstruct_full(sys, triv, t, &y, DT_FD, guess.as_ref()));
        match r {
            Ok(r) => guess = Some(r.shape),
            Err(_) => return t,
        }
    }
    traj.end()
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Outcome::Malformed.code() } else { 0 };
        }
    };
    init_thread_pool();
    match run_command(cli.command) {
        Ok(o) => o.code(),
        Err(e) => {
            eprintln!("error: {e}");
            error_outcome(&e).code()
        }
    }
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}
