//! Batch front-end: scenario config in, JSON/CSV reports out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod scenarios;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;

use commands::{is_error_metric, run_command, Outcome, COMMANDS};
use config::{Scenario, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown command '{0}'")]
    UnknownCommand(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    /// A failure whose partial results are still worth writing.
    #[error("solver failure: {0}")]
    SolverWithOutput(String, Outcome),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn from_core(e: qlkink::Error) -> Self {
        use qlkink::Error as E;
        match e {
            E::InvalidArgument(_)
            | E::Parse(_)
            | E::Diff(_)
            | E::DegenerateDomain(_)
            | E::InvalidMesh(_)
            | E::DiscontinuousCoefficient { .. }
            | E::NegativeCoefficient { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownCommand(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Solver(_) | CliError::SolverWithOutput(..) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qlkink",
    about = "Nonsmooth quasilinear optimal control: solvers and level-set diagnostics"
)]
pub struct Args {
    /// solve-state, solve-ocp, extract-levelset, verify-green, jump-functional,
    /// an-limits, curvature, check-soc, convergence-study
    pub command: String,
    /// Command to repeat over refinement levels (convergence-study only).
    pub study_command: Option<String>,
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub config: Option<PathBuf>,
    /// Name of a built-in scenario instead of a file.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of refinement levels; single commands run on the finest.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, body: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, body).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn write_outcome(dir: &Path, out: &Outcome) -> Result<(), CliError> {
    for (name, body) in &out.files {
        write_atomic(&dir.join(name), body.as_bytes())?;
    }
    Ok(())
}

pub fn load_scenario(args: &Args) -> Result<Scenario, CliError> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text)?
        }
        (None, Some(name)) => scenarios::builtin(name).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown scenario '{name}' (known: {})",
                scenarios::NAMES.join(", ")
            ))
        })?,
        (None, None) => return Err(CliError::Validation("one of --config or --scenario is required".into())),
    };
    if let Some(l) = args.levels {
        cfg.mesh.levels = l;
    }
    if let Some(s) = args.seed {
        cfg.params.seed = s;
    }
    cfg.build()
}

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub level: usize,
    pub h_max: f64,
    pub value: f64,
    pub observed_order: Option<f64>,
}

/// Runs `cmd` on levels 0..levels and tabulates its first metric.
pub fn convergence_study(sc: &Scenario, cmd: &str, out_dir: &Path) -> Result<(String, Vec<StudyRow>), CliError> {
    if !COMMANDS.contains(&cmd) {
        return Err(CliError::UnknownCommand(cmd.to_string()));
    }
    let mut rows: Vec<StudyRow> = Vec::new();
    let mut metric = String::new();
    for level in 0..sc.config.mesh.levels {
        let mesh = sc.mesh(level)?;
        let out = run_command(cmd, sc, &mesh, sc.config.params.seed)?;
        write_outcome(&out_dir.join(format!("level_{level}")), &out)?;
        let (name, value) = out
            .metrics
            .first()
            .cloned()
            .unwrap_or_else(|| ("value".into(), f64::NAN));
        metric = name;
        let observed_order = rows.last().filter(|_| is_error_metric(&metric)).and_then(|prev| {
            let r = (prev.value / value).ln() / (prev.h_max / mesh.h_max()).ln();
            r.is_finite().then_some(r)
        });
        rows.push(StudyRow {
            level,
            h_max: mesh.h_max(),
            value,
            observed_order,
        });
    }
    let mut csv = format!("level,h_max,{metric},observed_order\n");
    for r in &rows {
        let ord = r.observed_order.map(|o| format!("{o:.6}")).unwrap_or_default();
        csv.push_str(&format!("{},{:e},{:e},{}\n", r.level, r.h_max, r.value, ord));
    }
    write_atomic(&out_dir.join(format!("convergence_{cmd}.csv")), csv.as_bytes())?;
    let summary = json!({
        "command": cmd,
        "metric": metric,
        "rows": rows.iter().map(|r| json!({
            "level": r.level, "h_max": r.h_max, "value": r.value, "observed_order": r.observed_order,
        })).collect::<Vec<_>>(),
    });
    write_atomic(
        &out_dir.join(format!("convergence_{cmd}.json")),
        (serde_json::to_string_pretty(&summary).expect("json") + "\n").as_bytes(),
    )?;
    Ok((metric, rows))
}

pub fn execute(args: &Args) -> Result<(), CliError> {
    let is_study = args.command == "convergence-study";
    if !is_study && !COMMANDS.contains(&args.command.as_str()) {
        return Err(CliError::UnknownCommand(args.command.clone()));
    }
    let sc = load_scenario(args)?;
    if is_study {
        let cmd = args
            .study_command
            .as_deref()
            .ok_or_else(|| CliError::Validation("convergence-study needs a command to repeat".into()))?;
        convergence_study(&sc, cmd, &args.out)?;
        return Ok(());
    }
    let level = args.levels.map_or(0, |l| l.saturating_sub(1));
    let mesh = sc.mesh(level)?;
    match run_command(&args.command, &sc, &mesh, sc.config.params.seed) {
        Ok(out) => write_outcome(&args.out, &out),
        Err(CliError::SolverWithOutput(msg, out)) => {
            write_outcome(&args.out, &out)?;
            Err(CliError::Solver(msg))
        }
        Err(e) => Err(e),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qlkink: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::UnknownCommand("x".into()).exit_code(), 1);
        assert_eq!(CliError::Validation("x".into()).exit_code(), 2);
        assert_eq!(CliError::Solver("x".into()).exit_code(), 3);
        assert_eq!(CliError::Io("x".into()).exit_code(), 3);
        let parse = qlkink::expr::parse_expr("(").unwrap_err();
        assert_eq!(CliError::from_core(parse.into()).exit_code(), 2);
        let solve = qlkink::Error::LinearSolve {
            iterations: 3,
            residual: 1.0,
        };
        assert_eq!(CliError::from_core(solve).exit_code(), 3);
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn study_orders_for_error_metrics_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = scenarios::builtin("smooth-manufactured").unwrap();
        cfg.mesh.levels = 3;
        let sc = cfg.build().unwrap();
        let (metric, rows) = convergence_study(&sc, "solve-state", dir.path()).unwrap();
        assert_eq!(metric, "l2_error");
        assert!(rows[0].observed_order.is_none());
        assert!(rows[1..].iter().all(|r| r.observed_order.unwrap() > 1.8));
        let strip = scenarios::builtin("strip-geometry").unwrap().build().unwrap();
        let (metric, rows) = convergence_study(&strip, "extract-levelset", dir.path()).unwrap();
        assert_eq!(metric, "total_length");
        assert!(rows.iter().all(|r| r.observed_order.is_none()));
        assert!(matches!(
            convergence_study(&sc, "nope", dir.path()),
            Err(CliError::UnknownCommand(_))
        ));
    }

    #[test]
    fn bad_arguments_exit_with_validation_code() {
        assert_eq!(run(["qlkink", "solve-state"]), 2);
        assert_eq!(
            run([
                "qlkink",
                "solve-state",
                "--scenario",
                "a",
                "--config",
                "b",
                "--out",
                "o"
            ]),
            2
        );
    }
}
