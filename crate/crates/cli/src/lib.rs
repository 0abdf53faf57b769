//! Subcommands of the `cnls` binary.
//!
//! Exit codes: 0 success (or `Completed`), 1 failed check or run, 2 bad
//! configuration, 3 `BlowUp`, 4 `Unresolved`.

pub mod config;

use cnls_core::evolve::Verdict;
use cnls_core::grid::snapshot::{sidecar_path, write_sidecar, write_snapshot, Sidecar};
use cnls_core::grid::RadialState;
use cnls_core::groundstate::{compute_copt, solve_ground_state, thresholds, CoptEstimate, GroundState};
use cnls_core::harness::{
    evolve_prepared, initial_state, prepare_initial_data, run_dichotomy, sweep_amplitude, write_timeseries_csv,
    CheckOptions, HarnessError, InitialData, Regime, RegimeReport, ScenarioSet, SweepTable,
};
use cnls_core::model::{check_hypotheses, HypothesisReport, PotentialF};
use config::{ConfigError, RunConfig};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_UNRESOLVED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    GroundState,
    Evolve,
    Dichotomy,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::GroundState => "ground-state",
            Command::Evolve => "evolve",
            Command::Dichotomy => "dichotomy",
            Command::Sweep => "sweep",
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub quiet: bool,
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing output: {0}")]
    Output(String),
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Output(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Output(e.to_string())
    }
}

impl From<cnls_core::grid::snapshot::SnapshotError> for RunError {
    fn from(e: cnls_core::grid::snapshot::SnapshotError) -> Self {
        RunError::Output(e.to_string())
    }
}

/// Wall-clock data kept apart from the reproducible payload.
#[derive(Debug, Serialize)]
struct Metadata {
    timestamp_unix: u64,
    version: &'static str,
    out_dir: String,
    workers: Option<usize>,
}

/// Every JSON output: the resolved config, the potential text and the result.
#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'static str,
    config: &'a RunConfig,
    potential: Option<&'a str>,
    result: T,
    metadata: Metadata,
}

struct Ctx {
    command: Command,
    config: RunConfig,
    out: PathBuf,
    workers: Option<usize>,
    quiet: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", self.command.name(), msg.as_ref());
        }
    }

    fn write_json<T: Serialize>(&self, file: &str, result: T) -> Result<(), RunError> {
        let env = Envelope {
            command: self.command.name(),
            config: &self.config,
            potential: self.config.potential.as_deref(),
            result,
            metadata: Metadata {
                timestamp_unix: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
                version: env!("CARGO_PKG_VERSION"),
                out_dir: self.out.display().to_string(),
                workers: self.workers,
            },
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        fs::write(self.out.join(file), text)?;
        Ok(())
    }

    fn check_options(&self) -> CheckOptions {
        CheckOptions {
            samples: self.config.check.samples,
            seed: self.config.seed,
            tol: self.config.check.tol,
        }
    }
}

/// Loads the config, applies flags and runs one subcommand; returns the exit code.
pub fn run(command: Command, config_path: &Path, flags: &Flags) -> i32 {
    let mut config = match RunConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    let out = flags
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    // the output location lives in the metadata so identical runs into
    // different directories produce identical payloads
    config.output = None;
    let ctx = Ctx {
        command,
        config,
        out,
        workers: flags.workers,
        quiet: flags.quiet,
    };
    if let Err(e) = fs::create_dir_all(&ctx.out) {
        eprintln!("error: creating {}: {e}", ctx.out.display());
        return EXIT_FAILED;
    }
    let res = match command {
        Command::Check => cmd_check(&ctx),
        Command::GroundState => cmd_ground_state(&ctx),
        Command::Evolve => cmd_evolve(&ctx),
        Command::Dichotomy => cmd_dichotomy(&ctx),
        Command::Sweep => cmd_sweep(&ctx),
    };
    match res {
        Ok(code) => code,
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILED
        }
    }
}

fn parse_potential(config: &RunConfig) -> Result<PotentialF, RunError> {
    let l = config.params()?.l;
    PotentialF::parse(config.potential()?, l).map_err(|e| ConfigError::Invalid(format!("potential: {e}")).into())
}

fn invalid(e: impl std::fmt::Display) -> RunError {
    ConfigError::Invalid(e.to_string()).into()
}

#[derive(Serialize)]
struct CheckResult<'a> {
    required: Vec<&'a str>,
    passed: bool,
    report: &'a HypothesisReport,
}

fn hypothesis_report(ctx: &Ctx) -> Result<HypothesisReport, RunError> {
    let f = parse_potential(&ctx.config)?;
    let c = &ctx.config.check;
    if c.samples == 0 || !(c.tol > 0.0) {
        return Err(invalid("check.samples must be >= 1 and check.tol > 0"));
    }
    Ok(check_hypotheses(&f, ctx.config.params()?, c.samples, ctx.config.seed, c.tol))
}

fn cmd_check(ctx: &Ctx) -> Result<i32, RunError> {
    let report = hypothesis_report(ctx)?;
    let names: Vec<&str> = report.entries().iter().map(|(n, _)| *n).collect();
    let required: Vec<&str> = if ctx.config.check.require.is_empty() {
        names.clone()
    } else {
        let mut r = Vec::new();
        for n in &ctx.config.check.require {
            let known = names.iter().find(|k| k.eq_ignore_ascii_case(n)).ok_or_else(|| invalid(format!("unknown check `{n}`")))?;
            r.push(*known);
        }
        r
    };
    let passed = report.all_pass(&required);
    for (n, s) in report.entries() {
        if required.contains(&n) {
            ctx.log(format!("{n}: {}", if s.passed() { "pass" } else { "FAIL" }));
        }
    }
    ctx.write_json(
        "check.json",
        CheckResult {
            required,
            passed,
            report: &report,
        },
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct GroundStateSummary {
    converged: bool,
    kpsi: f64,
    ppsi: f64,
    ecrit_psi: f64,
    jpsi: f64,
    lambda: f64,
    residual: f64,
    gradient_residual: f64,
    iterations: usize,
    restarts: usize,
    pohozaev_ratio: f64,
    pohozaev_target: f64,
    pohozaev_ok: bool,
    thresholds: Option<(f64, f64)>,
    copt: Option<CoptEstimate>,
    snapshot: String,
}

fn cmd_ground_state(ctx: &Ctx) -> Result<i32, RunError> {
    let report = hypothesis_report(ctx)?;
    let params = ctx.config.params()?.without_beta();
    if !report.ground_state_ready() {
        ctx.log("hypotheses required by the solver fail; not solving");
        ctx.write_json("ground_state.json", serde_json::json!({ "error": "hypotheses", "hypotheses": report }))?;
        return Ok(EXIT_FAILED);
    }
    let f = parse_potential(&ctx.config)?;
    let grid = cnls_core::grid::RadialGrid::from_spec(params.d, ctx.config.grid).map_err(invalid)?;
    let nl = cnls_core::model::Nonlinearity::new(f);
    let gs = match solve_ground_state(&grid, &params, &nl, &ctx.config.ground_state.solver) {
        Ok(gs) => gs,
        Err(e) => {
            ctx.log(format!("solver failed: {e}"));
            ctx.write_json("ground_state.json", serde_json::json!({ "error": e.to_string() }))?;
            return Ok(EXIT_FAILED);
        }
    };
    let d = params.d as f64;
    let target = 2.0 * d / (d - 2.0);
    let ratio = gs.kpsi / gs.ppsi;
    let pohozaev_ok = ((ratio - target) / target).abs() <= ctx.config.ground_state.pohozaev_tol;
    let snap = ctx.out.join("psi.bin");
    write_snapshot(&snap, &grid, &gs.psi)?;
    write_sidecar(
        &sidecar_path(&snap),
        &Sidecar {
            params: params.clone(),
            potential: ctx.config.potential()?.to_string(),
            grid: ctx.config.grid,
            t: 0.0,
        },
    )?;
    ctx.log(format!(
        "K = {:.6e}, P = {:.6e}, K/P = {ratio:.6} (target {target:.6}), residual {:.3e}",
        gs.kpsi, gs.ppsi, gs.residual
    ));
    ctx.write_json(
        "ground_state.json",
        GroundStateSummary {
            converged: gs.converged,
            kpsi: gs.kpsi,
            ppsi: gs.ppsi,
            ecrit_psi: gs.ecrit_psi,
            jpsi: gs.jpsi,
            lambda: gs.lambda,
            residual: gs.residual,
            gradient_residual: gs.gradient_residual,
            iterations: gs.iterations,
            restarts: gs.restarts,
            pohozaev_ratio: ratio,
            pohozaev_target: target,
            pohozaev_ok,
            thresholds: thresholds(&gs, params.d).ok(),
            copt: compute_copt(&gs, params.d).ok(),
            snapshot: "psi.bin".into(),
        },
    )?;
    Ok(if gs.converged && pohozaev_ok { EXIT_OK } else { EXIT_FAILED })
}

fn verdict_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Completed { .. } => EXIT_OK,
        Verdict::BlowUp { .. } => EXIT_BLOWUP,
        Verdict::Unresolved { .. } => EXIT_UNRESOLVED,
    }
}

fn solve_for(ctx: &Ctx, scenario: &cnls_core::harness::Scenario) -> Result<GroundState, String> {
    let sys = scenario.system().map_err(|e| e.to_string())?;
    solve_ground_state(&sys.grid, &sys.params.without_beta(), &sys.nl, &ctx.config.ground_state.solver)
        .map_err(|e| e.to_string())
}

fn cmd_evolve(ctx: &Ctx) -> Result<i32, RunError> {
    let scenario = ctx.config.evolve_scenario()?;
    let system = scenario.system().map_err(invalid)?;
    let needs_gs = matches!(scenario.initial, InitialData::ScaledGroundState { .. }) || scenario.expected != Regime::Unspecified;
    let (state, gs, prelude) = if needs_gs {
        let gs = match solve_for(ctx, &scenario) {
            Ok(gs) => gs,
            Err(e) => {
                ctx.log(format!("ground state: {e}"));
                ctx.write_json("evolve.json", serde_json::json!({ "error": e }))?;
                return Ok(EXIT_FAILED);
            }
        };
        match prepare_initial_data(&scenario, &gs, &system, &ctx.check_options()) {
            Ok(p) => (p.state, Some(gs), Some(p.prelude)),
            Err(e @ HarnessError::HypothesisMismatch { .. }) => {
                ctx.log(e.to_string());
                ctx.write_json("evolve.json", serde_json::json!({ "error": e.to_string() }))?;
                return Ok(EXIT_FAILED);
            }
            Err(e) => return Err(invalid(e)),
        }
    } else {
        (initial_state(&scenario, &system).map_err(invalid)?, None, None)
    };
    let (report, traj) = match evolve_prepared(0, &scenario, &system, &state, gs.as_ref(), prelude) {
        Ok(x) => x,
        Err(e) => {
            ctx.log(format!("evolution failed: {e}"));
            ctx.write_json("evolve.json", serde_json::json!({ "error": e.to_string() }))?;
            return Ok(EXIT_FAILED);
        }
    };
    let file = fs::File::create(ctx.out.join("evolve.csv"))?;
    write_timeseries_csv(std::io::BufWriter::new(file), &[(scenario.name.as_str(), &traj.rows)])?;
    let snaps = write_snapshots(ctx, &system, &traj.snapshots, &scenario.potential)?;
    let verdict = report.verdict.clone().expect("evolved runs carry a verdict");
    ctx.log(format!("verdict {} after {} steps", verdict.name(), traj.steps_accepted));
    for w in &report.warnings {
        ctx.log(format!("warning: {w}"));
    }
    #[derive(Serialize)]
    struct EvolveResult {
        report: RegimeReport,
        snapshots: Vec<String>,
    }
    ctx.write_json("evolve.json", EvolveResult { report, snapshots: snaps })?;
    Ok(verdict_code(&verdict))
}

fn write_snapshots(
    ctx: &Ctx,
    system: &cnls_core::harness::System,
    snaps: &[RadialState],
    potential: &str,
) -> Result<Vec<String>, RunError> {
    let mut names = Vec::new();
    if snaps.is_empty() {
        return Ok(names);
    }
    let dir = ctx.out.join("snapshots");
    fs::create_dir_all(&dir)?;
    for (i, s) in snaps.iter().enumerate() {
        let name = format!("snapshots/snap_{i:04}.bin");
        let path = ctx.out.join(&name);
        write_snapshot(&path, &system.grid, s)?;
        write_sidecar(
            &sidecar_path(&path),
            &Sidecar {
                params: system.params.clone(),
                potential: potential.to_string(),
                grid: system.grid.spec(),
                t: s.t,
            },
        )?;
        names.push(name);
    }
    Ok(names)
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn cmd_dichotomy(ctx: &Ctx) -> Result<i32, RunError> {
    let scenarios = ctx.config.dichotomy.clone().unwrap_or_default().scenarios;
    for s in &scenarios {
        s.system().map_err(invalid)?;
    }
    let set = ScenarioSet {
        ground_state: ctx.config.ground_state.solver.clone(),
        check: ctx.check_options(),
        scenarios,
    };
    let outcomes = run_dichotomy(&set, ctx.workers).map_err(|e| RunError::Output(e.to_string()))?;
    let mut all_match = true;
    for o in &outcomes {
        let r = &o.report;
        all_match &= r.matches_expected;
        ctx.log(format!(
            "{}: expected {:?}, verdict {}, matches {}{}",
            r.name,
            r.expected,
            r.verdict.as_ref().map_or("none", |v| v.name()),
            r.matches_expected,
            r.error.as_ref().map_or(String::new(), |e| format!(" ({e})"))
        ));
        ctx.write_json(&format!("scenario_{:03}_{}.json", r.index, file_stem(&r.name)), r)?;
    }
    let reports: Vec<&RegimeReport> = outcomes.iter().map(|o| &o.report).collect();
    ctx.write_json("dichotomy.json", serde_json::json!({ "all_match": all_match, "reports": reports }))?;
    let series: Vec<(&str, &[cnls_core::evolve::TrajectoryRow])> =
        outcomes.iter().map(|o| (o.report.name.as_str(), o.rows.as_slice())).collect();
    let file = fs::File::create(ctx.out.join("dichotomy.csv"))?;
    write_timeseries_csv(std::io::BufWriter::new(file), &series)?;
    Ok(if all_match { EXIT_OK } else { EXIT_FAILED })
}

fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["a", "verdict", "max_k", "min_tau", "scatter_hypotheses", "blowup_hypotheses", "error"])?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    let optb = |x: Option<bool>| x.map_or(String::new(), |v| v.to_string());
    for r in &table.rows {
        w.write_record([
            r.a.to_string(),
            r.verdict.clone().unwrap_or_default(),
            opt(r.max_k),
            opt(r.min_tau),
            optb(r.scatter_hypotheses),
            optb(r.blowup_hypotheses),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(ctx: &Ctx) -> Result<i32, RunError> {
    let sweep = ctx.config.sweep.clone().ok_or(ConfigError::Missing("sweep"))?;
    sweep.template.system().map_err(invalid)?;
    if !(sweep.a_min > 0.0 && sweep.a_max > sweep.a_min) || sweep.steps == 0 {
        return Err(invalid("sweep needs 0 < a_min < a_max and steps >= 1"));
    }
    let gs = match solve_for(ctx, &sweep.template) {
        Ok(gs) => gs,
        Err(e) => {
            ctx.log(format!("ground state: {e}"));
            ctx.write_json("sweep.json", serde_json::json!({ "error": e }))?;
            return Ok(EXIT_FAILED);
        }
    };
    let table = sweep_amplitude(
        sweep.a_min,
        sweep.a_max,
        sweep.steps,
        &sweep.template,
        &gs,
        &ctx.check_options(),
        ctx.workers,
    )
    .map_err(invalid)?;
    for r in &table.rows {
        ctx.log(format!("a = {}: {}", r.a, r.verdict.as_deref().unwrap_or("error")));
    }
    write_sweep_csv(&ctx.out.join("sweep.csv"), &table)?;
    ctx.write_json("sweep.json", &table)?;
    Ok(EXIT_OK)
}
