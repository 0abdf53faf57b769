//! Scenario construction and dichotomy runs.
//!
//! A scenario names initial data (a scaled ground state, a Gaussian or a
//! snapshot file), the system, the grid and the evolution controls. Preparing
//! a scenario measures the initial functionals and evaluates the threshold
//! hypotheses from those numbers alone; running it evolves the data and
//! classifies the outcome.

use crate::diagnostics::{
    consistency_report, scattering_indicators, ConsistencyReport, DiagnosticsError, ScatteringIndicators,
    WeightSpec,
};
use crate::evolve::{
    evolve_until, BlowupRule, EvolveError, EvolveOptions, Evolver, StepControls, Trajectory, TrajectoryRow,
    Verdict,
};
use crate::grid::snapshot::{read_snapshot, SnapshotError};
use crate::grid::{functionals, FunctionalRecord, GridError, GridSpec, RadialGrid, RadialState, StateError};
use crate::groundstate::{solve_ground_state, GroundState, GroundStateError, SolveOptions};
use crate::model::{check_mass_resonance, Nonlinearity, ParamsError, ParseError, PotentialF, SystemParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{regime:?} hypotheses fail on the measured data: {detail}")]
    HypothesisMismatch {
        regime: Regime,
        detail: String,
        measured: Box<Measured>,
    },
    #[error("scenario {0}: {1}")]
    Invalid(String, String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("potential: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("ground state: {0}")]
    GroundState(#[from] GroundStateError),
    #[error("evolution: {0}")]
    Evolve(#[from] EvolveError),
    #[error("diagnostics: {0}")]
    Diagnostics(#[from] DiagnosticsError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Regime {
    Scatter,
    BlowUp,
    #[default]
    Unspecified,
}

/// Radial cutoff `m(r) = 1 - S((r - R)/R)` with `S` the quintic smoothstep, so
/// `m = 1` for `r <= R` and `m = 0` for `r >= 2R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSpec {
    /// Defaults to `r_max / 4`.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Grow the radius by 25% until the requested regime's hypotheses hold.
    #[serde(default = "yes")]
    pub tune: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum InitialData {
    ScaledGroundState {
        a: f64,
        #[serde(default)]
        mollifier: Option<MollifierSpec>,
    },
    /// `amplitude * exp(-(r/width)^2)` in every component.
    Gaussian { amplitude: f64, width: f64 },
    /// Little-endian snapshot written by this crate.
    FromFile { path: PathBuf },
}

fn default_t_final() -> f64 {
    20.0
}

fn default_record_interval() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub initial: InitialData,
    pub params: SystemParams,
    /// Potential source text.
    pub potential: String,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_record_interval")]
    pub record_interval: f64,
    #[serde(default)]
    pub controls: StepControls,
    #[serde(default)]
    pub blowup: BlowupRule,
    #[serde(default)]
    pub weight: WeightSpec,
    #[serde(default)]
    pub expected: Regime,
    /// Times at which full field snapshots are kept.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times: Vec<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Invalid(self.name.clone(), m));
        match &self.initial {
            InitialData::ScaledGroundState { a, mollifier } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return bad(format!("amplitude factor a = {a} must be positive"));
                }
                if let Some(MollifierSpec { radius: Some(r), .. }) = mollifier {
                    if !(*r > 0.0 && 2.0 * r <= self.grid.r_max) {
                        return bad(format!("mollifier radius {r} outside (0, r_max/2]"));
                    }
                }
            }
            InitialData::Gaussian { amplitude, width } => {
                if !(*width > 0.0 && width.is_finite() && amplitude.is_finite()) {
                    return bad(format!("gaussian width {width} / amplitude {amplitude}"));
                }
            }
            InitialData::FromFile { .. } => {}
        }
        if !(self.t_final > 0.0 && self.record_interval > 0.0 && self.record_interval <= self.t_final) {
            return bad(format!(
                "horizon {} and record interval {} must satisfy 0 < interval <= T",
                self.t_final, self.record_interval
            ));
        }
        self.params.validate()?;
        self.controls.validate()?;
        Ok(())
    }

    /// The system this scenario runs: parameters, potential and grid.
    pub fn system(&self) -> Result<System, HarnessError> {
        self.validate()?;
        let potential = PotentialF::parse(&self.potential, self.params.l)?;
        let grid = RadialGrid::from_spec(self.params.d, self.grid)?;
        Ok(System {
            params: self.params.clone(),
            nl: Nonlinearity::new(potential),
            grid,
        })
    }

    /// Identifies scenarios that share a ground state.
    pub fn ground_state_key(&self) -> String {
        serde_json::to_string(&(&self.params.without_beta(), &self.potential, &self.grid))
            .expect("plain data serializes")
    }
}

#[derive(Debug, Clone)]
pub struct System {
    pub params: SystemParams,
    pub nl: Nonlinearity,
    pub grid: RadialGrid,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub M: f64,
    pub E: f64,
    pub Ecrit: f64,
    pub K: f64,
    pub P: f64,
    pub tau: f64,
    pub kpsi: f64,
    pub ecrit_psi: f64,
}

impl Measured {
    fn new(rec: &FunctionalRecord, kpsi: f64, ecrit_psi: f64) -> Self {
        Measured {
            M: rec.M,
            E: rec.E,
            Ecrit: rec.Ecrit,
            K: rec.K,
            P: rec.P,
            tau: rec.tau,
            kpsi,
            ecrit_psi,
        }
    }
}

/// Threshold hypotheses evaluated on measured numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypotheses {
    /// Beta-free energy below the ground state's.
    pub ecrit_below: bool,
    /// Full energy below the ground state's beta-free energy.
    pub energy_below: bool,
    pub kinetic_below: bool,
    pub kinetic_above: bool,
    pub mass_resonance: bool,
    /// Sub-threshold data for the resonant system.
    pub scatter: bool,
    /// Super-threshold data.
    pub blowup: bool,
}

pub fn evaluate_hypotheses(m: &Measured, mass_resonance: bool) -> Hypotheses {
    let ecrit_below = m.Ecrit < m.ecrit_psi;
    let energy_below = m.E < m.ecrit_psi;
    let kinetic_below = m.K < m.kpsi;
    let kinetic_above = m.K > m.kpsi;
    Hypotheses {
        ecrit_below,
        energy_below,
        kinetic_below,
        kinetic_above,
        mass_resonance,
        scatter: ecrit_below && kinetic_below && mass_resonance,
        blowup: energy_below && kinetic_above,
    }
}

fn hypotheses_for(h: &Hypotheses, regime: Regime) -> bool {
    match regime {
        Regime::Scatter => h.scatter,
        Regime::BlowUp => h.blowup,
        Regime::Unspecified => true,
    }
}

fn mismatch_detail(regime: Regime, m: &Measured, h: &Hypotheses) -> String {
    match regime {
        Regime::Scatter => format!(
            "need Ecrit(u0) = {:.6e} < Ecrit(psi) = {:.6e}, K(u0) = {:.6e} < K(psi) = {:.6e}, mass resonance = {}",
            m.Ecrit, m.ecrit_psi, m.K, m.kpsi, h.mass_resonance
        ),
        Regime::BlowUp => format!(
            "need E(u0) = {:.6e} < Ecrit(psi) = {:.6e}, K(u0) = {:.6e} > K(psi) = {:.6e}",
            m.E, m.ecrit_psi, m.K, m.kpsi
        ),
        Regime::Unspecified => String::new(),
    }
}

/// Everything known about a scenario before it is evolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prelude {
    pub measured: Measured,
    pub hypotheses: Hypotheses,
    /// Mollifier radius actually used.
    pub mollifier_radius: Option<f64>,
    pub mass_resonance_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub state: RadialState,
    pub prelude: Prelude,
}

/// Samples and seed of the mass-resonance check run while preparing data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            samples: 1000,
            seed: 0,
            tol: 1e-10,
        }
    }
}

fn smoothstep5(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

pub fn mollify(grid: &RadialGrid, state: &RadialState, radius: f64) -> RadialState {
    let m: Vec<f64> = grid.r.iter().map(|r| 1.0 - smoothstep5((r - radius) / radius)).collect();
    RadialState {
        t: state.t,
        u: state
            .u
            .iter()
            .map(|c| c.iter().zip(&m).map(|(z, mj)| z * mj).collect())
            .collect(),
    }
}

fn gaussian_state(grid: &RadialGrid, l: usize, amplitude: f64, width: f64) -> RadialState {
    let g: Vec<f64> = grid.r.iter().map(|r| amplitude * (-(r / width).powi(2)).exp()).collect();
    RadialState::from_real(0.0, &vec![g; l])
}

/// Initial data that does not depend on a ground state.
pub fn initial_state(scenario: &Scenario, system: &System) -> Result<RadialState, HarnessError> {
    let System { params, grid, .. } = system;
    match &scenario.initial {
        InitialData::ScaledGroundState { .. } => Err(HarnessError::Invalid(
            scenario.name.clone(),
            "scaled ground-state data needs a ground state".into(),
        )),
        InitialData::Gaussian { amplitude, width } => Ok(gaussian_state(grid, params.l, *amplitude, *width)),
        InitialData::FromFile { path } => {
            let (header, s) = read_snapshot(path)?;
            if header.d != params.d || header.l != params.l || header.n != grid.n || header.r_max != grid.r_max {
                return Err(HarnessError::Invalid(
                    scenario.name.clone(),
                    format!(
                        "snapshot (d={}, l={}, N={}, r_max={}) does not match the scenario",
                        header.d, header.l, header.n, header.r_max
                    ),
                ));
            }
            Ok(RadialState { t: 0.0, u: s.u })
        }
    }
}

/// Builds `u0` and measures it against the ground state `gs`.
///
/// Hypothesis booleans come only from the measured functionals. When the
/// scenario expects a regime whose hypotheses fail, returns
/// `HypothesisMismatch` with the numbers.
pub fn prepare_initial_data(
    scenario: &Scenario,
    gs: &GroundState,
    system: &System,
    check: &CheckOptions,
) -> Result<Prepared, HarnessError> {
    let System { params, nl, grid } = system;
    if gs.psi.n() != grid.n || gs.psi.l() != params.l {
        return Err(HarnessError::Invalid(
            scenario.name.clone(),
            format!("ground state has shape {}x{}, grid {}x{}", gs.psi.l(), gs.psi.n(), params.l, grid.n),
        ));
    }
    let mr = check_mass_resonance(&nl.potential, params, check.samples, check.seed, check.tol);
    let measure = |s: &RadialState| -> Result<(Measured, Hypotheses), HarnessError> {
        let rec = functionals(grid, params, nl, s)?;
        let m = Measured::new(&rec, gs.kpsi, gs.ecrit_psi);
        Ok((m, evaluate_hypotheses(&m, mr.holds)))
    };
    let regime = scenario.expected;
    let (state, radius) = match &scenario.initial {
        InitialData::ScaledGroundState { a, mollifier } => {
            if !gs.converged {
                return Err(HarnessError::Invalid(scenario.name.clone(), "ground state did not converge".into()));
            }
            let base = gs.psi.scaled(*a);
            match mollifier {
                None => (base, None),
                Some(spec) => {
                    let mut r = spec.radius.unwrap_or(grid.r_max / 4.0);
                    loop {
                        let s = mollify(grid, &base, r);
                        let (_, h) = measure(&s)?;
                        let next = r * 1.25;
                        if hypotheses_for(&h, regime) || !spec.tune || 2.0 * next > grid.r_max {
                            break (s, Some(r));
                        }
                        r = next;
                    }
                }
            }
        }
        _ => (initial_state(scenario, system)?, None),
    };
    let (measured, hypotheses) = measure(&state)?;
    if !hypotheses_for(&hypotheses, regime) {
        return Err(HarnessError::HypothesisMismatch {
            regime,
            detail: mismatch_detail(regime, &measured, &hypotheses),
            measured: Box::new(measured),
        });
    }
    Ok(Prepared {
        state,
        prelude: Prelude {
            measured,
            hypotheses,
            mollifier_radius: radius,
            mass_resonance_residual: mr.max_residual,
        },
    })
}

/// Summary of a trajectory used for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub k0: f64,
    pub max_k: f64,
    pub k_growth: f64,
    /// First record with `K >= 2 K(u0)`.
    pub t_k_doubling: Option<f64>,
    pub min_tau: f64,
    pub max_tau: f64,
    pub tau_negative_throughout: bool,
    pub r_final: f64,
    /// `R` is negative and non-increasing over the second half of the records.
    pub r_negative_decreasing: bool,
    /// Range of `K/Ecrit` over the run, with the comparability bracket
    /// `[2/(d(1+delta)), (d/2)(1+delta)]`, `delta = 1 - K(u0)/K(psi)`.
    pub k_over_ecrit: Option<(f64, f64)>,
    pub trapping_bracket: Option<(f64, f64)>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub records: usize,
}

fn summarize(rows: &[TrajectoryRow], d: usize, kpsi: f64, scatter: bool, accepted: usize, rejected: usize) -> RunSummary {
    let k0 = rows.first().map_or(0.0, |r| r.record.K);
    let max_k = rows.iter().map(|r| r.record.K).fold(0.0, f64::max);
    let min_tau = rows.iter().map(|r| r.record.tau).fold(f64::INFINITY, f64::min);
    let max_tau = rows.iter().map(|r| r.record.tau).fold(f64::NEG_INFINITY, f64::max);
    let half = &rows[rows.len() / 2..];
    let r_negative_decreasing =
        half.iter().all(|r| r.R < 0.0) && half.windows(2).all(|w| w[1].R <= w[0].R);
    let (k_over_ecrit, trapping_bracket) = if scatter {
        let ratios: Vec<f64> = rows.iter().filter(|r| r.record.Ecrit != 0.0).map(|r| r.record.K / r.record.Ecrit).collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let delta = 1.0 - k0 / kpsi;
        let dd = d as f64;
        (
            (!ratios.is_empty()).then_some((lo, hi)),
            Some((2.0 / (dd * (1.0 + delta)), dd / 2.0 * (1.0 + delta))),
        )
    } else {
        (None, None)
    };
    RunSummary {
        k0,
        max_k,
        k_growth: if k0 > 0.0 { max_k / k0 } else { 0.0 },
        t_k_doubling: rows.iter().find(|r| k0 > 0.0 && r.record.K >= 2.0 * k0).map(|r| r.t),
        min_tau,
        max_tau,
        tau_negative_throughout: rows.iter().all(|r| r.record.tau < 0.0),
        r_final: rows.last().map_or(0.0, |r| r.R),
        r_negative_decreasing,
        k_over_ecrit,
        trapping_bracket,
        steps_accepted: accepted,
        steps_rejected: rejected,
        records: rows.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub index: usize,
    pub name: String,
    pub expected: Regime,
    /// Absent when preparation failed.
    pub prelude: Option<Prelude>,
    pub verdict: Option<Verdict>,
    pub summary: Option<RunSummary>,
    pub indicators: Option<ScatteringIndicators>,
    pub consistency: Option<ConsistencyReport>,
    /// Hypotheses of a regime hold and the outcome is the predicted one.
    pub confirms: bool,
    /// Outcome equals the expected regime (trivially true for `Unspecified`).
    pub matches_expected: bool,
    pub error: Option<String>,
    pub warnings: Vec<String>,
}

impl RegimeReport {
    fn failed(index: usize, scenario: &Scenario, err: &HarnessError) -> Self {
        RegimeReport {
            index,
            name: scenario.name.clone(),
            expected: scenario.expected,
            prelude: None,
            verdict: None,
            summary: None,
            indicators: None,
            consistency: None,
            confirms: false,
            matches_expected: false,
            error: Some(err.to_string()),
            warnings: Vec::new(),
        }
    }
}

/// A report together with its time series.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: RegimeReport,
    pub rows: Vec<TrajectoryRow>,
}

/// Prepares, evolves and classifies one scenario against a solved ground state.
pub fn run_scenario(index: usize, scenario: &Scenario, gs: &GroundState, check: &CheckOptions) -> ScenarioOutcome {
    match try_run(index, scenario, gs, check) {
        Ok(o) => o,
        Err(e) => ScenarioOutcome {
            report: RegimeReport::failed(index, scenario, &e),
            rows: Vec::new(),
        },
    }
}

fn try_run(index: usize, scenario: &Scenario, gs: &GroundState, check: &CheckOptions) -> Result<ScenarioOutcome, HarnessError> {
    let system = scenario.system()?;
    let prepared = prepare_initial_data(scenario, gs, &system, check)?;
    let (report, traj) = evolve_prepared(index, scenario, &system, &prepared.state, Some(gs), Some(prepared.prelude))?;
    Ok(ScenarioOutcome {
        report,
        rows: traj.rows,
    })
}

/// Evolves prepared data and classifies the outcome.
///
/// Without a ground state the trapping margin and threshold comparisons are
/// `NaN` and nothing is confirmed.
pub fn evolve_prepared(
    index: usize,
    scenario: &Scenario,
    system: &System,
    state: &RadialState,
    gs: Option<&GroundState>,
    prelude: Option<Prelude>,
) -> Result<(RegimeReport, Trajectory), HarnessError> {
    let ev = Evolver::new(&system.grid, &system.params, &system.nl);
    let mut opts = EvolveOptions::new(&system.grid, scenario.t_final, scenario.record_interval);
    opts.blowup = scenario.blowup;
    opts.weight = scenario.weight.build(&system.grid)?;
    opts.snapshot_times = scenario.snapshot_times.clone();
    let traj = evolve_until(&ev, state, &scenario.controls, &opts, &mut ())?;
    let kpsi = gs.map_or(f64::NAN, |g| g.kpsi);
    let h = prelude.as_ref().map(|p| p.hypotheses);
    let (h_scatter, h_blowup) = h.map_or((false, false), |h| (h.scatter, h.blowup));
    let summary = summarize(
        &traj.rows,
        system.params.d,
        kpsi,
        h_scatter,
        traj.steps_accepted,
        traj.steps_rejected,
    );
    let completed = matches!(traj.verdict, Verdict::Completed { .. });
    let indicators = completed.then(|| scattering_indicators(&ev, &traj, kpsi));
    let consistency = if completed { consistency_report(&traj.rows).ok() } else { None };
    let trapped = indicators.as_ref().is_some_and(|i| i.trapping_margin > 0.0);
    let blew_up = matches!(traj.verdict, Verdict::BlowUp { .. });
    let scatter_ok = !h_scatter || (completed && trapped);
    let blowup_ok = !h_blowup || (blew_up && summary.tau_negative_throughout);
    let confirms = (h_scatter || h_blowup) && scatter_ok && blowup_ok;
    let matches_expected = match scenario.expected {
        Regime::Scatter => completed && trapped,
        Regime::BlowUp => blew_up,
        Regime::Unspecified => true,
    };
    let report = RegimeReport {
        index,
        name: scenario.name.clone(),
        expected: scenario.expected,
        prelude,
        verdict: Some(traj.verdict.clone()),
        summary: Some(summary),
        indicators,
        consistency,
        confirms,
        matches_expected,
        error: None,
        warnings: traj.warnings.clone(),
    };
    Ok((report, traj))
}

/// A set of scenarios sharing ground-state solver options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSet {
    #[serde(default)]
    pub ground_state: SolveOptions,
    #[serde(default)]
    pub check: CheckOptions,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build().map_err(|e| HarnessError::Pool(e.to_string()))
}

/// Solves one ground state per distinct (system, grid), in key order.
pub fn solve_ground_states(
    scenarios: &[Scenario],
    opts: &SolveOptions,
    workers: Option<usize>,
) -> Result<BTreeMap<String, Result<GroundState, String>>, HarnessError> {
    let mut keys: BTreeMap<String, &Scenario> = BTreeMap::new();
    for s in scenarios {
        keys.entry(s.ground_state_key()).or_insert(s);
    }
    let jobs: Vec<(String, &Scenario)> = keys.into_iter().collect();
    let solved = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|(k, s)| {
                let res = s
                    .system()
                    .and_then(|sys| solve_ground_state(&sys.grid, &sys.params.without_beta(), &sys.nl, opts).map_err(Into::into))
                    .map_err(|e| e.to_string());
                (k.clone(), res)
            })
            .collect::<Vec<_>>()
    });
    Ok(solved.into_iter().collect())
}

/// Runs every scenario on a bounded pool; reports come back in scenario order.
pub fn run_dichotomy(set: &ScenarioSet, workers: Option<usize>) -> Result<Vec<ScenarioOutcome>, HarnessError> {
    if set.scenarios.is_empty() {
        return Ok(Vec::new());
    }
    let states = solve_ground_states(&set.scenarios, &set.ground_state, workers)?;
    let outcomes = pool(workers)?.install(|| {
        set.scenarios
            .par_iter()
            .enumerate()
            .map(|(i, s)| match states.get(&s.ground_state_key()) {
                Some(Ok(gs)) => run_scenario(i, s, gs, &set.check),
                Some(Err(e)) => ScenarioOutcome {
                    report: RegimeReport::failed(i, s, &HarnessError::Invalid(s.name.clone(), e.clone())),
                    rows: Vec::new(),
                },
                None => unreachable!("every scenario key was solved"),
            })
            .collect()
    });
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub verdict: Option<String>,
    pub max_k: Option<f64>,
    pub min_tau: Option<f64>,
    pub scatter_hypotheses: Option<bool>,
    pub blowup_hypotheses: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Adjacent amplitudes `(a_i, a_{i+1})` where the verdict leaves `Completed`.
    pub transition: Option<(f64, f64)>,
}

/// Amplitudes `a_min + i (a_max - a_min)/(steps - 1)`; a single step gives `a_min`.
pub fn sweep_amplitudes(a_min: f64, a_max: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![a_min];
    }
    (0..steps)
        .map(|i| a_min + (a_max - a_min) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Evolves `template` with its amplitude factor replaced by each swept value.
///
/// The template must be a `ScaledGroundState` scenario; its expected regime is
/// ignored so every amplitude runs.
pub fn sweep_amplitude(
    a_min: f64,
    a_max: f64,
    steps: usize,
    template: &Scenario,
    gs: &GroundState,
    check: &CheckOptions,
    workers: Option<usize>,
) -> Result<SweepTable, HarnessError> {
    if !(a_min > 0.0 && a_max > a_min) || steps == 0 {
        return Err(HarnessError::Invalid(
            template.name.clone(),
            format!("sweep needs 0 < a_min < a_max and steps >= 1 (got {a_min}, {a_max}, {steps})"),
        ));
    }
    let InitialData::ScaledGroundState { mollifier, .. } = &template.initial else {
        return Err(HarnessError::Invalid(template.name.clone(), "sweep template must scale the ground state".into()));
    };
    let scenarios: Vec<Scenario> = sweep_amplitudes(a_min, a_max, steps)
        .into_iter()
        .map(|a| Scenario {
            name: format!("{}@a={a}", template.name),
            initial: InitialData::ScaledGroundState { a, mollifier: *mollifier },
            expected: Regime::Unspecified,
            ..template.clone()
        })
        .collect();
    let outcomes: Vec<ScenarioOutcome> = pool(workers)?.install(|| {
        scenarios.par_iter().enumerate().map(|(i, s)| run_scenario(i, s, gs, check)).collect()
    });
    let rows: Vec<SweepRow> = scenarios
        .iter()
        .zip(&outcomes)
        .map(|(s, o)| {
            let InitialData::ScaledGroundState { a, .. } = s.initial else { unreachable!() };
            let r = &o.report;
            SweepRow {
                a,
                verdict: r.verdict.as_ref().map(|v| v.name().to_string()),
                max_k: r.summary.as_ref().map(|s| s.max_k),
                min_tau: r.summary.as_ref().map(|s| s.min_tau),
                scatter_hypotheses: r.prelude.as_ref().map(|p| p.hypotheses.scatter),
                blowup_hypotheses: r.prelude.as_ref().map(|p| p.hypotheses.blowup),
                error: r.error.clone(),
            }
        })
        .collect();
    let transition = rows.windows(2).find_map(|w| {
        let done = |r: &SweepRow| r.verdict.as_deref() == Some("Completed");
        (done(&w[0]) && w[1].verdict.is_some() && !done(&w[1])).then_some((w[0].a, w[1].a))
    });
    Ok(SweepTable { rows, transition })
}

/// Column names of the shared time-series CSV.
pub fn csv_header(l: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "scenario", "t", "dt", "M", "E", "K", "L", "P", "Ecrit", "tau", "V", "Vprime", "R", "Rprime", "max_amp",
        "scheduled",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=l).map(|k| format!("s_density_{k}")));
    h
}

/// Writes trajectory rows as CSV, one block per scenario.
///
/// Scenarios with fewer components leave the trailing `s_density` columns empty.
pub fn write_timeseries_csv<W: Write>(out: W, series: &[(&str, &[TrajectoryRow])]) -> Result<(), csv::Error> {
    let l = series
        .iter()
        .flat_map(|(_, rows)| rows.first().map(|r| r.s_density.len()))
        .max()
        .unwrap_or(1);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(l))?;
    for (name, rows) in series {
        for r in *rows {
            let c = &r.record;
            let mut rec = vec![name.to_string()];
            rec.extend(
                [r.t, r.dt, c.M, c.E, c.K, c.L, c.P, c.Ecrit, c.tau, r.V, r.Vprime_formula, r.R, r.Rprime_formula, r.max_amp]
                    .iter()
                    .map(|x| x.to_string()),
            );
            rec.push(r.scheduled.to_string());
            rec.extend((0..l).map(|k| r.s_density.get(k).map_or(String::new(), |x| x.to_string())));
            w.write_record(rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
