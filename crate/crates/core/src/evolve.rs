//! Time integration by Strang splitting: Crank-Nicolson half steps for the
//! linear flow, node-local RK4 for the nonlinear flow, step doubling for the
//! error estimate.

use crate::diagnostics::{morawetz_rprime_formula, virial_v, virial_vprime, RadialWeight};
use crate::grid::{functionals, FunctionalRecord, LaplacianBands, RadialGrid, RadialState};
use crate::linalg::{solve_tridiagonal, TridiagError};
use crate::model::{Nonlinearity, SystemParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControls {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub c_amp: f64,
    /// Per-step tolerance on the relative weighted L^2 step-doubling difference.
    pub tol: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        StepControls {
            dt0: 1e-3,
            dt_min: 1e-5,
            dt_max: 0.05,
            safety: 0.9,
            c_amp: 0.2,
            tol: 1e-6,
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt0
            && self.dt0 <= self.dt_max
            && self.safety > 0.0
            && self.c_amp > 0.0
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(EvolveError::Controls(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupRule {
    pub growth_factor: f64,
    pub window: usize,
}

impl Default for BlowupRule {
    fn default() -> Self {
        BlowupRule {
            growth_factor: 10.0,
            window: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("linear solve failed for component {component}: {source}")]
    LinearSolve {
        component: usize,
        #[source]
        source: TridiagError,
    },
    #[error("non-finite value produced")]
    Poisoned,
    #[error("invalid step controls: {0}")]
    Controls(String),
    #[error("invalid time horizon {t_final} (state at {t})")]
    Horizon { t: f64, t_final: f64 },
}

/// Precomputed operators for one system on one grid.
pub struct Evolver<'a> {
    pub grid: &'a RadialGrid,
    pub params: &'a SystemParams,
    pub nl: &'a Nonlinearity,
    bands: LaplacianBands,
}

impl<'a> Evolver<'a> {
    pub fn new(grid: &'a RadialGrid, params: &'a SystemParams, nl: &'a Nonlinearity) -> Self {
        Evolver {
            grid,
            params,
            nl,
            bands: grid.laplacian_bands(),
        }
    }

    /// Same evolver with a replaced Laplacian (tests of the mass-term phase).
    pub fn with_bands(mut self, bands: LaplacianBands) -> Self {
        self.bands = bands;
        self
    }

    /// Linear flow of `i alpha u_t = -gamma Lap u + beta u` over duration `s`.
    ///
    /// The Laplacian part is advanced by the trapezoidal rule; `beta` commutes
    /// with it and contributes the exact phase `exp(-i beta s / alpha)`.
    pub fn linear_halfstep(&self, state: &RadialState, s: f64) -> Result<RadialState, EvolveError> {
        let n = self.grid.n;
        let i = Complex64::new(0.0, 1.0);
        let mut out = Vec::with_capacity(state.l());
        for (k, u) in state.u.iter().enumerate() {
            let a = s * self.params.gamma[k] / (2.0 * self.params.alpha[k]);
            let lap = self.bands.apply(u);
            let rhs: Vec<Complex64> = u.iter().zip(&lap).map(|(x, lx)| x + i * a * lx).collect();
            let lower: Vec<Complex64> = self.bands.lower.iter().map(|c| -i * a * c).collect();
            let upper: Vec<Complex64> = self.bands.upper.iter().map(|c| -i * a * c).collect();
            let diag: Vec<Complex64> = self
                .bands
                .diag
                .iter()
                .map(|c| Complex64::new(1.0, 0.0) - i * a * c)
                .collect();
            let mut x = solve_tridiagonal(&lower, &diag, &upper, &rhs)
                .map_err(|source| EvolveError::LinearSolve { component: k, source })?;
            let beta = self.params.beta[k];
            if beta != 0.0 {
                let ph = Complex64::from_polar(1.0, -beta * s / self.params.alpha[k]);
                x.iter_mut().for_each(|z| *z *= ph);
            }
            debug_assert_eq!(x.len(), n);
            out.push(x);
        }
        Ok(RadialState { t: state.t, u: out })
    }

    /// One RK4 step of `u_k' = (i/alpha_k) f_k(u)` at every node.
    pub fn nonlinear_substep(&self, state: &RadialState, dt: f64) -> Result<RadialState, EvolveError> {
        let l = state.l();
        let n = self.grid.n;
        let coef: Vec<Complex64> = self
            .params
            .alpha
            .iter()
            .map(|a| Complex64::new(0.0, 1.0 / a))
            .collect();
        let mut out = state.clone();
        let mut z = vec![Complex64::new(0.0, 0.0); l];
        let mut tmp = vec![Complex64::new(0.0, 0.0); l];
        let mut k1 = vec![Complex64::new(0.0, 0.0); l];
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let rhs = |z: &[Complex64], out: &mut [Complex64]| {
            self.nl.fk_at(z, out);
            for (o, c) in out.iter_mut().zip(&coef) {
                *o *= c;
            }
        };
        for j in 0..n {
            for k in 0..l {
                z[k] = state.u[k][j];
            }
            rhs(&z, &mut k1);
            for k in 0..l {
                tmp[k] = z[k] + k1[k] * (dt / 2.0);
            }
            rhs(&tmp, &mut k2);
            for k in 0..l {
                tmp[k] = z[k] + k2[k] * (dt / 2.0);
            }
            rhs(&tmp, &mut k3);
            for k in 0..l {
                tmp[k] = z[k] + k3[k] * dt;
            }
            rhs(&tmp, &mut k4);
            for k in 0..l {
                let v = z[k] + (k1[k] + k2[k] * 2.0 + k3[k] * 2.0 + k4[k]) * (dt / 6.0);
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(EvolveError::Poisoned);
                }
                out.u[k][j] = v;
            }
        }
        Ok(out)
    }

    /// Strang step: linear(dt/2), nonlinear(dt), linear(dt/2).
    pub fn step(&self, state: &RadialState, dt: f64) -> Result<RadialState, EvolveError> {
        let a = self.linear_halfstep(state, dt / 2.0)?;
        let b = self.nonlinear_substep(&a, dt)?;
        let mut c = self.linear_halfstep(&b, dt / 2.0)?;
        if c.is_poisoned() {
            return Err(EvolveError::Poisoned);
        }
        c.t = state.t + dt;
        Ok(c)
    }

    /// Two half steps and one full step; returns the half-step result and the
    /// relative weighted L^2 difference.
    pub fn trial(&self, state: &RadialState, dt: f64) -> Result<(RadialState, f64), EvolveError> {
        let full = self.step(state, dt)?;
        let half = self.step(&self.step(state, dt / 2.0)?, dt / 2.0)?;
        let diff = full.distance(&half, self.grid);
        let norm = half.norm(self.grid);
        let err = if norm > 0.0 { diff / norm } else { 0.0 };
        let mut half = half;
        half.t = state.t + dt;
        Ok((half, err))
    }

    /// Pure linear flow over `duration` in CN steps of at most `max_dt`.
    pub fn free_flow(&self, state: &RadialState, duration: f64, max_dt: f64) -> Result<RadialState, EvolveError> {
        let steps = (duration / max_dt).ceil().max(1.0) as usize;
        let s = duration / steps as f64;
        let mut cur = state.clone();
        for _ in 0..steps {
            cur = self.linear_halfstep(&cur, s)?;
        }
        cur.t = state.t + duration;
        Ok(cur)
    }
}

pub fn linear_halfstep(
    state: &RadialState,
    s: f64,
    params: &SystemParams,
    grid: &RadialGrid,
) -> Result<RadialState, EvolveError> {
    let nl = Nonlinearity::new(crate::model::PotentialF::zero(params.l));
    Evolver::new(grid, params, &nl).linear_halfstep(state, s)
}

pub fn nonlinear_substep(
    state: &RadialState,
    dt: f64,
    params: &SystemParams,
    grid: &RadialGrid,
    nl: &Nonlinearity,
) -> Result<RadialState, EvolveError> {
    Evolver::new(grid, params, nl).nonlinear_substep(state, dt)
}

pub fn step(
    state: &RadialState,
    dt: f64,
    params: &SystemParams,
    grid: &RadialGrid,
    nl: &Nonlinearity,
) -> Result<RadialState, EvolveError> {
    Evolver::new(grid, params, nl).step(state, dt)
}

/// `c_amp / (1 + max|u|^{4/(d-2)})`.
pub fn amplitude_cap(max_amp: f64, d: usize, c_amp: f64) -> f64 {
    c_amp / (1.0 + max_amp.powf(4.0 / (d as f64 - 2.0)))
}

/// Next step size from the last error estimate and the amplitude cap.
pub fn adapt_dt(max_amp: f64, d: usize, controls: &StepControls, dt: f64, last_error: f64) -> f64 {
    let factor = if last_error > 0.0 {
        (controls.tol / last_error).cbrt()
    } else {
        f64::INFINITY
    };
    let proposal = controls.safety * dt * factor;
    let clamped = if proposal.is_finite() {
        proposal.clamp(controls.dt_min, controls.dt_max)
    } else {
        controls.dt_max
    };
    clamped
        .min(amplitude_cap(max_amp, d, controls.c_amp))
        .max(controls.dt_min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupEvidence {
    pub k0: f64,
    pub k_last: f64,
    pub k_growth: f64,
    pub final_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    Completed { t_final: f64 },
    BlowUp { t_star: f64, evidence: BlowupEvidence },
    Unresolved { t: f64, reason: String },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Completed { .. } => "Completed",
            Verdict::BlowUp { .. } => "BlowUp",
            Verdict::Unresolved { .. } => "Unresolved",
        }
    }
}

/// Outcome of one application of the blow-up rule.
#[derive(Debug, Clone, PartialEq)]
pub enum BlowupCheck {
    Continue,
    BlowUp(BlowupEvidence),
    Unresolved(String),
}

/// Classify a kinetic-energy history.
///
/// `dt` is the last accepted step; `at_floor` means the controller could not
/// meet its tolerance or amplitude cap without going below `dt_min`.
pub fn detect_blowup(k_history: &[f64], dt: f64, dt_min: f64, at_floor: bool, rule: &BlowupRule) -> BlowupCheck {
    let near_floor = dt <= 2.0 * dt_min;
    if k_history.len() >= 3 && near_floor {
        let k0 = k_history[0];
        let last = *k_history.last().expect("non-empty");
        let w = rule.window.max(2).min(k_history.len());
        let tail = &k_history[k_history.len() - w..];
        let increasing = tail.windows(2).all(|p| p[1] > p[0]);
        if last > rule.growth_factor * k0 && increasing {
            return BlowupCheck::BlowUp(BlowupEvidence {
                k0,
                k_last: last,
                k_growth: last / k0,
                final_dt: dt,
            });
        }
    }
    if at_floor {
        return BlowupCheck::Unresolved(format!(
            "step size reached dt_min = {dt_min:e} without the blow-up signature"
        ));
    }
    BlowupCheck::Continue
}

/// One recorded sample along a trajectory.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub dt: f64,
    pub record: FunctionalRecord,
    pub V: f64,
    pub Vprime_formula: f64,
    pub R: f64,
    pub Rprime_formula: f64,
    pub max_amp: f64,
    /// `int |u_k|^{2(d+2)/(d-2)}` per component.
    pub s_density: Vec<f64>,
    /// On the uniform record cadence (as opposed to extra samples near the step floor).
    pub scheduled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub record_interval: f64,
    pub snapshot_times: Vec<f64>,
    pub blowup: BlowupRule,
    pub weight: RadialWeight,
    pub max_steps: usize,
    /// Fraction of the run kept as the tail window for the free-flow comparison.
    pub tail_fraction: f64,
}

impl EvolveOptions {
    pub fn new(grid: &RadialGrid, t_final: f64, record_interval: f64) -> Self {
        EvolveOptions {
            t_final,
            record_interval,
            snapshot_times: Vec::new(),
            blowup: BlowupRule::default(),
            weight: RadialWeight::quadratic(grid),
            max_steps: 10_000_000,
            tail_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub snapshots: Vec<RadialState>,
    pub final_state: RadialState,
    /// State at the start of the tail window.
    pub tail_anchor: Option<RadialState>,
    pub verdict: Verdict,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn scheduled_rows(&self) -> impl Iterator<Item = &TrajectoryRow> {
        self.rows.iter().filter(|r| r.scheduled)
    }
}

pub trait Observer {
    fn on_record(&mut self, _row: &TrajectoryRow, _state: &RadialState) {}
}

impl Observer for () {}

pub fn make_row(
    ev: &Evolver,
    weight: &RadialWeight,
    state: &RadialState,
    dt: f64,
    scheduled: bool,
) -> Result<TrajectoryRow, EvolveError> {
    let rec = functionals(ev.grid, ev.params, ev.nl, state).map_err(|_| EvolveError::Poisoned)?;
    let d = ev.params.d as f64;
    let sp = 2.0 * (d + 2.0) / (d - 2.0);
    let s_density = state
        .u
        .iter()
        .map(|c| {
            let dens: Vec<f64> = c.iter().map(|z| z.norm().powf(sp)).collect();
            ev.grid.integrate(&dens)
        })
        .collect();
    let vp = virial_vprime(ev.grid, ev.params, weight, state);
    Ok(TrajectoryRow {
        t: state.t,
        dt,
        record: rec,
        V: virial_v(ev.grid, ev.params, weight, state),
        Vprime_formula: vp,
        R: vp,
        Rprime_formula: morawetz_rprime_formula(ev.grid, ev.params, ev.nl, weight, state),
        max_amp: state.max_amp(),
        s_density,
        scheduled,
    })
}

/// Wall-return heuristic: warn when `T` exceeds `r_max / (4 max(gamma/alpha) k_max)`, `k_max = pi/h`.
pub fn reflection_warning(grid: &RadialGrid, params: &SystemParams, duration: f64) -> Option<String> {
    let speed = (0..params.l)
        .map(|k| params.gamma[k] / params.alpha[k])
        .fold(0.0, f64::max);
    let k_max = std::f64::consts::PI / grid.h;
    let limit = grid.r_max / (4.0 * speed * k_max);
    (duration > limit).then(|| {
        format!(
            "horizon {duration} exceeds the wall-return estimate {limit:.3e}; the highest grid modes may reflect off r_max"
        )
    })
}

pub fn evolve_until(
    ev: &Evolver,
    initial: &RadialState,
    controls: &StepControls,
    opts: &EvolveOptions,
    observer: &mut dyn Observer,
) -> Result<Trajectory, EvolveError> {
    controls.validate()?;
    let t0 = initial.t;
    let t_final = opts.t_final;
    if !(t_final > t0) {
        return Err(EvolveError::Horizon { t: t0, t_final });
    }
    if !(opts.record_interval > 0.0) {
        return Err(EvolveError::Controls("record_interval must be positive".into()));
    }
    let d = ev.params.d;
    let mut warnings = Vec::new();
    if let Some(w) = reflection_warning(ev.grid, ev.params, t_final - t0) {
        warnings.push(w);
    }
    let n_records = ((t_final - t0) / opts.record_interval - 1e-9).ceil().max(1.0) as usize;
    let record_time = |i: usize| {
        if i >= n_records {
            t_final
        } else {
            t0 + i as f64 * opts.record_interval
        }
    };
    let tail_start = t_final - opts.tail_fraction * (t_final - t0);

    let mut state = initial.clone();
    let mut rows = Vec::new();
    let first = make_row(ev, &opts.weight, &state, 0.0, true)?;
    observer.on_record(&first, &state);
    rows.push(first);
    let mut k_hist: Vec<f64> = vec![rows[0].record.K];
    let mut snapshots = Vec::new();
    let mut snap_idx = 0;
    let mut snap_times = opts.snapshot_times.clone();
    snap_times.sort_by(f64::total_cmp);
    while snap_idx < snap_times.len() && snap_times[snap_idx] <= t0 {
        snapshots.push(state.clone());
        snap_idx += 1;
    }
    let mut tail_anchor = (tail_start <= t0).then(|| state.clone());

    let mut next_rec = 1;
    let mut dt = controls.dt0.min(amplitude_cap(state.max_amp(), d, controls.c_amp)).max(controls.dt_min);
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    let finish = |rows: Vec<TrajectoryRow>,
                  snapshots: Vec<RadialState>,
                  final_state: RadialState,
                  tail_anchor: Option<RadialState>,
                  verdict: Verdict,
                  accepted: usize,
                  rejected: usize,
                  warnings: Vec<String>| Trajectory {
        rows,
        snapshots,
        final_state,
        tail_anchor,
        verdict,
        steps_accepted: accepted,
        steps_rejected: rejected,
        warnings,
    };

    loop {
        if accepted + rejected >= opts.max_steps {
            let verdict = Verdict::Unresolved {
                t: state.t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            };
            return Ok(finish(rows, snapshots, state, tail_anchor, verdict, accepted, rejected, warnings));
        }
        let target = record_time(next_rec);
        let cap = amplitude_cap(state.max_amp(), d, controls.c_amp);
        let mut h = dt.min(cap).max(controls.dt_min);
        let landing = state.t + h >= target - 1e-12 * target.abs().max(1.0);
        if landing {
            h = target - state.t;
        }
        let trial = ev.trial(&state, h);
        let (candidate, err) = match trial {
            Ok(x) => x,
            Err(EvolveError::Poisoned) => {
                if h > controls.dt_min * (1.0 + 1e-12) {
                    rejected += 1;
                    dt = (h * 0.25).max(controls.dt_min);
                    continue;
                }
                let k0 = k_hist[0];
                let k_last = *k_hist.last().expect("non-empty");
                let verdict = if k_last > opts.blowup.growth_factor * k0 {
                    Verdict::BlowUp {
                        t_star: state.t,
                        evidence: BlowupEvidence {
                            k0,
                            k_last,
                            k_growth: k_last / k0,
                            final_dt: h,
                        },
                    }
                } else {
                    Verdict::Unresolved {
                        t: state.t,
                        reason: "state became non-finite without kinetic-energy growth".into(),
                    }
                };
                return Ok(finish(rows, snapshots, state, tail_anchor, verdict, accepted, rejected, warnings));
            }
            Err(e) => return Err(e),
        };
        let err_ok = err <= controls.tol;
        if !err_ok && h > controls.dt_min * (1.0 + 1e-12) {
            rejected += 1;
            dt = adapt_dt(state.max_amp(), d, controls, h, err).min(h * 0.9);
            continue;
        }
        accepted += 1;
        let at_floor = !err_ok || cap < controls.dt_min;
        state = candidate;
        if landing {
            state.t = target;
        }
        dt = if landing && h < dt {
            dt.min(amplitude_cap(state.max_amp(), d, controls.c_amp)).max(controls.dt_min)
        } else {
            adapt_dt(state.max_amp(), d, controls, h, err)
        };

        if tail_anchor.is_none() && state.t >= tail_start - 1e-12 {
            tail_anchor = Some(state.clone());
        }
        while snap_idx < snap_times.len() && snap_times[snap_idx] <= state.t + 1e-12 {
            snapshots.push(state.clone());
            snap_idx += 1;
        }

        let near_floor = h <= 2.0 * controls.dt_min;
        let record_now = landing || near_floor || at_floor;
        if record_now {
            let row = make_row(ev, &opts.weight, &state, h, landing)?;
            observer.on_record(&row, &state);
            k_hist.push(row.record.K);
            rows.push(row);
            if landing {
                next_rec += 1;
            }
        }
        if landing && state.t >= t_final {
            let verdict = Verdict::Completed { t_final: state.t };
            return Ok(finish(rows, snapshots, state, tail_anchor, verdict, accepted, rejected, warnings));
        }
        if record_now {
            match detect_blowup(&k_hist, h, controls.dt_min, at_floor, &opts.blowup) {
                BlowupCheck::Continue => {}
                BlowupCheck::BlowUp(evidence) => {
                    let verdict = Verdict::BlowUp {
                        t_star: state.t,
                        evidence,
                    };
                    return Ok(finish(rows, snapshots, state, tail_anchor, verdict, accepted, rejected, warnings));
                }
                BlowupCheck::Unresolved(reason) => {
                    let verdict = Verdict::Unresolved { t: state.t, reason };
                    return Ok(finish(rows, snapshots, state, tail_anchor, verdict, accepted, rejected, warnings));
                }
            }
        }
    }
}
