//! Ground states by constrained minimization of `K` on `{P = 1}`.
//!
//! The descent runs in the homogeneous Sobolev metric
//! `<a, b>_H = sum_k gamma_k <grad a_k, grad b_k>`, where the gradient of `K`
//! is the iterate itself and the constraint normal of `P` is
//! `(-gamma_k Lap)^{-1} f_k(v)`. A second constraint pins the dilation scale
//! through the moment `G(v) = int r^2 F(v) / int F(v)`; without it the
//! discrete iteration slides along the dilation orbit toward the grid scale.

use crate::grid::{functionals, RadialGrid, RadialState, StateError};
use crate::linalg::solve_tridiagonal;
use crate::model::{Nonlinearity, SystemParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum InitialGuess {
    /// `amplitude * exp(-(r/width)^2)` in every component.
    Gaussian { width: f64, amplitude: f64 },
    /// Explicit non-negative profiles, one per component.
    Profile { fields: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Damping {
    /// Step factor after a rejected step.
    pub shrink: f64,
    /// Step factor after an accepted step, capped at the initial step.
    pub regrow: f64,
}

impl Default for Damping {
    fn default() -> Self {
        Damping {
            shrink: 0.5,
            regrow: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub step0: f64,
    pub max_iterations: usize,
    /// Relative H-norm of the projected gradient at convergence.
    pub tolerance: f64,
    pub initial_guess: InitialGuess,
    pub damping: Damping,
    /// Hold the moment `G(v)` at its initial value.
    pub scale_pin: bool,
    /// Restarts with a halved step when the half-potential radius drifts by more than 2x.
    pub max_restarts: usize,
    /// Keep per-iteration records in the result.
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            step0: 1.0,
            max_iterations: 50_000,
            tolerance: 1e-8,
            initial_guess: InitialGuess::Gaussian {
                width: 2.5,
                amplitude: 1.0,
            },
            damping: Damping::default(),
            scale_pin: true,
            max_restarts: 4,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundStateError {
    #[error("no convergence after {iterations} iterations (residual {residual:.3e}): {reason}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },
    #[error("iterate collapsed to zero")]
    CollapseToZero,
    #[error("P(v) <= 0 for every tried initial guess")]
    DegenerateF,
    #[error("invalid options: {0}")]
    Options(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("E(psi) = {0} is not positive")]
    NonPositiveEnergy(f64),
    #[error("threshold identity violated: |K - (d/2) E| = {gap:.3e} > 1e-10 K")]
    ThresholdIdentity { gap: f64 },
}

/// One accepted iteration: values after the projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub k: f64,
    pub p: f64,
    pub step: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub psi: RadialState,
    pub kpsi: f64,
    pub ppsi: f64,
    pub ecrit_psi: f64,
    pub jpsi: f64,
    /// `J` of the normalized initial guess.
    pub j_initial: f64,
    /// Sharp constant from the energy formula.
    pub copt: f64,
    /// Lagrange multiplier of the normalized minimizer.
    pub lambda: f64,
    /// Stationarity residual of `psi`.
    pub residual: f64,
    /// Final relative norm of the projected gradient.
    pub gradient_residual: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<IterRecord>,
}

/// Helper bundling the grid operators used by the iteration.
struct Ops<'a> {
    grid: &'a RadialGrid,
    params: &'a SystemParams,
    nl: &'a Nonlinearity,
    neg_lower: Vec<f64>,
    neg_diag: Vec<f64>,
    neg_upper: Vec<f64>,
    r2: Vec<f64>,
    q: f64,
}

type Field = Vec<Vec<f64>>;

impl<'a> Ops<'a> {
    fn new(grid: &'a RadialGrid, params: &'a SystemParams, nl: &'a Nonlinearity) -> Self {
        let b = grid.laplacian_bands();
        Ops {
            grid,
            params,
            nl,
            neg_lower: b.lower.iter().map(|x| -x).collect(),
            neg_diag: b.diag.iter().map(|x| -x).collect(),
            neg_upper: b.upper.iter().map(|x| -x).collect(),
            r2: grid.r.iter().map(|r| r * r).collect(),
            q: params.q_crit(),
        }
    }

    fn l(&self) -> usize {
        self.params.l
    }

    /// Pointwise `Re F(v)` and `Re f_k(v)`.
    fn densities(&self, v: &Field) -> (Vec<f64>, Field) {
        let l = self.l();
        let n = self.grid.n;
        let mut fdens = vec![0.0; n];
        let mut fk = vec![vec![0.0; n]; l];
        let mut z = vec![Complex64::new(0.0, 0.0); l];
        let mut out = vec![Complex64::new(0.0, 0.0); l];
        for j in 0..n {
            for k in 0..l {
                z[k] = Complex64::new(v[k][j], 0.0);
            }
            fdens[j] = self.nl.f_at(&z).re;
            self.nl.fk_at(&z, &mut out);
            for k in 0..l {
                fk[k][j] = out[k].re;
            }
        }
        (fdens, fk)
    }

    fn potential(&self, v: &Field) -> f64 {
        let l = self.l();
        let mut z = vec![Complex64::new(0.0, 0.0); l];
        let mut s = 0.0;
        for j in 0..self.grid.n {
            for k in 0..l {
                z[k] = Complex64::new(v[k][j], 0.0);
            }
            s += self.grid.w[j] * self.nl.f_at(&z).re;
        }
        s
    }

    fn kinetic(&self, v: &Field) -> f64 {
        v.iter()
            .zip(&self.params.gamma)
            .map(|(c, g)| g * self.grid.dirichlet_energy(c))
            .sum()
    }

    fn h_dot(&self, a: &Field, b: &Field) -> f64 {
        (0..self.l())
            .map(|k| self.params.gamma[k] * self.grid.dirichlet_product(&a[k], &b[k]))
            .sum()
    }

    /// `(-gamma_k Lap)^{-1} b_k` per component.
    fn precondition(&self, b: &Field) -> Field {
        b.iter()
            .enumerate()
            .map(|(k, bk)| {
                let g = self.params.gamma[k];
                let x = solve_tridiagonal(&self.neg_lower, &self.neg_diag, &self.neg_upper, bk)
                    .expect("-Lap is nonsingular");
                x.iter().map(|v| v / g).collect()
            })
            .collect()
    }

    /// Radius enclosing half of the potential energy.
    fn half_radius(&self, fdens: &[f64]) -> f64 {
        let total: f64 = self.grid.integrate(fdens);
        let mut acc = 0.0;
        for j in 0..self.grid.n {
            acc += self.grid.w[j] * fdens[j];
            if acc >= 0.5 * total {
                return self.grid.r[j];
            }
        }
        self.grid.r_max
    }

    fn moment(&self, fdens: &[f64], p: f64) -> f64 {
        let s: f64 = (0..self.grid.n)
            .map(|j| self.grid.w[j] * self.r2[j] * fdens[j])
            .sum();
        s / p
    }

    /// Clamp to the non-negative cone, drop negligible components and rescale to `P = 1`.
    fn project(&self, v: &mut Field) -> Result<(), GroundStateError> {
        for c in v.iter_mut() {
            for x in c.iter_mut() {
                if *x < 0.0 || !x.is_finite() {
                    *x = 0.0;
                }
            }
        }
        let energies: Vec<f64> = v.iter().map(|c| self.grid.dirichlet_energy(c)).collect();
        let total: f64 = energies.iter().sum();
        if total == 0.0 {
            return Err(GroundStateError::CollapseToZero);
        }
        for (c, e) in v.iter_mut().zip(&energies) {
            if *e < 1e-30 * total {
                c.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let p = self.potential(v);
        if !(p > 0.0) {
            return Err(GroundStateError::DegenerateF);
        }
        let mu = p.powf(-1.0 / self.q);
        for c in v.iter_mut() {
            c.iter_mut().for_each(|x| *x *= mu);
        }
        Ok(())
    }
}

fn combine(a: &Field, sa: f64, b: &Field, sb: f64) -> Field {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| sa * p + sb * q).collect())
        .collect()
}

fn guess_fields(grid: &RadialGrid, l: usize, guess: &InitialGuess) -> Result<Field, GroundStateError> {
    match guess {
        InitialGuess::Gaussian { width, amplitude } => {
            if !(*width > 0.0) {
                return Err(GroundStateError::Options("Gaussian width must be positive".into()));
            }
            let c: Vec<f64> = grid
                .r
                .iter()
                .map(|r| amplitude * (-(r / width).powi(2)).exp())
                .collect();
            Ok(vec![c; l])
        }
        InitialGuess::Profile { fields } => {
            if fields.len() != l || fields.iter().any(|c| c.len() != grid.n) {
                return Err(GroundStateError::Options(format!(
                    "profile must be {l} x {} samples",
                    grid.n
                )));
            }
            Ok(fields.clone())
        }
    }
}

/// Candidate starting points: the requested guess, then single-component and
/// all-component Gaussians of the same width.
fn candidates(grid: &RadialGrid, l: usize, opts: &SolveOptions) -> Result<Vec<Field>, GroundStateError> {
    let first = guess_fields(grid, l, &opts.initial_guess)?;
    let width = match &opts.initial_guess {
        InitialGuess::Gaussian { width, .. } => *width,
        InitialGuess::Profile { .. } => grid.r_max / 40.0,
    };
    let g: Vec<f64> = grid.r.iter().map(|r| (-(r / width).powi(2)).exp()).collect();
    let mut out = vec![first];
    for k in 0..l {
        let mut f = vec![vec![0.0; grid.n]; l];
        f[k] = g.clone();
        out.push(f);
    }
    out.push(vec![g; l]);
    Ok(out)
}

struct RunOutcome {
    v: Field,
    iterations: usize,
    residual: f64,
    j_initial: f64,
    trace: Vec<IterRecord>,
}

enum RunError {
    Drift,
    Fatal(GroundStateError),
}

fn descend(ops: &Ops, v0: &Field, opts: &SolveOptions, step0: f64) -> Result<RunOutcome, RunError> {
    let mut v = v0.clone();
    ops.project(&mut v).map_err(RunError::Fatal)?;
    let d = ops.params.d as f64;
    let j_of = |k: f64, p: f64| k.powf(d / (d - 2.0)) / p;
    let mut k_cur = ops.kinetic(&v);
    let j_initial = j_of(k_cur, 1.0);
    let (fd0, _) = ops.densities(&v);
    let r_half0 = ops.half_radius(&fd0);
    let g0 = ops.moment(&fd0, 1.0);
    let mut tau = step0;
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;

    for it in 0..opts.max_iterations {
        let (fdens, fk) = ops.densities(&v);
        let p = ops.grid.integrate(&fdens);
        let n_p = ops.precondition(&fk);
        let np_norm = ops.h_dot(&n_p, &n_p).sqrt();
        if !(np_norm > 0.0) {
            return Err(RunError::Fatal(GroundStateError::CollapseToZero));
        }
        let e1: Field = n_p.iter().map(|c| c.iter().map(|x| x / np_norm).collect()).collect();
        let mut basis = vec![e1];
        let mut restore: Option<Field> = None;
        if opts.scale_pin {
            let g = ops.moment(&fdens, p);
            let grad_g: Field = fk
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(&ops.r2)
                        .map(|(f, r2)| (r2 - g) * f / p)
                        .collect()
                })
                .collect();
            let n_g = ops.precondition(&grad_g);
            let ng2 = ops.h_dot(&n_g, &n_g);
            let c1 = ops.h_dot(&n_g, &basis[0]);
            let e2 = combine(&n_g, 1.0, &basis[0], -c1);
            let e2n = ops.h_dot(&e2, &e2).sqrt();
            if e2n > 1e-14 * ng2.sqrt() {
                basis.push(e2.iter().map(|c| c.iter().map(|x| x / e2n).collect()).collect());
                restore = Some(n_g.iter().map(|c| c.iter().map(|x| x * (g - g0) / ng2).collect()).collect());
            }
        }
        let mut g_t = v.clone();
        for e in &basis {
            let c = ops.h_dot(&v, e);
            g_t = combine(&g_t, 1.0, e, -c);
        }
        let vn = ops.h_dot(&v, &v).sqrt();
        residual = ops.h_dot(&g_t, &g_t).sqrt() / vn;
        if residual <= opts.tolerance {
            return Ok(RunOutcome {
                v,
                iterations: it,
                residual,
                j_initial,
                trace,
            });
        }
        let dir = match &restore {
            Some(rs) => combine(&g_t, 1.0, rs, 1.0),
            None => g_t,
        };
        loop {
            let mut w = combine(&v, 1.0, &dir, -tau);
            let accepted = match ops.project(&mut w) {
                Ok(()) => {
                    let k_new = ops.kinetic(&w);
                    if k_new <= k_cur * (1.0 + 1e-12) {
                        k_cur = k_new;
                        v = w;
                        true
                    } else {
                        false
                    }
                }
                Err(GroundStateError::CollapseToZero) | Err(GroundStateError::DegenerateF) => false,
                Err(e) => return Err(RunError::Fatal(e)),
            };
            if accepted {
                break;
            }
            tau *= opts.damping.shrink;
            if tau < 1e-12 * step0 {
                return Err(RunError::Fatal(GroundStateError::NonConvergence {
                    iterations: it,
                    residual,
                    reason: "step size underflow".into(),
                }));
            }
        }
        if opts.record_trace {
            trace.push(IterRecord {
                iteration: it + 1,
                k: k_cur,
                p: ops.potential(&v),
                step: tau,
                residual,
            });
        }
        tau = (tau * opts.damping.regrow).min(step0);
        let (fd, _) = ops.densities(&v);
        let ratio = ops.half_radius(&fd) / r_half0;
        if !(0.5..=2.0).contains(&ratio) {
            return Err(RunError::Drift);
        }
    }
    Err(RunError::Fatal(GroundStateError::NonConvergence {
        iterations: opts.max_iterations,
        residual,
        reason: "iteration limit reached".into(),
    }))
}

pub fn solve_ground_state(
    grid: &RadialGrid,
    params: &SystemParams,
    nl: &Nonlinearity,
    opts: &SolveOptions,
) -> Result<GroundState, GroundStateError> {
    if !(opts.step0 > 0.0) || !(opts.tolerance > 0.0) {
        return Err(GroundStateError::Options("step0 and tolerance must be positive".into()));
    }
    if !(opts.damping.shrink > 0.0 && opts.damping.shrink < 1.0) || opts.damping.regrow < 1.0 {
        return Err(GroundStateError::Options("need 0 < shrink < 1 <= regrow".into()));
    }
    let params = params.without_beta();
    let ops = Ops::new(grid, &params, nl);
    let l = params.l;
    let cands = candidates(grid, l, opts)?;
    if cands[0].iter().all(|c| c.iter().all(|&x| x == 0.0)) {
        return Err(GroundStateError::CollapseToZero);
    }
    let start = cands
        .into_iter()
        .find(|c| {
            let mut clamped = c.clone();
            clamped
                .iter_mut()
                .for_each(|x| x.iter_mut().for_each(|y| *y = y.max(0.0)));
            ops.potential(&clamped) > 0.0
        })
        .ok_or(GroundStateError::DegenerateF)?;

    let mut step = opts.step0;
    let mut restarts = 0;
    let mut total_iterations = 0;
    let outcome = loop {
        match descend(&ops, &start, opts, step) {
            Ok(o) => break o,
            Err(RunError::Drift) if restarts < opts.max_restarts => {
                log::warn!("ground-state iterate drifted in scale; restarting with step {}", step / 2.0);
                restarts += 1;
                step /= 2.0;
                total_iterations += 1;
            }
            Err(RunError::Drift) => {
                return Err(GroundStateError::NonConvergence {
                    iterations: total_iterations,
                    residual: f64::NAN,
                    reason: "scale drift persisted after restarts".into(),
                })
            }
            Err(RunError::Fatal(e)) => return Err(e),
        }
    };

    let v = outcome.v;
    let kv = ops.kinetic(&v);
    let pv = ops.potential(&v);
    let d = params.d as f64;
    let lambda = (d - 2.0) * kv / (d * pv);
    let c = (lambda / 2.0).powf((d - 2.0) / 4.0);
    let psi = RadialState::from_real(0.0, &v.iter().map(|f| f.iter().map(|x| c * x).collect()).collect::<Vec<_>>());
    let rec = functionals(grid, &params, nl, &psi)?;
    let jpsi = rec.K.powf(d / (d - 2.0)) / rec.P;
    let mut gs = GroundState {
        psi,
        kpsi: rec.K,
        ppsi: rec.P,
        ecrit_psi: rec.Ecrit,
        jpsi,
        j_initial: outcome.j_initial,
        copt: f64::NAN,
        lambda,
        residual: f64::NAN,
        gradient_residual: outcome.residual,
        iterations: outcome.iterations,
        restarts,
        converged: true,
        trace: outcome.trace,
    };
    gs.residual = stationarity_residual(grid, &params, nl, &gs);
    gs.copt = compute_copt(&gs, params.d)?.formula;
    Ok(gs)
}

/// `max_k ||gamma_k Lap psi_k + f_k(psi)||_w / ||f_k(psi)||_w`, skipping identically zero components.
pub fn stationarity_residual(
    grid: &RadialGrid,
    params: &SystemParams,
    nl: &Nonlinearity,
    gs: &GroundState,
) -> f64 {
    let psi = &gs.psi;
    let l = params.l;
    let n = grid.n;
    let bands = grid.laplacian_bands();
    let mut fk = vec![vec![Complex64::new(0.0, 0.0); n]; l];
    let mut out = vec![Complex64::new(0.0, 0.0); l];
    for j in 0..n {
        nl.fk_at(&psi.node(j), &mut out);
        for k in 0..l {
            fk[k][j] = out[k];
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..l {
        let lap = bands.apply(&psi.u[k]);
        let res: Vec<Complex64> = lap
            .iter()
            .zip(&fk[k])
            .map(|(a, f)| a * params.gamma[k] + f)
            .collect();
        let num = grid.norm2(&res).sqrt();
        let den = grid.norm2(&fk[k]).sqrt();
        if num == 0.0 && den == 0.0 {
            continue;
        }
        worst = worst.max(num / den);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoptEstimate {
    /// `(1/C_d) (2/E(psi))^{2/(d-2)}`.
    pub formula: f64,
    /// `1 / J(psi)`.
    pub direct: f64,
    pub relative_gap: f64,
}

/// `C_d = (2/(d-2)) d^{d/(d-2)}`.
pub fn sobolev_cd(d: usize) -> f64 {
    let d = d as f64;
    2.0 / (d - 2.0) * d.powf(d / (d - 2.0))
}

pub fn copt_from_energy(ecrit: f64, d: usize) -> f64 {
    let dd = d as f64;
    (2.0 / ecrit).powf(2.0 / (dd - 2.0)) / sobolev_cd(d)
}

pub fn compute_copt(gs: &GroundState, d: usize) -> Result<CoptEstimate, GroundStateError> {
    if !(gs.ecrit_psi > 0.0) {
        return Err(GroundStateError::NonPositiveEnergy(gs.ecrit_psi));
    }
    let formula = copt_from_energy(gs.ecrit_psi, d);
    let direct = 1.0 / gs.jpsi;
    Ok(CoptEstimate {
        formula,
        direct,
        relative_gap: (formula - direct).abs() / formula,
    })
}

/// `(K(psi), E(psi))`, checking `K = (d/2) E` on the stored values.
pub fn thresholds(gs: &GroundState, d: usize) -> Result<(f64, f64), GroundStateError> {
    threshold_pair(gs.kpsi, gs.ecrit_psi, d)
}

pub fn threshold_pair(kpsi: f64, ecrit: f64, d: usize) -> Result<(f64, f64), GroundStateError> {
    let gap = (kpsi - d as f64 / 2.0 * ecrit).abs();
    if gap > 1e-10 * kpsi.abs() {
        return Err(GroundStateError::ThresholdIdentity { gap });
    }
    Ok((kpsi, ecrit))
}
