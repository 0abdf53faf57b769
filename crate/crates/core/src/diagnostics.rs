//! Virial and Morawetz functionals, radial weights, finite-difference
//! consistency checks and scattering indicators.

use crate::evolve::{Evolver, Trajectory, TrajectoryRow, Verdict};
use crate::grid::{potential_energy_density, RadialGrid, RadialState};
use crate::model::{Nonlinearity, SystemParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("cutoff radius {radius} must lie in (0, r_max/3 = {limit})")]
    CutoffRadius { radius: f64, limit: f64 },
    #[error("cutoff constant c={0} outside the attainable range (4.111, 9)")]
    CutoffConstant(f64),
    #[error("no cutoff with c in [5, 9] satisfies the weight constraints: {0}")]
    CutoffConstraint(String),
    #[error("need at least 5 uniformly spaced samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples are not uniformly spaced (step {first} vs {other})")]
    NonUniform { first: f64, other: f64 },
}

/// Which weight a [`RadialWeight`] samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WeightKind {
    Quadratic,
    CutoffChi {
        radius: f64,
        /// Plateau value is `c R^2`.
        c: f64,
        /// End of the exact `r^2` region.
        rho: f64,
        /// Measured `max(|Lap phi|, R^2 |Lap^2 phi|)` over `r >= R`.
        bound: f64,
    },
    Custom { name: String },
}

/// Serializable description of a weight, resolved against a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum WeightSpec {
    Quadratic,
    CutoffChi {
        radius: f64,
        #[serde(default = "default_c")]
        c: f64,
    },
}

fn default_c() -> f64 {
    6.0
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Quadratic
    }
}

impl WeightSpec {
    pub fn build(&self, grid: &RadialGrid) -> Result<RadialWeight, DiagnosticsError> {
        match self {
            WeightSpec::Quadratic => Ok(RadialWeight::quadratic(grid)),
            WeightSpec::CutoffChi { radius, c } => make_cutoff_chi(grid, *radius, *c),
        }
    }
}

/// A radial weight sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialWeight {
    pub kind: WeightKind,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    pub lap: Vec<f64>,
    pub bilap: Vec<f64>,
}

impl RadialWeight {
    /// Build from `r -> [phi, phi', phi'', phi''', phi'''']`.
    pub fn from_derivatives(grid: &RadialGrid, kind: WeightKind, f: impl Fn(f64) -> [f64; 5]) -> Self {
        let d = grid.d as f64;
        let n = grid.n;
        let mut w = RadialWeight {
            kind,
            phi: Vec::with_capacity(n),
            dphi: Vec::with_capacity(n),
            d2phi: Vec::with_capacity(n),
            lap: Vec::with_capacity(n),
            bilap: Vec::with_capacity(n),
        };
        for &r in &grid.r {
            let [p0, p1, p2, p3, p4] = f(r);
            w.phi.push(p0);
            w.dphi.push(p1);
            w.d2phi.push(p2);
            w.lap.push(p2 + (d - 1.0) * p1 / r);
            w.bilap.push(
                p4 + 2.0 * (d - 1.0) * p3 / r + (d - 1.0) * (d - 3.0) * p2 / (r * r)
                    - (d - 1.0) * (d - 3.0) * p1 / (r * r * r),
            );
        }
        w
    }

    /// `phi = r^2`.
    pub fn quadratic(grid: &RadialGrid) -> Self {
        let d = grid.d as f64;
        let mut w = Self::from_derivatives(grid, WeightKind::Quadratic, |r| [r * r, 2.0 * r, 2.0, 0.0, 0.0]);
        // exact values rather than the roundoff of the generic formula
        w.lap.iter_mut().for_each(|x| *x = 2.0 * d);
        w.bilap.iter_mut().for_each(|x| *x = 0.0);
        w
    }

    pub fn custom(grid: &RadialGrid, name: &str, f: impl Fn(f64) -> [f64; 5]) -> Self {
        Self::from_derivatives(grid, WeightKind::Custom { name: name.to_string() }, f)
    }
}

// Septic smoothstep: S(0)=0, S(1)=1, first three derivatives vanish at both ends.
fn smooth(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    [
        s4 * (35.0 - 84.0 * s + 70.0 * s2 - 20.0 * s3),
        s3 * (140.0 - 420.0 * s + 420.0 * s2 - 140.0 * s3),
        s2 * (420.0 - 1680.0 * s + 2100.0 * s2 - 840.0 * s3),
        s * (840.0 - 5040.0 * s + 8400.0 * s2 - 4200.0 * s3),
    ]
}

// Antiderivatives of S and s*S vanishing at 0.
fn smooth_i0(s: f64) -> f64 {
    s.powi(5) * (7.0 - 14.0 * s + 10.0 * s * s - 2.5 * s.powi(3))
}

fn smooth_i1(s: f64) -> f64 {
    s.powi(6) * (35.0 / 6.0 - 12.0 * s + 35.0 / 4.0 * s * s - 20.0 / 9.0 * s.powi(3))
}

/// Plateau constant `c` produced by a transition starting at `rho` (units of `R = 1`).
fn plateau_for(rho: f64) -> f64 {
    let l = 3.0 - rho;
    rho * rho + l * rho + 2.0 * l * l * (0.5 - smooth_i1(1.0))
}

/// Cutoff weight `chi_R`: `r^2` up to `rho >= R`, then `phi' = 2r(1 - S((r - rho)/L))`
/// on `[rho, 3R]`, constant `c R^2` beyond.
pub fn make_cutoff_chi(grid: &RadialGrid, radius: f64, c: f64) -> Result<RadialWeight, DiagnosticsError> {
    let limit = grid.r_max / 3.0;
    if !(radius > 0.0 && radius < limit) {
        return Err(DiagnosticsError::CutoffRadius { radius, limit });
    }
    let mut tried = Vec::new();
    let mut candidates = vec![c];
    candidates.extend((0..9).map(|i| 5.0 + 0.5 * i as f64).filter(|x| *x != c));
    for cc in candidates {
        match cutoff_attempt(grid, radius, cc) {
            Ok(w) => return Ok(w),
            Err(e) => tried.push(format!("c={cc}: {e}")),
        }
    }
    if !(c > plateau_for(1.0) && c < 9.0) {
        return Err(DiagnosticsError::CutoffConstant(c));
    }
    Err(DiagnosticsError::CutoffConstraint(tried.join("; ")))
}

fn cutoff_attempt(grid: &RadialGrid, radius: f64, c: f64) -> Result<RadialWeight, String> {
    let (lo_c, hi_c) = (plateau_for(1.0), 9.0);
    if !(c > lo_c && c < hi_c) {
        return Err(format!("plateau outside ({lo_c:.4}, 9)"));
    }
    // plateau_for is increasing in rho on [1, 3]
    let (mut a, mut b) = (1.0, 3.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if plateau_for(m) < c {
            a = m;
        } else {
            b = m;
        }
    }
    let rho = 0.5 * (a + b) * radius;
    let l = 3.0 * radius - rho;
    let plateau = c * radius * radius;
    let f = move |r: f64| -> [f64; 5] {
        if r <= rho {
            [r * r, 2.0 * r, 2.0, 0.0, 0.0]
        } else if r >= 3.0 * radius {
            [plateau, 0.0, 0.0, 0.0, 0.0]
        } else {
            let s = (r - rho) / l;
            let [s0, s1, s2, s3] = smooth(s);
            let phi = rho * rho + 2.0 * l * (rho * (s - smooth_i0(s)) + l * (0.5 * s * s - smooth_i1(s)));
            let p1 = 2.0 * r * (1.0 - s0);
            let p2 = 2.0 * (1.0 - s0) - 2.0 * r * s1 / l;
            let p3 = -4.0 * s1 / l - 2.0 * r * s2 / (l * l);
            let p4 = -6.0 * s2 / (l * l) - 2.0 * r * s3 / (l * l * l);
            [phi, p1, p2, p3, p4]
        }
    };
    let d = grid.d as f64;
    let mut w = RadialWeight::from_derivatives(grid, WeightKind::Quadratic, f);
    let mut bound: f64 = 0.0;
    for j in 0..grid.n {
        let r = grid.r[j];
        if r <= rho {
            w.lap[j] = 2.0 * d;
            w.bilap[j] = 0.0;
        }
        if w.d2phi[j] > 2.0 + 1e-12 {
            return Err(format!("phi'' = {} > 2 at r = {r}", w.d2phi[j]));
        }
        if w.dphi[j] < -1e-12 || w.dphi[j] > 2.0 * r + 1e-12 {
            return Err(format!("phi' = {} outside [0, 2r] at r = {r}", w.dphi[j]));
        }
        if r >= radius {
            bound = bound.max(w.lap[j].abs()).max(radius * radius * w.bilap[j].abs());
        }
    }
    w.kind = WeightKind::CutoffChi {
        radius,
        c,
        rho,
        bound,
    };
    Ok(w)
}

/// `int phi sum_k (alpha_k^2/gamma_k) |u_k|^2`.
pub fn virial_v(grid: &RadialGrid, params: &SystemParams, w: &RadialWeight, state: &RadialState) -> f64 {
    let mut s = 0.0;
    for (k, c) in state.u.iter().enumerate() {
        let coef = params.alpha[k] * params.alpha[k] / params.gamma[k];
        let m: f64 = (0..grid.n).map(|j| grid.w[j] * w.phi[j] * c[j].norm_sqr()).sum();
        s += coef * m;
    }
    s
}

/// `2 sum_k alpha_k Im int phi' d_r u_k conj(u_k)`, with `phi'` and `d_r u` taken
/// as differences across each face so that it is the exact time derivative of
/// the discrete `V` under the linear flow.
pub fn virial_vprime(grid: &RadialGrid, params: &SystemParams, w: &RadialWeight, state: &RadialState) -> f64 {
    let n = grid.n;
    let mut s = 0.0;
    for (k, c) in state.u.iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..n - 1 {
            let dphi = (w.phi[j + 1] - w.phi[j]) / grid.h;
            acc += grid.face[j] * dphi * (c[j + 1] * c[j].conj()).im;
        }
        s += 2.0 * params.alpha[k] * grid.omega * acc;
    }
    s
}

/// Morawetz quantity; the same integrand as [`virial_vprime`].
pub fn morawetz_r(grid: &RadialGrid, params: &SystemParams, w: &RadialWeight, state: &RadialState) -> f64 {
    virial_vprime(grid, params, w, state)
}

/// `4 int phi'' sum gamma_k |d_r u_k|^2 - int Lap^2 phi sum gamma_k |u_k|^2 - 8/(d-2) Re int Lap phi F(u)`.
pub fn morawetz_rprime_formula(
    grid: &RadialGrid,
    params: &SystemParams,
    nl: &Nonlinearity,
    w: &RadialWeight,
    state: &RadialState,
) -> f64 {
    let n = grid.n;
    let mut hess = 0.0;
    let mut bil = 0.0;
    for (k, c) in state.u.iter().enumerate() {
        let g = grid.gradient_density(c);
        let gam = params.gamma[k];
        for j in 0..n {
            hess += gam * grid.w[j] * w.d2phi[j] * g[j];
            bil += gam * grid.w[j] * w.bilap[j] * c[j].norm_sqr();
        }
    }
    let f = potential_energy_density(nl, state);
    let pot: f64 = (0..n).map(|j| grid.w[j] * w.lap[j] * f[j]).sum();
    4.0 * hess - bil - 8.0 / (params.d as f64 - 2.0) * pot
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// `max |FD dV/dt - V'| / max |V'|` over interior samples.
    pub v_deviation: f64,
    pub r_deviation: f64,
    pub samples: usize,
}

fn relative_fd_deviation(t: &[f64], x: &[f64], formula: &[f64]) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in 1..t.len() - 1 {
        let fd = (x[i + 1] - x[i - 1]) / (t[i + 1] - t[i - 1]);
        num = num.max((fd - formula[i]).abs());
        den = den.max(formula[i].abs());
    }
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Centered differences of `V` and `R` against their recorded formulas.
pub fn consistency_series(
    t: &[f64],
    v: &[f64],
    vprime: &[f64],
    r: &[f64],
    rprime: &[f64],
) -> Result<ConsistencyReport, DiagnosticsError> {
    let n = t.len();
    if n < 5 || [v.len(), vprime.len(), r.len(), rprime.len()].iter().any(|&m| m != n) {
        return Err(DiagnosticsError::TooFewSamples(n.min(v.len())));
    }
    let step = t[1] - t[0];
    for p in t.windows(2) {
        let s = p[1] - p[0];
        if (s - step).abs() > 1e-9 * step.abs().max(1e-300) {
            return Err(DiagnosticsError::NonUniform { first: step, other: s });
        }
    }
    Ok(ConsistencyReport {
        v_deviation: relative_fd_deviation(t, v, vprime),
        r_deviation: relative_fd_deviation(t, r, rprime),
        samples: n,
    })
}

/// [`consistency_series`] over the scheduled rows of a trajectory.
///
/// The final row is dropped when it breaks the cadence (horizon not a
/// multiple of the record interval).
pub fn consistency_report(rows: &[TrajectoryRow]) -> Result<ConsistencyReport, DiagnosticsError> {
    let mut rows: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.scheduled).collect();
    if rows.len() >= 3 {
        let a = rows[1].t - rows[0].t;
        let n = rows.len();
        let b = rows[n - 1].t - rows[n - 2].t;
        if (a - b).abs() > 1e-9 * a.abs() {
            rows.pop();
        }
    }
    let col = |f: fn(&TrajectoryRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    consistency_series(
        &col(|r| r.t),
        &col(|r| r.V),
        &col(|r| r.Vprime_formula),
        &col(|r| r.R),
        &col(|r| r.Rprime_formula),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringIndicators {
    /// Trapezoidal `int ||u_k||_{L^s}^s dt` per component, `s = 2(d+2)/(d-2)`.
    pub s_norm: Vec<f64>,
    /// Running total of `s_norm` summed over components at each scheduled record.
    pub s_accumulated: Vec<(f64, f64)>,
    pub p_peak: f64,
    pub p_final: f64,
    /// `p_peak / p_final`; `None` when there is no positive peak.
    pub p_decay_ratio: Option<f64>,
    pub no_peak: bool,
    /// `min_t (K(psi) - K(u(t)))` over all records.
    pub trapping_margin: f64,
    /// `||u(T) - U(T - t0) u(t0)|| / ||u(T)||` with `t0` the start of the tail window.
    pub free_flow_deviation: Option<f64>,
    pub tail_start: Option<f64>,
    pub completed: bool,
}

pub fn scattering_indicators(ev: &Evolver, traj: &Trajectory, kpsi: f64) -> ScatteringIndicators {
    let rows: Vec<&TrajectoryRow> = traj.scheduled_rows().collect();
    let l = rows.first().map_or(0, |r| r.s_density.len());
    let mut s_norm = vec![0.0; l];
    let mut s_accumulated = Vec::with_capacity(rows.len());
    if let Some(first) = rows.first() {
        s_accumulated.push((first.t, 0.0));
    }
    for p in rows.windows(2) {
        let dt = p[1].t - p[0].t;
        for k in 0..l {
            s_norm[k] += 0.5 * dt * (p[0].s_density[k] + p[1].s_density[k]);
        }
        s_accumulated.push((p[1].t, s_norm.iter().sum()));
    }
    let p_peak = rows.iter().map(|r| r.record.P).fold(f64::NEG_INFINITY, f64::max);
    let p_peak = if p_peak.is_finite() { p_peak } else { 0.0 };
    let p_final = rows.last().map_or(0.0, |r| r.record.P);
    let no_peak = p_peak <= 0.0;
    let p_decay_ratio = if no_peak {
        None
    } else if p_final > 0.0 {
        Some(p_peak / p_final)
    } else {
        Some(f64::MAX)
    };
    let trapping_margin = traj
        .rows
        .iter()
        .map(|r| kpsi - r.record.K)
        .fold(f64::INFINITY, f64::min);
    let completed = matches!(traj.verdict, Verdict::Completed { .. });
    let (free_flow_deviation, tail_start) = match (&traj.tail_anchor, completed) {
        (Some(anchor), true) => {
            let dur = traj.final_state.t - anchor.t;
            let dev = if dur > 0.0 {
                ev.free_flow(anchor, dur, 0.01).ok().map(|free| {
                    let nrm = traj.final_state.norm(ev.grid);
                    let dist = traj.final_state.distance(&free, ev.grid);
                    if nrm > 0.0 {
                        dist / nrm
                    } else {
                        0.0
                    }
                })
            } else {
                Some(0.0)
            };
            (dev, Some(anchor.t))
        }
        _ => (None, None),
    };
    ScatteringIndicators {
        s_norm,
        s_accumulated,
        p_peak,
        p_final,
        p_decay_ratio,
        no_peak,
        trapping_margin: if trapping_margin.is_finite() { trapping_margin } else { kpsi },
        free_flow_deviation,
        tail_start,
        completed,
    }
}
