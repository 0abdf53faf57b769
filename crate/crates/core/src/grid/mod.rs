//! Radial discretization of R^d: half-offset nodes, shell-volume quadrature,
//! a flux-form Laplacian and the energy functionals.

pub mod snapshot;

use crate::linalg::Field;
use crate::model::{Nonlinearity, SystemParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("dimension d={0} outside 3..=6")]
    Dimension(usize),
    #[error("node count N={0} below 16")]
    TooFewNodes(usize),
    #[error("r_max={0} must be positive and finite")]
    Radius(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("state is poisoned (non-finite sample in component {component} at node {node})")]
    Poisoned { component: usize, node: usize },
    #[error("state shape {got_l}x{got_n} does not match {want_l}x{want_n}")]
    Shape {
        got_l: usize,
        got_n: usize,
        want_l: usize,
        want_n: usize,
    },
}

/// Grid size descriptor used in configuration files and sidecars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub r_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: 2048,
            r_max: 100.0,
        }
    }
}

/// Nodes `r_j = (j + 1/2) h`, `h = r_max / N`.
///
/// The quadrature weight of node `j` is the exact volume of the shell
/// `jh <= |x| < (j+1)h`, and `face[j]` is `((j+1)h)^(d-1)`, the area factor of
/// the sphere between nodes `j` and `j+1` (without the sphere constant).
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub d: usize,
    pub n: usize,
    pub r_max: f64,
    pub h: f64,
    /// Surface area of the unit sphere in R^d.
    pub omega: f64,
    pub r: Vec<f64>,
    /// `((j+1)^d - j^d) h^d / d`.
    pub shell: Vec<f64>,
    pub face: Vec<f64>,
    /// `omega * shell`.
    pub w: Vec<f64>,
}

pub fn sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half)
}

pub fn make_grid(d: usize, n: usize, r_max: f64) -> Result<RadialGrid, GridError> {
    if !(3..=6).contains(&d) {
        return Err(GridError::Dimension(d));
    }
    if n < 16 {
        return Err(GridError::TooFewNodes(n));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(GridError::Radius(r_max));
    }
    let h = r_max / n as f64;
    let omega = sphere_area(d);
    let di = d as i32;
    let r: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * h).collect();
    let shell: Vec<f64> = (0..n)
        .map(|j| {
            let (a, b) = (j as f64, j as f64 + 1.0);
            (b.powi(di) - a.powi(di)) * h.powi(di) / d as f64
        })
        .collect();
    let face: Vec<f64> = (0..n).map(|j| ((j as f64 + 1.0) * h).powi(di - 1)).collect();
    let w = shell.iter().map(|v| omega * v).collect();
    Ok(RadialGrid {
        d,
        n,
        r_max,
        h,
        omega,
        r,
        shell,
        face,
        w,
    })
}

impl RadialGrid {
    pub fn from_spec(d: usize, spec: GridSpec) -> Result<Self, GridError> {
        make_grid(d, spec.n, spec.r_max)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n: self.n,
            r_max: self.r_max,
        }
    }

    /// Coefficients of the discrete Laplacian, row `j`:
    /// `(Lap v)_j = lower[j] v_{j-1} + diag[j] v_j + upper[j] v_{j+1}`.
    pub fn laplacian_bands(&self) -> LaplacianBands {
        let n = self.n;
        let h = self.h;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 0..n {
            let s = h * self.shell[j];
            let a_out = self.face[j];
            let a_in = if j > 0 { self.face[j - 1] } else { 0.0 };
            diag[j] = -(a_out + a_in) / s;
            if j + 1 < n {
                upper[j] = a_out / s;
            }
            if j > 0 {
                lower[j] = a_in / s;
            }
        }
        LaplacianBands { lower, diag, upper }
    }

    pub fn integrate(&self, s: &[f64]) -> f64 {
        self.w.iter().zip(s).map(|(w, x)| w * x).sum()
    }

    /// `sum_j w_j |v_j|^2`.
    pub fn norm2<T: Field>(&self, v: &[T]) -> f64 {
        self.w
            .iter()
            .zip(v)
            .map(|(w, x)| w * x.magnitude().powi(2))
            .sum()
    }

    /// `sum_faces omega A_f |v_{j+1} - v_j|^2 / h`, with `v_N = 0`; equals `-<Lap v, v>_w`.
    pub fn dirichlet_energy<T: Field>(&self, v: &[T]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for j in 0..n {
            let next = if j + 1 < n { v[j + 1] } else { T::zero() };
            s += self.face[j] * (next - v[j]).magnitude().powi(2);
        }
        self.omega * s / self.h
    }

    /// Bilinear form of `dirichlet_energy` for real vectors.
    pub fn dirichlet_product(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for j in 0..n {
            let (an, bn) = if j + 1 < n { (a[j + 1], b[j + 1]) } else { (0.0, 0.0) };
            s += self.face[j] * (an - a[j]) * (bn - b[j]);
        }
        self.omega * s / self.h
    }

    /// Node density of `|d_r v|^2` whose quadrature equals `dirichlet_energy`:
    /// each interior face is shared equally by its two nodes, the wall face
    /// belongs to the last node.
    pub fn gradient_density<T: Field>(&self, v: &[T]) -> Vec<f64> {
        let n = self.n;
        let mut share = vec![0.0; n];
        for j in 0..n {
            let next = if j + 1 < n { v[j + 1] } else { T::zero() };
            let e = self.face[j] * (next - v[j]).magnitude().powi(2) / self.h;
            if j + 1 < n {
                share[j] += 0.5 * e;
                share[j + 1] += 0.5 * e;
            } else {
                share[j] += e;
            }
        }
        share
            .iter()
            .zip(&self.shell)
            .map(|(s, v)| s / v)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBands {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LaplacianBands {
    pub fn apply<T: Field>(&self, v: &[T]) -> Vec<T> {
        let n = self.diag.len();
        (0..n)
            .map(|j| {
                let mut s = v[j] * self.diag[j];
                if j > 0 {
                    s = s + v[j - 1] * self.lower[j];
                }
                if j + 1 < n {
                    s = s + v[j + 1] * self.upper[j];
                }
                s
            })
            .collect()
    }
}

/// Flux-form radial Laplacian with reflection at the origin and `v_N = 0`.
pub fn laplacian_apply<T: Field>(grid: &RadialGrid, v: &[T]) -> Vec<T> {
    grid.laplacian_bands().apply(v)
}

pub fn integrate(grid: &RadialGrid, s: &[f64]) -> f64 {
    grid.integrate(s)
}

/// Centered differences inside, second-order one-sided at both ends.
pub fn radial_derivative<T: Field>(grid: &RadialGrid, v: &[T]) -> Vec<T> {
    let n = grid.n;
    let inv2h = 1.0 / (2.0 * grid.h);
    let mut out = vec![T::zero(); n];
    out[0] = (v[1] * 4.0 - v[0] * 3.0 - v[2]) * inv2h;
    for j in 1..n - 1 {
        out[j] = (v[j + 1] - v[j - 1]) * inv2h;
    }
    out[n - 1] = (v[n - 1] * 3.0 - v[n - 2] * 4.0 + v[n - 3]) * inv2h;
    out
}

/// An `l`-component complex field sampled on the grid nodes at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialState {
    pub t: f64,
    pub u: Vec<Vec<Complex64>>,
}

impl RadialState {
    pub fn zeros(l: usize, n: usize) -> Self {
        RadialState {
            t: 0.0,
            u: vec![vec![Complex64::new(0.0, 0.0); n]; l],
        }
    }

    pub fn from_real(t: f64, fields: &[Vec<f64>]) -> Self {
        RadialState {
            t,
            u: fields
                .iter()
                .map(|f| f.iter().map(|&x| Complex64::new(x, 0.0)).collect())
                .collect(),
        }
    }

    pub fn l(&self) -> usize {
        self.u.len()
    }

    pub fn n(&self) -> usize {
        self.u.first().map_or(0, |c| c.len())
    }

    pub fn check_shape(&self, l: usize, n: usize) -> Result<(), StateError> {
        if self.l() != l || self.u.iter().any(|c| c.len() != n) {
            return Err(StateError::Shape {
                got_l: self.l(),
                got_n: self.n(),
                want_l: l,
                want_n: n,
            });
        }
        Ok(())
    }

    /// First non-finite sample, if any.
    pub fn poison(&self) -> Option<StateError> {
        for (k, c) in self.u.iter().enumerate() {
            if let Some(j) = c.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Some(StateError::Poisoned { component: k, node: j });
            }
        }
        None
    }

    pub fn is_poisoned(&self) -> bool {
        self.poison().is_some()
    }

    /// The `l`-vector of samples at node `j`.
    pub fn node(&self, j: usize) -> Vec<Complex64> {
        self.u.iter().map(|c| c[j]).collect()
    }

    pub fn max_amp(&self) -> f64 {
        self.u
            .iter()
            .flat_map(|c| c.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        RadialState {
            t: self.t,
            u: self
                .u
                .iter()
                .map(|c| c.iter().map(|z| z * s).collect())
                .collect(),
        }
    }

    /// Weighted L^2 norm of the whole field.
    pub fn norm(&self, grid: &RadialGrid) -> f64 {
        self.u.iter().map(|c| grid.norm2(c)).sum::<f64>().sqrt()
    }

    /// Weighted L^2 norm of `self - other`.
    pub fn distance(&self, other: &RadialState, grid: &RadialGrid) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .map(|(a, b)| {
                let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                grid.norm2(&diff)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// One evaluation of the conserved and auxiliary functionals.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub t: f64,
    pub M: f64,
    pub E: f64,
    pub K: f64,
    pub L: f64,
    pub P: f64,
    pub Ecrit: f64,
    pub tau: f64,
    /// Mass computed with `sigma_k = 1` because no sigma was declared.
    pub sigma_defaulted: bool,
}

/// `Re F(u(r_j))` at every node.
pub fn potential_energy_density(nl: &Nonlinearity, state: &RadialState) -> Vec<f64> {
    let n = state.n();
    let mut z = vec![Complex64::new(0.0, 0.0); state.l()];
    (0..n)
        .map(|j| {
            for (k, c) in state.u.iter().enumerate() {
                z[k] = c[j];
            }
            nl.f_at(&z).re
        })
        .collect()
}

/// `Re sum_j w_j F(u(r_j))`.
pub fn potential_energy(grid: &RadialGrid, nl: &Nonlinearity, state: &RadialState) -> f64 {
    grid.integrate(&potential_energy_density(nl, state))
}

pub fn kinetic_energy(grid: &RadialGrid, params: &SystemParams, state: &RadialState) -> f64 {
    state
        .u
        .iter()
        .zip(&params.gamma)
        .map(|(c, g)| g * grid.dirichlet_energy(c))
        .sum()
}

#[allow(non_snake_case)]
pub fn functionals(
    grid: &RadialGrid,
    params: &SystemParams,
    nl: &Nonlinearity,
    state: &RadialState,
) -> Result<FunctionalRecord, StateError> {
    state.check_shape(params.l, grid.n)?;
    if let Some(e) = state.poison() {
        return Err(e);
    }
    let sigma_defaulted = params.sigma.is_none();
    let mut M = 0.0;
    let mut L = 0.0;
    for k in 0..params.l {
        let m2 = grid.norm2(&state.u[k]);
        let s = params.sigma.as_ref().map_or(1.0, |s| s[k]);
        M += s * params.alpha[k] / 2.0 * m2;
        L += params.beta[k] * m2;
    }
    let K = kinetic_energy(grid, params, state);
    let P = potential_energy(grid, nl, state);
    let q = params.q_crit();
    Ok(FunctionalRecord {
        t: state.t,
        M,
        E: K + L - 2.0 * P,
        K,
        L,
        P,
        Ecrit: K - 2.0 * P,
        tau: K - q * P,
        sigma_defaulted,
    })
}
