//! Exact and sampled checks of the structural hypotheses on `F`.

use super::potential::{derive_all, NonlinearTerm, PotentialF, SystemParams};
use super::term::eval_terms;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub z: Vec<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum Status {
    Proven {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    SampledPass {
        max_residual: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Failed {
        witness: Witness,
        residual: f64,
    },
    NotCheckable {
        reason: String,
    },
}

impl Status {
    pub fn passed(&self) -> bool {
        matches!(self, Status::Proven { .. } | Status::SampledPass { .. })
    }

    pub fn failed(&self) -> bool {
        matches!(self, Status::Failed { .. })
    }

    fn proven() -> Self {
        Status::Proven { note: None }
    }

    fn proven_note(s: &str) -> Self {
        Status::Proven {
            note: Some(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub d: usize,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub sigma_used: Vec<f64>,
    pub sigma_defaulted: bool,
    pub h1: Status,
    pub h2: Status,
    pub h3: Status,
    pub h4: Status,
    pub h5: Status,
    pub h6: Status,
    pub h7: Status,
    pub h8: Status,
    pub gauge: Status,
    pub mass_resonance: Status,
}

impl HypothesisReport {
    pub fn entries(&self) -> [(&'static str, &Status); 10] {
        [
            ("H1", &self.h1),
            ("H2", &self.h2),
            ("H3", &self.h3),
            ("H4", &self.h4),
            ("H5", &self.h5),
            ("H6", &self.h6),
            ("H7", &self.h7),
            ("H8", &self.h8),
            ("gauge", &self.gauge),
            ("mass_resonance", &self.mass_resonance),
        ]
    }

    /// Every listed check passed (Proven or SampledPass).
    pub fn all_pass(&self, names: &[&str]) -> bool {
        self.entries()
            .iter()
            .filter(|(n, _)| names.contains(n))
            .all(|(_, s)| s.passed())
    }

    /// Preconditions of the ground-state solver.
    pub fn ground_state_ready(&self) -> bool {
        self.all_pass(&["H1", "H3", "H5", "H7"])
    }
}

/// Independent, reproducible sample stream for one named check.
pub(crate) fn sampler(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard complex Gaussian vector: real and imaginary parts are N(0, 1/2).
pub fn complex_gaussian<R: Rng>(rng: &mut R, l: usize) -> Vec<Complex64> {
    let nd = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal");
    (0..l)
        .map(|_| Complex64::new(nd.sample(rng), nd.sample(rng)))
        .collect()
}

fn real_gaussian<R: Rng>(rng: &mut R, l: usize) -> Vec<f64> {
    let nd = Normal::new(0.0, 1.0).expect("valid normal");
    (0..l).map(|_| nd.sample(rng)).collect()
}

fn to_complex(y: &[f64]) -> Vec<Complex64> {
    y.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Running maximum of a residual together with the point that produced it.
struct Worst {
    residual: f64,
    witness: Option<Witness>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            residual: 0.0,
            witness: None,
        }
    }

    fn offer(&mut self, r: f64, z: &[Complex64], theta: Option<f64>) {
        // NaN counts as a violation.
        if r > self.residual || (r.is_nan() && !self.residual.is_nan()) {
            self.residual = r;
            self.witness = Some(Witness {
                z: z.to_vec(),
                theta,
            });
        }
    }

    fn status(self, tol: f64, note: Option<&str>) -> Status {
        if self.residual <= tol {
            Status::SampledPass {
                max_residual: self.residual,
                note: note.map(str::to_string),
            }
        } else {
            Status::Failed {
                witness: self.witness.expect("a violation has a witness"),
                residual: self.residual,
            }
        }
    }
}

const STREAM_H2: u64 = 2;
const STREAM_H4: u64 = 4;
const STREAM_H5: u64 = 5;
const STREAM_H6: u64 = 6;
const STREAM_H7: u64 = 7;
const STREAM_H8: u64 = 8;
const STREAM_GAUGE: u64 = 9;
const STREAM_RESONANCE: u64 = 10;

/// `|Im sum_k w_k f_k(z) conj(z_k)|`.
fn weighted_imag_pairing(fk: &[NonlinearTerm], w: &[f64], z: &[Complex64]) -> f64 {
    fk.iter()
        .zip(w)
        .map(|(f, &wk)| wk * f.eval(z) * z[f.k].conj())
        .sum::<Complex64>()
        .im
        .abs()
}

pub fn check_hypotheses(
    f: &PotentialF,
    params: &SystemParams,
    samples: usize,
    seed: u64,
    tol: f64,
) -> HypothesisReport {
    assert!(samples >= 1 && tol > 0.0, "samples >= 1 and tol > 0 required");
    let l = f.l;
    let fk = derive_all(f);
    let q = params.q_crit();

    let zero = vec![Complex64::new(0.0, 0.0); l];
    let h1 = if fk.iter().all(|g| g.eval(&zero) == Complex64::new(0.0, 0.0)) {
        Status::proven()
    } else {
        let r = fk.iter().map(|g| g.eval(&zero).norm()).fold(0.0, f64::max);
        Status::Failed {
            witness: Witness { z: zero.clone(), theta: None },
            residual: r,
        }
    };

    let degrees_ok = f.terms.iter().all(|t| (t.degree() - q).abs() <= 1e-12);
    let modulus_ok = f
        .terms
        .iter()
        .all(|t| t.a.iter().all(|&a| a == 0.0 || a >= 1.0));
    let h5 = if degrees_ok {
        Status::proven()
    } else {
        let mut rng = sampler(seed, STREAM_H5);
        let mut worst = Worst::new();
        for _ in 0..samples {
            let z = complex_gaussian(&mut rng, l);
            let z2: Vec<Complex64> = z.iter().map(|c| c * 2.0).collect();
            let r = (f.eval(&z2) - 2f64.powf(q) * f.eval(&z)).norm();
            worst.offer(r, &z, None);
        }
        match worst.witness {
            Some(w) => Status::Failed {
                witness: w,
                residual: worst.residual,
            },
            None => Status::Failed {
                witness: Witness { z: zero.clone(), theta: None },
                residual: 0.0,
            },
        }
    };

    let h2 = if degrees_ok && modulus_ok {
        Status::proven_note("homogeneous finite term list")
    } else {
        h2_sampled(&fk, params.d, samples, seed)
    };

    let h3 = Status::proven_note("f_k derived from F");

    let sigma_defaulted = params.sigma.is_none();
    let sigma_used = params.sigma_or_default();
    let h4 = {
        let mut rng = sampler(seed, STREAM_H4);
        let mut worst = Worst::new();
        for _ in 0..samples {
            let z = complex_gaussian(&mut rng, l);
            worst.offer(weighted_imag_pairing(&fk, &sigma_used, &z), &z, None);
        }
        let st = worst.status(tol, None);
        if sigma_defaulted && st.failed() {
            Status::NotCheckable {
                reason: "sigma not declared and the default alpha/gamma does not satisfy the identity"
                    .into(),
            }
        } else {
            st
        }
    };

    let h6 = {
        let mut rng = sampler(seed, STREAM_H6);
        let mut worst = Worst::new();
        for _ in 0..samples {
            let z = complex_gaussian(&mut rng, l);
            let absz: Vec<Complex64> = z.iter().map(|c| Complex64::new(c.norm(), 0.0)).collect();
            let lhs = f.eval(&z).re.abs();
            let rhs = f.eval(&absz).re;
            worst.offer(lhs - rhs, &z, None);
        }
        worst.status(tol, Some("pointwise sufficient condition |Re F(z)| <= F(|z|)"))
    };

    let h7 = {
        let mut rng = sampler(seed, STREAM_H7);
        let mut worst = Worst::new();
        for _ in 0..samples {
            let y = to_complex(&real_gaussian(&mut rng, l));
            worst.offer(f.eval(&y).im.abs(), &y, None);
            let ypos: Vec<Complex64> = y.iter().map(|c| Complex64::new(c.re.abs(), 0.0)).collect();
            for g in &fk {
                let v = g.eval(&ypos);
                worst.offer((-v.re).max(v.im.abs()), &ypos, None);
            }
        }
        worst.status(tol, None)
    };

    let h8 = if l == 1 {
        Status::proven_note("vacuous for one component")
    } else {
        let mut rng = sampler(seed, STREAM_H8);
        let mut worst = Worst::new();
        for _ in 0..samples {
            let y: Vec<f64> = real_gaussian(&mut rng, l).iter().map(|x| x.abs()).collect();
            let i = rng.random_range(0..l);
            let mut j = rng.random_range(0..l - 1);
            if j >= i {
                j += 1;
            }
            let h: f64 = real_gaussian(&mut rng, 1)[0].abs();
            let k: f64 = real_gaussian(&mut rng, 1)[0].abs();
            let shift = |di: f64, dj: f64| {
                let mut v = y.clone();
                v[i] += di;
                v[j] += dj;
                f.eval(&to_complex(&v)).re
            };
            let diff = shift(h, k) + shift(0.0, 0.0) - shift(h, 0.0) - shift(0.0, k);
            worst.offer(-diff, &to_complex(&y), None);
        }
        worst.status(tol, Some("summed inequality only; no decomposition reconstructed"))
    };

    let gauge = {
        let g = check_gauge(f, &sigma_used, samples, seed, tol);
        if sigma_defaulted && g.failed() {
            Status::NotCheckable {
                reason: "sigma not declared and the default alpha/gamma is not a gauge".into(),
            }
        } else {
            g
        }
    };

    let mr = check_mass_resonance(f, params, samples, seed, tol);
    let mass_resonance = if mr.holds {
        Status::SampledPass {
            max_residual: mr.max_residual,
            note: None,
        }
    } else {
        Status::Failed {
            witness: mr.witness.expect("violation has a witness"),
            residual: mr.max_residual,
        }
    };

    HypothesisReport {
        d: params.d,
        seed,
        samples,
        tol,
        sigma_used,
        sigma_defaulted,
        h1,
        h2,
        h3,
        h4,
        h5,
        h6,
        h7,
        h8,
        gauge,
        mass_resonance,
    }
}

/// Sampled Holder quotient for the Wirtinger derivatives of `f_k`; reports
/// the largest observed constant.
fn h2_sampled(fk: &[NonlinearTerm], d: usize, samples: usize, seed: u64) -> Status {
    let l = fk.len();
    let expo = 4.0 / (d as f64 - 2.0);
    let derivs: Vec<Vec<_>> = fk
        .iter()
        .map(|g| (0..l).flat_map(|m| [g.d_dz(m), g.d_dzbar(m)]).collect())
        .collect();
    let mut rng = sampler(seed, STREAM_H2);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let z = complex_gaussian(&mut rng, l);
        let w = complex_gaussian(&mut rng, l);
        let denom: f64 = z.iter().zip(&w).map(|(a, b)| (a - b).norm().powf(expo)).sum();
        if denom == 0.0 {
            continue;
        }
        for per_k in &derivs {
            let num: f64 = per_k
                .iter()
                .map(|t| (eval_terms(t, &z) - eval_terms(t, &w)).norm())
                .sum();
            worst = worst.max(num / denom);
        }
    }
    Status::SampledPass {
        max_residual: worst,
        note: Some("largest sampled Holder quotient; F is not a homogeneous term list".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassResonance {
    pub holds: bool,
    pub max_residual: f64,
    pub witness: Option<Witness>,
}

/// Samples `|Im sum_k alpha_k/(2 gamma_k) f_k(z) conj(z_k)|`.
pub fn check_mass_resonance(
    f: &PotentialF,
    params: &SystemParams,
    samples: usize,
    seed: u64,
    tol: f64,
) -> MassResonance {
    let fk = derive_all(f);
    let w: Vec<f64> = (0..f.l)
        .map(|k| params.alpha[k] / (2.0 * params.gamma[k]))
        .collect();
    let mut rng = sampler(seed, STREAM_RESONANCE);
    let mut worst = Worst::new();
    for _ in 0..samples {
        let z = complex_gaussian(&mut rng, f.l);
        worst.offer(weighted_imag_pairing(&fk, &w, &z), &z, None);
    }
    MassResonance {
        holds: worst.residual <= tol,
        max_residual: worst.residual,
        witness: worst.witness,
    }
}

/// Samples `|f_k(e^{i sigma theta/2} z) - e^{i sigma_k theta/2} f_k(z)|` over `(z, theta)`.
pub fn check_gauge(f: &PotentialF, sigma: &[f64], samples: usize, seed: u64, tol: f64) -> Status {
    let fk = derive_all(f);
    let mut rng = sampler(seed, STREAM_GAUGE);
    let mut worst = Worst::new();
    for _ in 0..samples {
        let z = complex_gaussian(&mut rng, f.l);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        worst.offer(gauge_residual(&fk, sigma, &z, theta), &z, Some(theta));
    }
    worst.status(tol, None)
}

/// Gauge residual at one point, maximized over components.
pub fn gauge_residual(fk: &[NonlinearTerm], sigma: &[f64], z: &[Complex64], theta: f64) -> f64 {
    let rot = |k: usize| Complex64::from_polar(1.0, sigma[k] * theta / 2.0);
    let zr: Vec<Complex64> = z.iter().enumerate().map(|(k, c)| rot(k) * c).collect();
    fk.iter()
        .map(|g| (g.eval(&zr) - rot(g.k) * g.eval(z)).norm())
        .fold(0.0, f64::max)
}

/// `|Re sum_k f_k(z) conj(z_k) - q Re F(z)|`.
pub fn euler_identity_residual(f: &PotentialF, fk: &[NonlinearTerm], d: usize, z: &[Complex64]) -> f64 {
    let dd = d as f64;
    let q = 2.0 * dd / (dd - 2.0);
    let lhs: f64 = fk.iter().map(|g| (g.eval(z) * z[g.k].conj()).re).sum();
    (lhs - q * f.eval(z).re).abs()
}

/// `max_k |f_k(lambda z) - lambda^p f_k(z)|`.
pub fn homogeneity_residual(fk: &[NonlinearTerm], d: usize, z: &[Complex64], lambda: f64) -> f64 {
    let dd = d as f64;
    let p = (dd + 2.0) / (dd - 2.0);
    let zl: Vec<Complex64> = z.iter().map(|c| c * lambda).collect();
    fk.iter()
        .map(|g| (g.eval(&zl) - lambda.powf(p) * g.eval(z)).norm())
        .fold(0.0, f64::max)
}
