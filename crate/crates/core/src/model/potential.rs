use super::parse::{parse_terms, ParseError};
use super::term::{eval_terms, eval_terms_with_abs, wirtinger_fk, write_terms, Term};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("dimension d={0} outside 3..=6")]
    Dimension(usize),
    #[error("component count must be at least 1")]
    NoComponents,
    #[error("{name} has {got} entries, expected l={l}")]
    Length { name: &'static str, got: usize, l: usize },
    #[error("{name}[{k}] = {value} violates {rule}")]
    Value {
        name: &'static str,
        k: usize,
        value: f64,
        rule: &'static str,
    },
}

/// Dimension, component count and per-component constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub d: usize,
    pub l: usize,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

impl SystemParams {
    pub fn new(
        d: usize,
        alpha: Vec<f64>,
        gamma: Vec<f64>,
        beta: Vec<f64>,
        sigma: Option<Vec<f64>>,
    ) -> Result<Self, ParamsError> {
        let p = SystemParams {
            d,
            l: alpha.len(),
            alpha,
            gamma,
            beta,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Scalar equation with unit coefficients and no mass term.
    pub fn scalar(d: usize) -> Self {
        SystemParams::new(d, vec![1.0], vec![1.0], vec![0.0], Some(vec![1.0]))
            .expect("valid scalar params")
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(3..=6).contains(&self.d) {
            return Err(ParamsError::Dimension(self.d));
        }
        if self.l == 0 {
            return Err(ParamsError::NoComponents);
        }
        let l = self.l;
        let mut lists: Vec<(&'static str, &Vec<f64>, bool)> = vec![
            ("alpha", &self.alpha, true),
            ("gamma", &self.gamma, true),
            ("beta", &self.beta, false),
        ];
        if let Some(s) = &self.sigma {
            lists.push(("sigma", s, true));
        }
        for (name, v, strict) in lists {
            if v.len() != l {
                return Err(ParamsError::Length { name, got: v.len(), l });
            }
            for (k, &x) in v.iter().enumerate() {
                let ok = x.is_finite() && if strict { x > 0.0 } else { x >= 0.0 };
                if !ok {
                    return Err(ParamsError::Value {
                        name,
                        k,
                        value: x,
                        rule: if strict { "> 0" } else { ">= 0" },
                    });
                }
            }
        }
        Ok(())
    }

    /// Critical power `(d+2)/(d-2)`.
    pub fn p_crit(&self) -> f64 {
        let d = self.d as f64;
        (d + 2.0) / (d - 2.0)
    }

    /// Critical degree of the potential, `2d/(d-2)`.
    pub fn q_crit(&self) -> f64 {
        let d = self.d as f64;
        2.0 * d / (d - 2.0)
    }

    /// Declared sigma, or `alpha_k / gamma_k` when absent.
    pub fn sigma_or_default(&self) -> Vec<f64> {
        match &self.sigma {
            Some(s) => s.clone(),
            None => (0..self.l).map(|k| self.alpha[k] / self.gamma[k]).collect(),
        }
    }

    pub fn without_beta(&self) -> Self {
        SystemParams {
            beta: vec![0.0; self.l],
            ..self.clone()
        }
    }
}

/// The potential `F` as a canonical term list, with its source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialF {
    pub l: usize,
    pub terms: Vec<Term>,
    pub source: String,
}

impl PotentialF {
    pub fn parse(src: &str, l: usize) -> Result<Self, ParseError> {
        Ok(PotentialF {
            l,
            terms: parse_terms(src, l)?,
            source: src.to_string(),
        })
    }

    /// `F = c |z_1|^q`, the scalar focusing potential with `c = (d-2)/(2d)`.
    pub fn scalar_power(d: usize) -> Self {
        let dd = d as f64;
        let q = 2.0 * dd / (dd - 2.0);
        let mut t = Term::constant(1, Complex64::new((dd - 2.0) / (2.0 * dd), 0.0));
        t.a[0] = q;
        let mut f = PotentialF {
            l: 1,
            terms: vec![t],
            source: String::new(),
        };
        f.source = f.to_string();
        f
    }

    /// Internal zero potential, used for linear-flow tests. Not constructible from text.
    pub fn zero(l: usize) -> Self {
        PotentialF {
            l,
            terms: Vec::new(),
            source: "0".into(),
        }
    }

    /// Terms carrying `z`/`zbar` powers and no modulus factors.
    pub fn monomials(&self) -> impl Iterator<Item = &Term> {
        self.terms
            .iter()
            .filter(|t| t.a.iter().all(|&a| a == 0.0))
    }

    /// Terms made only of `|z_j|` factors.
    pub fn modulus_terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter().filter(|t| t.is_modulus_only())
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        eval_terms(&self.terms, z)
    }

    pub fn eval_with_abs(&self, z: &[Complex64], absz: &[f64]) -> Complex64 {
        eval_terms_with_abs(&self.terms, z, absz)
    }

    /// Sum of two potentials (term lists merged).
    pub fn add(&self, other: &PotentialF) -> PotentialF {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        let terms = super::term::combine(terms);
        PotentialF {
            l: self.l,
            source: format!("({}) + ({})", self.source, other.source),
            terms,
        }
    }
}

impl fmt::Display for PotentialF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_terms(f, &self.terms)
    }
}

/// Closed form of `f_k = dF/dconj(z_k) + conj(dF/dz_k)`; `k` is zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearTerm {
    pub k: usize,
    pub terms: Vec<Term>,
}

impl NonlinearTerm {
    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        eval_terms(&self.terms, z)
    }

    pub fn eval_with_abs(&self, z: &[Complex64], absz: &[f64]) -> Complex64 {
        eval_terms_with_abs(&self.terms, z, absz)
    }

    /// Wirtinger derivative of this nonlinearity in `z_m`.
    pub fn d_dz(&self, m: usize) -> Vec<Term> {
        super::term::combine(self.terms.iter().flat_map(|t| t.d_dz(m)).collect())
    }

    /// Wirtinger derivative of this nonlinearity in `conj(z_m)`.
    pub fn d_dzbar(&self, m: usize) -> Vec<Term> {
        super::term::combine(self.terms.iter().flat_map(|t| t.d_dzbar(m)).collect())
    }
}

impl fmt::Display for NonlinearTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_terms(f, &self.terms)
    }
}

pub fn parse_potential(text: &str, l: usize) -> Result<PotentialF, ParseError> {
    PotentialF::parse(text, l)
}

/// # Panics
/// If `k >= F.l`.
pub fn derive_fk(f: &PotentialF, k: usize) -> NonlinearTerm {
    assert!(k < f.l, "component index {k} out of range");
    NonlinearTerm {
        k,
        terms: wirtinger_fk(&f.terms, k),
    }
}

pub fn derive_all(f: &PotentialF) -> Vec<NonlinearTerm> {
    (0..f.l).map(|k| derive_fk(f, k)).collect()
}

#[allow(non_snake_case)]
pub fn eval_F(f: &PotentialF, z: &[Complex64]) -> Complex64 {
    f.eval(z)
}

pub fn eval_fk(f: &NonlinearTerm, z: &[Complex64]) -> Complex64 {
    f.eval(z)
}

/// `F` together with its derived nonlinearities, evaluated node by node.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub potential: PotentialF,
    pub fk: Vec<NonlinearTerm>,
}

impl Nonlinearity {
    pub fn new(potential: PotentialF) -> Self {
        let fk = derive_all(&potential);
        Nonlinearity { potential, fk }
    }

    pub fn l(&self) -> usize {
        self.potential.l
    }

    pub fn f_at(&self, z: &[Complex64]) -> Complex64 {
        self.potential.eval(z)
    }

    /// Writes `f_k(z)` for every component into `out`.
    pub fn fk_at(&self, z: &[Complex64], out: &mut [Complex64]) {
        let absz: Vec<f64> = z.iter().map(|c| c.norm()).collect();
        for (o, f) in out.iter_mut().zip(&self.fk) {
            *o = f.eval_with_abs(z, &absz);
        }
    }
}
