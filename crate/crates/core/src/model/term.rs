//! Terms of the form `c * prod_j z_j^m_j * conj(z_j)^n_j * |z_j|^a_j`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// One product term over `l` complex variables.
///
/// Canonical form keeps `min(m_j, n_j) == 0` by folding each `z_j * conj(z_j)`
/// pair into `|z_j|^2`, so equal functions have equal term lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Complex64,
    pub m: Vec<u32>,
    pub n: Vec<u32>,
    pub a: Vec<f64>,
}

impl Term {
    pub fn constant(l: usize, c: Complex64) -> Self {
        Term {
            coeff: c,
            m: vec![0; l],
            n: vec![0; l],
            a: vec![0.0; l],
        }
    }

    pub fn l(&self) -> usize {
        self.m.len()
    }

    /// Total homogeneity degree `sum_j (m_j + n_j + a_j)`.
    pub fn degree(&self) -> f64 {
        (0..self.l())
            .map(|j| self.m[j] as f64 + self.n[j] as f64 + self.a[j])
            .sum()
    }

    pub fn is_constant(&self) -> bool {
        (0..self.l()).all(|j| self.m[j] == 0 && self.n[j] == 0 && self.a[j] == 0.0)
    }

    /// Only `|z_j|` factors (no phase-carrying powers).
    pub fn is_modulus_only(&self) -> bool {
        self.m.iter().all(|&x| x == 0) && self.n.iter().all(|&x| x == 0)
    }

    pub fn same_exponents(&self, other: &Term) -> bool {
        self.m == other.m && self.n == other.n && self.a == other.a
    }

    pub fn mul(&self, other: &Term) -> Term {
        let l = self.l();
        Term {
            coeff: self.coeff * other.coeff,
            m: (0..l).map(|j| self.m[j] + other.m[j]).collect(),
            n: (0..l).map(|j| self.n[j] + other.n[j]).collect(),
            a: (0..l).map(|j| self.a[j] + other.a[j]).collect(),
        }
    }

    pub fn canonicalize(&mut self) {
        for j in 0..self.l() {
            let p = self.m[j].min(self.n[j]);
            if p > 0 {
                self.m[j] -= p;
                self.n[j] -= p;
                self.a[j] += 2.0 * p as f64;
            }
        }
    }

    /// Evaluate given `z` and precomputed `|z|`.
    ///
    /// A factor with positive effective degree vanishes at `z_j = 0`; this is the
    /// continuous extension of `|z|^(a-2) z` style factors. Factors of effective
    /// degree zero that still carry a phase have no limit and are set to zero.
    pub fn eval_with_abs(&self, z: &[Complex64], absz: &[f64]) -> Complex64 {
        let mut acc = self.coeff;
        for j in 0..self.l() {
            let (m, n, a) = (self.m[j], self.n[j], self.a[j]);
            if m == 0 && n == 0 && a == 0.0 {
                continue;
            }
            if absz[j] == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            if m > 0 {
                acc *= z[j].powu(m);
            }
            if n > 0 {
                acc *= z[j].conj().powu(n);
            }
            if a != 0.0 {
                acc *= pow_abs(absz[j], a);
            }
        }
        acc
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let absz: Vec<f64> = z.iter().map(|c| c.norm()).collect();
        self.eval_with_abs(z, &absz)
    }

    /// Wirtinger derivative with respect to `conj(z_k)`.
    pub fn d_dzbar(&self, k: usize) -> Vec<Term> {
        let mut out = Vec::new();
        if self.n[k] > 0 {
            let mut t = self.clone();
            t.coeff *= self.n[k] as f64;
            t.n[k] -= 1;
            out.push(t);
        }
        if self.a[k] != 0.0 {
            let mut t = self.clone();
            t.coeff *= self.a[k] / 2.0;
            t.a[k] -= 2.0;
            t.m[k] += 1;
            out.push(t);
        }
        out
    }

    /// Wirtinger derivative with respect to `z_k`.
    pub fn d_dz(&self, k: usize) -> Vec<Term> {
        let mut out = Vec::new();
        if self.m[k] > 0 {
            let mut t = self.clone();
            t.coeff *= self.m[k] as f64;
            t.m[k] -= 1;
            out.push(t);
        }
        if self.a[k] != 0.0 {
            let mut t = self.clone();
            t.coeff *= self.a[k] / 2.0;
            t.a[k] -= 2.0;
            t.n[k] += 1;
            out.push(t);
        }
        out
    }

    /// The term representing `conj(self(z))`.
    pub fn conj(&self) -> Term {
        Term {
            coeff: self.coeff.conj(),
            m: self.n.clone(),
            n: self.m.clone(),
            a: self.a.clone(),
        }
    }
}

fn pow_abs(x: f64, a: f64) -> f64 {
    if a.fract() == 0.0 && a.abs() < 64.0 {
        x.powi(a as i32)
    } else {
        x.powf(a)
    }
}

/// Canonicalize every term, merge like terms and drop cancelled ones.
pub fn combine(terms: Vec<Term>) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::with_capacity(terms.len());
    for mut t in terms {
        t.canonicalize();
        match out.iter_mut().find(|o| o.same_exponents(&t)) {
            Some(o) => o.coeff += t.coeff,
            None => out.push(t),
        }
    }
    let scale = out.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max);
    out.retain(|t| t.coeff.norm() > 1e-15 * scale && t.coeff.norm() > 0.0);
    out
}

pub fn eval_terms(terms: &[Term], z: &[Complex64]) -> Complex64 {
    let absz: Vec<f64> = z.iter().map(|c| c.norm()).collect();
    eval_terms_with_abs(terms, z, &absz)
}

pub fn eval_terms_with_abs(terms: &[Term], z: &[Complex64], absz: &[f64]) -> Complex64 {
    terms
        .iter()
        .map(|t| t.eval_with_abs(z, absz))
        .fold(Complex64::new(0.0, 0.0), |s, x| s + x)
}

/// `d/dconj(z_k) + conj(d/dz_k)` applied to a term list.
pub fn wirtinger_fk(terms: &[Term], k: usize) -> Vec<Term> {
    let mut raw = Vec::new();
    for t in terms {
        raw.extend(t.d_dzbar(k));
        raw.extend(t.d_dz(k).into_iter().map(|d| d.conj()));
    }
    combine(raw)
}

fn fmt_real(x: f64) -> String {
    format!("{}", x)
}

fn fmt_coeff(c: Complex64) -> String {
    if c.im == 0.0 {
        fmt_real(c.re)
    } else if c.re == 0.0 {
        format!("({}*i)", fmt_real(c.im))
    } else if c.im < 0.0 {
        format!("({} - {}*i)", fmt_real(c.re), fmt_real(-c.im))
    } else {
        format!("({} + {}*i)", fmt_real(c.re), fmt_real(c.im))
    }
}

/// Print a term list in the expression grammar accepted by the parser.
pub fn write_terms(f: &mut fmt::Formatter<'_>, terms: &[Term]) -> fmt::Result {
    if terms.is_empty() {
        return write!(f, "0");
    }
    for (idx, t) in terms.iter().enumerate() {
        let mut c = t.coeff;
        let negate = c.im == 0.0 && c.re < 0.0;
        if negate {
            c = -c;
        }
        match (idx, negate) {
            (0, true) => write!(f, "-")?,
            (0, false) => {}
            (_, true) => write!(f, " - ")?,
            (_, false) => write!(f, " + ")?,
        }
        let mut factors = Vec::new();
        for j in 0..t.l() {
            let k = j + 1;
            match t.m[j] {
                0 => {}
                1 => factors.push(format!("z{k}")),
                p => factors.push(format!("z{k}^{p}")),
            }
            match t.n[j] {
                0 => {}
                1 => factors.push(format!("zbar{k}")),
                p => factors.push(format!("zbar{k}^{p}")),
            }
            if t.a[j] != 0.0 {
                if t.a[j] == 1.0 {
                    factors.push(format!("abs(z{k})"));
                } else {
                    factors.push(format!("abs(z{k})^{}", fmt_real(t.a[j])));
                }
            }
        }
        let one = c == Complex64::new(1.0, 0.0);
        if factors.is_empty() {
            write!(f, "{}", fmt_coeff(c))?;
        } else if one {
            write!(f, "{}", factors.join("*"))?;
        } else {
            write!(f, "{}*{}", fmt_coeff(c), factors.join("*"))?;
        }
    }
    Ok(())
}
