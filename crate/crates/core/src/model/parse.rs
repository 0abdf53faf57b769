//! Recursive-descent parser for potential expressions.
//!
//! ```text
//! expr     := sign? product (('+' | '-') product)*
//! product  := unary (('*' | '/') unary)*
//! unary    := ('+' | '-')? power
//! power    := atom ('^' exponent)?
//! atom     := number | 'i' | 'z'K | 'zbar'K | 'abs(z'K')' | '(' expr ')'
//! exponent := integer                       (z, zbar, parenthesized groups)
//!           | number ('/' number)?          (abs only; rational or decimal >= 1)
//!           | '(' '-'? number ('/' number)? ')'
//! ```
//! Division is only allowed by a constant.

use super::term::{combine, Term};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("unexpected {found}, expected {expected}")]
    Unexpected { found: String, expected: String },
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("invalid number '{0}'")]
    InvalidNumber(String),
    #[error("component index {k} out of range 1..={l}")]
    ComponentOutOfRange { k: usize, l: usize },
    #[error("negative modulus exponent {0}")]
    NegativeModulusExponent(f64),
    #[error("modulus exponent {0} must be >= 1")]
    ModulusExponentBelowOne(f64),
    #[error("exponent {0} must be a positive integer")]
    NonIntegerExponent(f64),
    #[error("division by a non-constant expression")]
    DivisionByNonConstant,
    #[error("division by zero")]
    DivisionByZero,
    #[error("constant term {0} (the potential must vanish at 0)")]
    ConstantTerm(String),
    #[error("all terms cancel")]
    AllTermsCancel,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at position {pos}: {kind}")]
pub struct ParseError {
    pub pos: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    I,
    Z(usize),
    Zbar(usize),
    Abs,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(_, s) => format!("number '{s}'"),
            Tok::I => "'i'".into(),
            Tok::Z(k) => format!("'z{k}'"),
            Tok::Zbar(k) => format!("'zbar{k}'"),
            Tok::Abs => "'abs'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str, l: usize) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = simple {
            out.push((start, t));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError {
                pos: start,
                kind: ParseErrorKind::InvalidNumber(text.to_string()),
            })?;
            out.push((start, Tok::Num(v, text.to_string())));
            continue;
        }
        if c.is_ascii_alphabetic() {
            while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
                i += 1;
            }
            let word = &src[start..i];
            let dstart = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let digits = &src[dstart..i];
            let index = |pos: usize| -> Result<usize, ParseError> {
                if digits.is_empty() {
                    return Err(ParseError {
                        pos,
                        kind: ParseErrorKind::UnknownIdentifier(word.to_string()),
                    });
                }
                let k: usize = digits.parse().map_err(|_| ParseError {
                    pos,
                    kind: ParseErrorKind::InvalidNumber(digits.to_string()),
                })?;
                if k == 0 || k > l {
                    return Err(ParseError {
                        pos,
                        kind: ParseErrorKind::ComponentOutOfRange { k, l },
                    });
                }
                Ok(k - 1)
            };
            let tok = match word {
                "z" => Tok::Z(index(start)?),
                "zbar" => Tok::Zbar(index(start)?),
                "i" if digits.is_empty() => Tok::I,
                "abs" if digits.is_empty() => Tok::Abs,
                _ => {
                    return Err(ParseError {
                        pos: start,
                        kind: ParseErrorKind::UnknownIdentifier(src[start..i].to_string()),
                    })
                }
            };
            out.push((start, tok));
            continue;
        }
        return Err(ParseError {
            pos: start,
            kind: ParseErrorKind::UnexpectedChar(c),
        });
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

type Poly = Vec<Term>;

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    l: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].1
    }

    fn pos(&self) -> usize {
        self.toks[self.i].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].1.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            kind: ParseErrorKind::Unexpected {
                found: self.peek().describe(),
                expected: expected.to_string(),
            },
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn constant(&self, c: Complex64) -> Poly {
        vec![Term::constant(self.l, c)]
    }

    fn expr(&mut self) -> Result<Poly, ParseError> {
        let mut acc = self.product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc.extend(self.product()?);
                }
                Tok::Minus => {
                    self.bump();
                    acc.extend(negate(self.product()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<Poly, ParseError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    acc = mul(&acc, &rhs);
                }
                Tok::Slash => {
                    self.bump();
                    let pos = self.pos();
                    let rhs = combine(self.unary()?);
                    let c = match rhs.as_slice() {
                        [] => Complex64::new(0.0, 0.0),
                        [t] if t.is_constant() => t.coeff,
                        _ => {
                            return Err(ParseError {
                                pos,
                                kind: ParseErrorKind::DivisionByNonConstant,
                            })
                        }
                    };
                    if c.norm() == 0.0 {
                        return Err(ParseError {
                            pos,
                            kind: ParseErrorKind::DivisionByZero,
                        });
                    }
                    let inv = Complex64::new(1.0, 0.0) / c;
                    for t in acc.iter_mut() {
                        t.coeff = if c.im == 0.0 { t.coeff / c.re } else { t.coeff * inv };
                    }
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Poly, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(negate(self.unary()?))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Poly, ParseError> {
        let is_abs = *self.peek() == Tok::Abs;
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let pos = self.pos();
        let e = self.exponent(is_abs)?;
        if is_abs {
            if e < 0.0 {
                return Err(ParseError {
                    pos,
                    kind: ParseErrorKind::NegativeModulusExponent(e),
                });
            }
            if e < 1.0 {
                return Err(ParseError {
                    pos,
                    kind: ParseErrorKind::ModulusExponentBelowOne(e),
                });
            }
            let mut t = base.into_iter().next().expect("abs atom is one term");
            for a in t.a.iter_mut() {
                *a *= e;
            }
            return Ok(vec![t]);
        }
        if e.fract() != 0.0 || e < 1.0 {
            return Err(ParseError {
                pos,
                kind: ParseErrorKind::NonIntegerExponent(e),
            });
        }
        let mut acc = base.clone();
        for _ in 1..(e as u32) {
            acc = mul(&acc, &base);
        }
        Ok(acc)
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        if let Tok::Num(v, _) = self.peek() {
            let v = *v;
            self.bump();
            Ok(v)
        } else {
            self.err("number")
        }
    }

    fn exponent(&mut self, rational: bool) -> Result<f64, ParseError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let neg = if *self.peek() == Tok::Minus {
                self.bump();
                true
            } else {
                false
            };
            let mut v = self.number()?;
            if *self.peek() == Tok::Slash {
                self.bump();
                let pos = self.pos();
                let q = self.number()?;
                if q == 0.0 {
                    return Err(ParseError {
                        pos,
                        kind: ParseErrorKind::DivisionByZero,
                    });
                }
                v /= q;
            }
            self.expect(Tok::RParen, "')'")?;
            return Ok(if neg { -v } else { v });
        }
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(-self.exponent(rational)?);
        }
        let mut v = self.number()?;
        if rational && *self.peek() == Tok::Slash {
            if let Tok::Num(..) = self.toks[self.i + 1].1 {
                self.bump();
                let pos = self.pos();
                let q = self.number()?;
                if q == 0.0 {
                    return Err(ParseError {
                        pos,
                        kind: ParseErrorKind::DivisionByZero,
                    });
                }
                v /= q;
            }
        }
        Ok(v)
    }

    fn atom(&mut self) -> Result<Poly, ParseError> {
        let l = self.l;
        match self.peek().clone() {
            Tok::Num(v, _) => {
                self.bump();
                Ok(self.constant(Complex64::new(v, 0.0)))
            }
            Tok::I => {
                self.bump();
                Ok(self.constant(Complex64::new(0.0, 1.0)))
            }
            Tok::Z(k) => {
                self.bump();
                let mut t = Term::constant(l, Complex64::new(1.0, 0.0));
                t.m[k] = 1;
                Ok(vec![t])
            }
            Tok::Zbar(k) => {
                self.bump();
                let mut t = Term::constant(l, Complex64::new(1.0, 0.0));
                t.n[k] = 1;
                Ok(vec![t])
            }
            Tok::Abs => {
                self.bump();
                self.expect(Tok::LParen, "'(' after abs")?;
                let k = match self.peek() {
                    Tok::Z(k) => *k,
                    _ => return self.err("'zK' inside abs(...)"),
                };
                self.bump();
                self.expect(Tok::RParen, "')'")?;
                let mut t = Term::constant(l, Complex64::new(1.0, 0.0));
                t.a[k] = 1.0;
                Ok(vec![t])
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            _ => self.err("a number, 'i', 'zK', 'zbarK', 'abs(zK)' or '('"),
        }
    }
}

fn negate(p: Poly) -> Poly {
    p.into_iter()
        .map(|mut t| {
            t.coeff = -t.coeff;
            t
        })
        .collect()
}

fn mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x.mul(y));
        }
    }
    out
}

/// Parse `src` into a combined, canonical term list over `l` components.
pub fn parse_terms(src: &str, l: usize) -> Result<Vec<Term>, ParseError> {
    let toks = lex(src, l)?;
    if toks.len() == 1 {
        return Err(ParseError {
            pos: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let mut p = Parser { toks, i: 0, l };
    let poly = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err("'+', '-', '*', '/' or end of input");
    }
    let terms = combine(poly);
    if let Some(t) = terms.iter().find(|t| t.is_constant()) {
        return Err(ParseError {
            pos: 0,
            kind: ParseErrorKind::ConstantTerm(format!("{}", t.coeff)),
        });
    }
    if terms.is_empty() {
        return Err(ParseError {
            pos: 0,
            kind: ParseErrorKind::AllTermsCancel,
        });
    }
    Ok(terms)
}
