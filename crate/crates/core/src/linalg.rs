//! Scalar abstraction shared by real and complex fields, and a Thomas solver.

use num_complex::Complex64;
use std::ops::{Add, Div, Mul, Sub};
use thiserror::Error;

pub trait Field:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Mul<f64, Output = Self>
    + PartialEq
    + Send
    + Sync
{
    fn zero() -> Self;
    fn one() -> Self;
    fn magnitude(self) -> f64;
    fn finite(self) -> bool;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TridiagError {
    #[error("system size mismatch: diag {diag}, lower {lower}, upper {upper}, rhs {rhs}")]
    Shape {
        diag: usize,
        lower: usize,
        upper: usize,
        rhs: usize,
    },
    #[error("zero or non-finite pivot at row {row}")]
    Pivot { row: usize },
}

/// Solves `lower[j] x[j-1] + diag[j] x[j] + upper[j] x[j+1] = rhs[j]`.
///
/// `lower[0]` and `upper[n-1]` are ignored. No pivoting; intended for the
/// diagonally dominant systems built from the radial Laplacian.
pub fn solve_tridiagonal<T: Field>(
    lower: &[T],
    diag: &[T],
    upper: &[T],
    rhs: &[T],
) -> Result<Vec<T>, TridiagError> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n || n == 0 {
        return Err(TridiagError::Shape {
            diag: n,
            lower: lower.len(),
            upper: upper.len(),
            rhs: rhs.len(),
        });
    }
    let mut c = vec![T::zero(); n];
    let mut x = vec![T::zero(); n];
    let mut pivot = diag[0];
    if pivot.magnitude() == 0.0 || !pivot.finite() {
        return Err(TridiagError::Pivot { row: 0 });
    }
    c[0] = upper[0] / pivot;
    x[0] = rhs[0] / pivot;
    for j in 1..n {
        pivot = diag[j] - lower[j] * c[j - 1];
        if pivot.magnitude() == 0.0 || !pivot.finite() {
            return Err(TridiagError::Pivot { row: j });
        }
        c[j] = if j + 1 < n { upper[j] / pivot } else { T::zero() };
        x[j] = (rhs[j] - lower[j] * x[j - 1]) / pivot;
    }
    for j in (0..n - 1).rev() {
        let next = x[j + 1];
        x[j] = x[j] - c[j] * next;
    }
    Ok(x)
}
