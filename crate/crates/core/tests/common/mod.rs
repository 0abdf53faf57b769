#![allow(dead_code)]

use cnls_core::grid::RadialGrid;
use std::f64::consts::PI;

/// Scalar extremizer `(1 + r^2/(d(d-2)))^{-(d-2)/2}`, solving `-Lap W = W^{(d+2)/(d-2)}`.
pub fn bubble(d: usize, r: f64) -> f64 {
    let dd = d as f64;
    (1.0 + r * r / (dd * (dd - 2.0))).powf(-(dd - 2.0) / 2.0)
}

/// `lambda^{(d-2)/2} W(lambda r)`.
pub fn dilated_bubble(d: usize, lambda: f64, r: f64) -> f64 {
    lambda.powf((d as f64 - 2.0) / 2.0) * bubble(d, lambda * r)
}

/// `max_j |psi_j - W_lambda(r_j)| / max_j |W_lambda(r_j)|`.
pub fn sup_relative_error(grid: &RadialGrid, psi: &[f64], lambda: f64) -> f64 {
    let d = grid.d;
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for (r, p) in grid.r.iter().zip(psi) {
        let w = dilated_bubble(d, lambda, *r);
        num = num.max((p - w).abs());
        den = den.max(w.abs());
    }
    num / den
}

/// Golden-section search of the dilation minimizing the sup error.
pub fn fit_dilation(grid: &RadialGrid, psi: &[f64]) -> (f64, f64) {
    let f = |x: f64| sup_relative_error(grid, psi, x.exp());
    let (mut a, mut b) = ((0.05f64).ln(), (20.0f64).ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..200 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = f(e);
        }
    }
    let x = 0.5 * (a + b);
    (x.exp(), f(x))
}

fn sphere_area_in(dim_plus_one: usize) -> f64 {
    // |S^{n-1}| for n = dim_plus_one, closed forms for the cases used here
    match dim_plus_one {
        5 => 8.0 * PI * PI / 3.0,
        6 => PI.powi(3),
        4 => 2.0 * PI * PI,
        _ => panic!("unsupported"),
    }
}

/// Best constant `S_d` in `S_d ||u||^2_{L^{2d/(d-2)}} <= ||grad u||^2`.
pub fn sobolev_best(d: usize) -> f64 {
    let dd = d as f64;
    dd * (dd - 2.0) / 4.0 * sphere_area_in(d + 1).powf(2.0 / dd)
}

/// `sup P/K^{d/(d-2)}` for `F = ((d-2)/(2d)) |z|^{2d/(d-2)}`.
pub fn sharp_constant(d: usize) -> f64 {
    let dd = d as f64;
    (dd - 2.0) / (2.0 * dd) * sobolev_best(d).powf(-dd / (dd - 2.0))
}
