//! Independent oracles: analytic contour integrals on the radial bump
//! y = (1 - x1^2)(1 - x2^2) over [-1, 1]^2, computed without any mesh.

#![allow(dead_code)]

use std::f64::consts::PI;

pub fn bump(p: [f64; 2]) -> f64 {
    (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1])
}

pub fn bump_grad(p: [f64; 2]) -> [f64; 2] {
    [-2.0 * p[0] * (1.0 - p[1] * p[1]), -2.0 * p[1] * (1.0 - p[0] * p[0])]
}

/// Radius of {bump = level} along direction θ (bump decreases along rays).
fn radius(theta: f64, level: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let (mut lo, mut hi) = (0.0, 1.0 / c.abs().max(s.abs()));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bump([mid * c, mid * s]) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// ∮_{bump = level} g(x, ∇bump(x)) dH¹ with the periodic trapezoid rule in θ.
pub fn contour_integral<G: Fn([f64; 2], [f64; 2]) -> f64>(level: f64, g: G) -> f64 {
    let n = 4096;
    let dtheta = 2.0 * PI / n as f64;
    let mut sum = 0.0;
    for k in 0..n {
        let th = k as f64 * dtheta;
        let (s, c) = th.sin_cos();
        let r = radius(th, level);
        let x = [r * c, r * s];
        let gr = bump_grad(x);
        let f_r = gr[0] * c + gr[1] * s;
        let f_th = r * (-gr[0] * s + gr[1] * c);
        let dr = -f_th / f_r;
        sum += g(x, gr) * (r * r + dr * dr).sqrt() * dtheta;
    }
    sum
}

pub fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Least-squares slope of log(e) against log(h).
pub fn fitted_order(h: &[f64], e: &[f64]) -> f64 {
    let n = h.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = h.iter().zip(e).map(|(h, e)| (h.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn pairwise_orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    (1..h.len())
        .map(|i| (e[i - 1] / e[i]).ln() / (h[i - 1] / h[i]).ln())
        .collect()
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// `[1.00e-3, 2.50e-4]` style listing.
pub fn sci(v: &[f64], prec: usize) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.prec$e}")).collect();
    format!("[{}]", items.join(", "))
}
