//! Finite-difference checks of the reduced derivatives and mesh-free oracles
//! for the level-set geometry of the bump y = (1 - x1^2)(1 - x2^2).

use std::f64::consts::PI;

use qlkink::curvature::{compute_q2_explicit, PhiSource};
use qlkink::expr::DiffExpr;
use qlkink::levelset::{curve_integral, extract_level_set};
use qlkink::mesh::{build_mesh, PolygonDomain, TriMesh};
use qlkink::optimize::{gradient, objective};
use qlkink::pde::{solve_linearized, solve_state, ControlProblem, PiecewiseC2Coefficient};

fn bump_grad(p: [f64; 2]) -> [f64; 2] {
    [-2.0 * p[0] * (1.0 - p[1] * p[1]), -2.0 * p[1] * (1.0 - p[0] * p[0])]
}

/// ∮_{bump = t} g dH¹ by the periodic trapezoid rule in the polar angle.
fn contour<G: Fn([f64; 2], [f64; 2]) -> f64>(t: f64, g: G) -> f64 {
    let bump = |p: [f64; 2]| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]);
    let n = 2048;
    let mut sum = 0.0;
    for k in 0..n {
        let th = 2.0 * PI * k as f64 / n as f64;
        let (s, c) = th.sin_cos();
        let (mut lo, mut hi) = (0.0, 1.0 / c.abs().max(s.abs()));
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if bump([m * c, m * s]) > t {
                lo = m
            } else {
                hi = m
            }
        }
        let r = 0.5 * (lo + hi);
        let x = [r * c, r * s];
        let gr = bump_grad(x);
        let dr = -r * (-gr[0] * s + gr[1] * c) / (gr[0] * c + gr[1] * s);
        sum += g(x, gr) * r.hypot(dr);
    }
    sum * 2.0 * PI / n as f64
}

fn square(h: f64) -> TriMesh<f64> {
    build_mesh(&PolygonDomain::rectangle(-1.0, -1.0, 1.0, 1.0).unwrap(), h).unwrap()
}

fn kinked_problem() -> ControlProblem {
    let a = PiecewiseC2Coefficient::parse("0.5 - y", "y - 0.5", 0.5).unwrap();
    ControlProblem::with_lagrangian(
        DiffExpr::parse("1").unwrap(),
        a,
        "0.5*(y - 0.3)^2".parse().unwrap(),
        1e-2,
        -50.0,
        50.0,
    )
    .unwrap()
}

#[test]
fn bump_contour_length_matches_quadrature() {
    let oracle = contour(0.5, |_, _| 1.0);
    assert!((oracle - 4.6416).abs() < 1e-3, "{oracle}");
    let mesh = square(1.0 / 64.0);
    let y = mesh.interpolate(|p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]));
    let d = extract_level_set(&mesh, &y, 0.5).unwrap();
    assert_eq!(d.components.len(), 1);
    assert!(d.components[0].closed);
    assert!((d.total_length() - oracle).abs() < 1e-3 * oracle);
}

#[test]
fn curve_integral_of_gradient_norm() {
    let oracle = contour(0.5, |_, g| g[0].hypot(g[1]));
    let mesh = square(1.0 / 64.0);
    let y = mesh.interpolate(|p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]));
    let d = extract_level_set(&mesh, &y, 0.5).unwrap();
    let got = curve_integral(&d.components[0], |p, _| {
        let g = bump_grad(p);
        Ok(g[0].hypot(g[1]))
    })
    .unwrap();
    assert!((got - oracle).abs() < 1e-3 * oracle, "{got} vs {oracle}");
}

#[test]
fn explicit_contour_curvature_on_the_bump() {
    // ½(a0' - a1') ∮ w² ∇y·∇φ / |∇y| with w = y = 1/2 on the curve, φ = |x|², a0' - a1' = -2.
    let a = PiecewiseC2Coefficient::parse("0.5 - y", "y - 0.5", 0.5).unwrap();
    let p = ControlProblem::with_lagrangian(DiffExpr::parse("1").unwrap(), a, "0".parse().unwrap(), 1.0, -1.0, 1.0)
        .unwrap();
    let oracle = contour(0.5, |x, g| {
        -0.25 * (g[0] * 2.0 * x[0] + g[1] * 2.0 * x[1]) / g[0].hypot(g[1])
    });
    let mesh = square(1.0 / 64.0);
    let y = mesh.interpolate(|p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]));
    let phi = DiffExpr::parse("x1^2 + x2^2").unwrap();
    let q = compute_q2_explicit(&p, &mesh, &y, PhiSource::Analytic(&phi), &y, 1e-8).unwrap();
    assert_eq!(q.components.len(), 1);
    assert!(
        (q.value - oracle).abs() < 0.02 * oracle.abs(),
        "{} vs {oracle}",
        q.value
    );
}

#[test]
fn reduced_gradient_matches_central_differences() {
    let p = kinked_problem();
    let mesh = square(0.125);
    let u = mesh.interpolate(|x| 30.0 * (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) + 5.0 * x[0]);
    let g = gradient(&p, &mesh, &u).unwrap();
    for (i, v) in [
        mesh.interpolate(|x| (2.0 * x[0] + x[1]).sin()),
        mesh.interpolate(|x| (-4.0 * (x[0] * x[0] + (x[1] - 0.2).powi(2))).exp()),
    ]
    .iter()
    .enumerate()
    {
        let s = 1e-5;
        let fd =
            (objective(&p, &mesh, &u.axpy(s, v)).unwrap() - objective(&p, &mesh, &u.axpy(-s, v)).unwrap()) / (2.0 * s);
        let exact = mesh.l2_inner(&g, v);
        assert!(
            (fd - exact).abs() <= 1e-3 * exact.abs(),
            "direction {i}: fd {fd} vs {exact}"
        );
    }
}

#[test]
fn linearized_state_is_the_difference_quotient_limit() {
    let p = kinked_problem();
    let mesh = square(0.125);
    let u = mesh.interpolate(|x| 30.0 * (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]));
    let v = mesh.interpolate(|x| x[0] * x[0] + 0.5 * x[1]);
    let (y, _) = solve_state(&p, &mesh, &u, 1e-13, 200).unwrap();
    let z = solve_linearized(&p, &mesh, &y, &v, 1e-13).unwrap();
    let mut errs = Vec::new();
    for s in [1e-2, 1e-3, 1e-4] {
        let (ys, _) = solve_state(&p, &mesh, &u.axpy(s, &v), 1e-13, 200).unwrap();
        let dq = ys.axpy(-1.0, &y).scaled(1.0 / s);
        errs.push(mesh.l2_norm(&dq.axpy(-1.0, &z)) / mesh.l2_norm(&z));
    }
    assert!(errs[2] < 1e-3, "{errs:?}");
    assert!(errs[2] < errs[0], "{errs:?}");
}
