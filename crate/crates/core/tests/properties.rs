use proptest::prelude::*;

use qlkink::curvature::{an_experiment, LimitOptions, PhiSource};
use qlkink::expr::{parse_expr, DiffExpr, Expr, Func, Var};
use qlkink::levelset::extract_level_set;
use qlkink::mesh::{build_mesh, NodalField, PolygonDomain, TriMesh};
use qlkink::optimize::clamp_field;
use qlkink::pde::{solve_linearized, solve_state, ControlProblem, PiecewiseC2Coefficient};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-5.0f64..5.0).prop_map(Expr::num),
        Just(Expr::var(Var::X1)),
        Just(Expr::var(Var::X2)),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            inner.clone().prop_map(Expr::neg),
            inner.clone().prop_map(|a| Expr::call(Func::Sin, vec![a])),
            inner.clone().prop_map(|a| Expr::call(Func::Abs, vec![a])),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::call(Func::Max, vec![a, b])),
        ]
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn unit(h: f64) -> TriMesh<f64> {
    build_mesh(&PolygonDomain::unit_square(), h).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_reparse_to_the_same_function(e in expr(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let back = parse_expr(&e.to_string()).unwrap();
        let (a, b) = (e.eval_point([x, y]).unwrap(), back.eval_point([x, y]).unwrap());
        prop_assert!(close(a, b), "{e} -> {back}: {a} vs {b}");
    }

    #[test]
    fn clamp_is_idempotent_and_feasible(v in prop::collection::vec(-10.0f64..10.0, 1..40), lo in -3.0f64..0.0, w in 0.1f64..3.0) {
        let u = NodalField::from_vec(v);
        let c = clamp_field(&u, lo, lo + w);
        prop_assert_eq!(&clamp_field(&c, lo, lo + w), &c);
        prop_assert!(c.values.iter().all(|&x| lo <= x && x <= lo + w));
        for (a, b) in u.values.iter().zip(&c.values) {
            if lo <= *a && *a <= lo + w {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn affine_level_set_is_one_exact_segment(theta in 0.1f64..1.4, t in 0.2f64..0.8) {
        // y = cos θ (x1 - 1/2) + sin θ (x2 - 1/2) + 1/2 crosses the square in one chord.
        let (s, c) = theta.sin_cos();
        let mesh = unit(0.125);
        let y = mesh.interpolate(|p| c * (p[0] - 0.5) + s * (p[1] - 0.5) + 0.5);
        let d = extract_level_set(&mesh, &y, t).unwrap();
        prop_assert_eq!(d.components.len(), 1);
        let curve = &d.components[0];
        prop_assert!(!curve.closed);
        for p in &curve.points {
            prop_assert!((c * (p[0] - 0.5) + s * (p[1] - 0.5) + 0.5 - t).abs() < 1e-12);
        }
        let ends = (curve.points[0], *curve.points.last().unwrap());
        let chord = (ends.0[0] - ends.1[0]).hypot(ends.0[1] - ends.1[1]);
        prop_assert!((curve.length - chord).abs() < 1e-12);
        // {y > t} lies on the left of the orientation.
        let (a, b) = curve.segment(0);
        let m = [0.5 * (a[0] + b[0]) - 1e-3 * (b[1] - a[1]), 0.5 * (a[1] + b[1]) + 1e-3 * (b[0] - a[0])];
        prop_assert!(c * (m[0] - 0.5) + s * (m[1] - 0.5) + 0.5 > t);
    }

    #[test]
    fn reversing_a_curve_flips_area_and_keeps_length(r in 0.15f64..0.35, cx in 0.4f64..0.6) {
        let mesh = unit(1.0 / 24.0);
        let y = mesh.interpolate(|p| (p[0] - cx).hypot(p[1] - 0.5));
        let d = extract_level_set(&mesh, &y, r).unwrap();
        prop_assert_eq!(d.components.len(), 1);
        let c = &d.components[0];
        prop_assert!(c.closed);
        let rev = c.reversed();
        prop_assert!((c.signed_area() + rev.signed_area()).abs() < 1e-14);
        prop_assert!((rev.length - c.length).abs() < 1e-14);
        let circle = std::f64::consts::PI * r * r;
        prop_assert!((c.signed_area().abs() - circle).abs() < 0.02 * circle, "{} vs {circle}", c.signed_area());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn an_quotient_scales_with_the_square_of_w(k in 0.5f64..2.0) {
        // y_n = ȳ + s w, so (k w, s) and (w, k s) perturb identically.
        let mesh = build_mesh(&PolygonDomain::rectangle(-1.0, -1.0, 1.0, 1.0).unwrap(), 0.125).unwrap();
        let y = mesh.interpolate(|p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]));
        let phi = DiffExpr::parse("x1^2 + x2^2").unwrap();
        let s = [0.1, 0.05];
        let ks = [k * 0.1, k * 0.05];
        let o = LimitOptions::default();
        let base = an_experiment(&mesh, &y, &y, PhiSource::Analytic(&phi), 0.5, 0, 0.3, &ks, &o).unwrap();
        let wk = y.scaled(k);
        let scaled = an_experiment(&mesh, &y, &wk, PhiSource::Analytic(&phi), 0.5, 0, 0.3, &s, &o).unwrap();
        prop_assert!(close(scaled.target, k * k * base.target));
        for (a, b) in scaled.values.iter().zip(&base.values) {
            prop_assert!((a - k * k * b).abs() <= 1e-8 * b.abs(), "{a} vs {}", k * k * b);
        }
    }

    #[test]
    fn linearized_state_is_linear_in_the_direction(c in -3.0f64..3.0, seed in 0u64..1000) {
        let a = PiecewiseC2Coefficient::parse("0.5 - y", "y - 0.5", 0.5).unwrap();
        let p = ControlProblem::with_lagrangian(DiffExpr::parse("1").unwrap(), a, "0.5*y^2".parse().unwrap(), 1e-2, -10.0, 10.0).unwrap();
        let mesh = unit(0.125);
        let u = mesh.interpolate(|x| 20.0 * x[0]);
        let (y, _) = solve_state(&p, &mesh, &u, 1e-12, 200).unwrap();
        let wave = |f: f64| mesh.interpolate(move |x| (f * x[0] + 3.0 * x[1] + seed as f64).sin());
        let (v1, v2) = (wave(2.0), wave(5.0));
        let z1 = solve_linearized(&p, &mesh, &y, &v1, 1e-13).unwrap();
        let z2 = solve_linearized(&p, &mesh, &y, &v2, 1e-13).unwrap();
        let z = solve_linearized(&p, &mesh, &y, &v1.axpy(c, &v2), 1e-13).unwrap();
        let expect = z1.axpy(c, &z2);
        let scale = expect.max_abs().max(1e-300);
        prop_assert!(z.axpy(-1.0, &expect).max_abs() <= 1e-9 * scale);
    }
}
