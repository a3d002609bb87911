//! Built-in scenarios, addressable by name with `--scenario`.

use crate::config::{DomainSpec, FieldSpec, MeshSpec, Normals, Params, ProblemSpec, ScenarioConfig};

pub const NAMES: [&str; 6] = [
    "smooth-manufactured",
    "kinked-manufactured",
    "radial-geometry",
    "strip-geometry",
    "tracking-ocp",
    "cusp-green",
];

const BUMP: &str = "(1-x1^2)*(1-x2^2)";

fn unit_square() -> DomainSpec {
    DomainSpec::Rectangle {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    }
}

fn centered_square() -> DomainSpec {
    DomainSpec::Rectangle {
        x0: -1.0,
        y0: -1.0,
        x1: 1.0,
        y1: 1.0,
    }
}

fn abs_kink(l: &str, nu: f64, alpha: f64, beta: f64) -> ProblemSpec {
    ProblemSpec {
        b: "1".into(),
        a0: "0.5 - y".into(),
        a1: "y - 0.5".into(),
        t_bar: 0.5,
        l: l.into(),
        dl_dy: None,
        d2l_dy2: None,
        nu,
        alpha,
        beta,
    }
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    let s = |x: &str| Some(x.to_string());
    let cfg = match name {
        "smooth-manufactured" => ScenarioConfig {
            name: name.into(),
            domain: unit_square(),
            mesh: MeshSpec {
                target_h: 1.0 / 8.0,
                levels: 4,
            },
            problem: ProblemSpec {
                a0: "y^2".into(),
                a1: "y^2".into(),
                t_bar: 10.0,
                ..abs_kink("0", 1.0, -10.0, 10.0)
            },
            fields: FieldSpec {
                y_exact: s("sin(pi*x1)*sin(pi*x2)"),
                ..FieldSpec::default()
            },
            params: Params::default(),
        },
        "kinked-manufactured" => ScenarioConfig {
            name: name.into(),
            domain: unit_square(),
            mesh: MeshSpec {
                target_h: 1.0 / 8.0,
                levels: 4,
            },
            problem: abs_kink("0", 1.0, 0.2, 1.0),
            fields: FieldSpec {
                y_exact: s("sin(pi*x1)*sin(pi*x2)"),
                ..FieldSpec::default()
            },
            params: Params::default(),
        },
        "radial-geometry" => ScenarioConfig {
            name: name.into(),
            domain: centered_square(),
            mesh: MeshSpec {
                target_h: 1.0 / 16.0,
                levels: 4,
            },
            problem: abs_kink("0", 1.0, -1.0, 1.0),
            fields: FieldSpec {
                y_bar: s(BUMP),
                y2: s(&format!("0.9*{BUMP}")),
                w: s(BUMP),
                phi: s("x1^2 + x2^2"),
                v: s("x1^2"),
                ..FieldSpec::default()
            },
            params: Params {
                t: Some(0.45),
                normals: Normals::Analytic,
                r_list: vec![0.02, 0.01],
                ..Params::default()
            },
        },
        "strip-geometry" => ScenarioConfig {
            name: name.into(),
            domain: unit_square(),
            mesh: MeshSpec {
                target_h: 1.0 / 8.0,
                levels: 3,
            },
            problem: abs_kink("0", 1.0, -1.0, 1.0),
            fields: FieldSpec {
                y_bar: s("x1"),
                y2: s("x1 - 0.2"),
                w: s("x1*(1-x1)*x2*(1-x2)"),
                phi: s("x1^2 + x2^2"),
                v: s("x1^2"),
                ..FieldSpec::default()
            },
            params: Params {
                r_list: vec![0.5, 0.25, 0.1, 0.01],
                ..Params::default()
            },
        },
        "tracking-ocp" => ScenarioConfig {
            name: name.into(),
            domain: centered_square(),
            mesh: MeshSpec {
                target_h: 1.0 / 8.0,
                levels: 3,
            },
            problem: abs_kink(&format!("0.5*(y - 1.2*{BUMP})^2"), 1e-2, -100.0, 100.0),
            fields: FieldSpec {
                v: s("exp(-4*((x1-0.3)^2 + x2^2))"),
                ..FieldSpec::default()
            },
            params: Params {
                r_list: vec![0.1, 0.05],
                soc: crate::config::SocSpec {
                    coordinate_directions: 2,
                    smooth_directions: 3,
                    ..Default::default()
                },
                ..Params::default()
            },
        },
        "cusp-green" => ScenarioConfig {
            name: name.into(),
            domain: centered_square(),
            mesh: MeshSpec {
                target_h: 1.0 / 4.0,
                levels: 5,
            },
            problem: abs_kink("0", 1.0, -1.0, 1.0),
            fields: FieldSpec {
                y_bar: s(BUMP),
                y2: s(&format!("{BUMP}*(1 - 0.3*x1^2)")),
                phi: s("x1^2 + x2^2"),
                v: s("x1^2"),
                ..FieldSpec::default()
            },
            params: Params {
                normals: Normals::Analytic,
                ..Params::default()
            },
        },
        _ => return None,
    };
    Some(cfg)
}
