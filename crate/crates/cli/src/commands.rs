//! One function per command. Each returns the files to write and a few
//! scalar metrics that convergence studies tabulate.

use serde_json::{json, Value};

use qlkink::curvature::{
    limit_experiment, q2_liminf_estimate, BasePoint, CurvatureOptions, LimitFactor, LimitOptions, PhiSource,
};
use qlkink::green::{green_residual, GreenFunction, GreenOptions, NormalSource};
use qlkink::levelset::{extract_level_set, jump_functional};
use qlkink::mesh::{NodalField, TriMesh};
use qlkink::optimize::{
    check_soc, critical_cone_project, evaluate, growth_ratios, projected_gradient_solve, sample_directions, Directions,
    OptimizerResult, SocOptions,
};
use qlkink::pde::{l2_error, solve_state_with, ManufacturedControl};

use crate::config::{require, Normals, Scenario};
use crate::CliError;

pub const COMMANDS: [&str; 8] = [
    "solve-state",
    "solve-ocp",
    "extract-levelset",
    "verify-green",
    "jump-functional",
    "an-limits",
    "curvature",
    "check-soc",
];

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    /// Ordered (name, value); the first entry is the one a convergence study tabulates.
    pub metrics: Vec<(String, f64)>,
}

impl Outcome {
    fn file(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn json(&mut self, name: &str, v: &Value) {
        self.file(name, serde_json::to_string_pretty(v).expect("json") + "\n");
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.push((name.to_string(), v));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Metrics that measure an error, so an observed order makes sense.
pub fn is_error_metric(name: &str) -> bool {
    matches!(name, "l2_error" | "residual")
}

pub fn run_command(cmd: &str, sc: &Scenario, mesh: &TriMesh<f64>, seed: u64) -> Result<Outcome, CliError> {
    match cmd {
        "solve-state" => solve_state(sc, mesh),
        "solve-ocp" => solve_ocp(sc, mesh),
        "extract-levelset" => extract(sc, mesh),
        "verify-green" => verify_green(sc, mesh),
        "jump-functional" => jump(sc, mesh),
        "an-limits" => an_limits(sc, mesh),
        "curvature" => curvature(sc, mesh, seed),
        "check-soc" => soc(sc, mesh, seed),
        other => Err(CliError::UnknownCommand(other.to_string())),
    }
}

fn vec_json(f: &NodalField<f64>) -> Value {
    json!(f.values)
}

fn interp(mesh: &TriMesh<f64>, e: &qlkink::expr::Expr) -> Result<NodalField<f64>, CliError> {
    mesh.interpolate_expr(e).map_err(CliError::from_core)
}

fn solve_state(sc: &Scenario, mesh: &TriMesh<f64>) -> Result<Outcome, CliError> {
    let f = &sc.fields;
    let u = match (&f.u, &f.y_exact) {
        (Some(u), _) => interp(mesh, u)?,
        (None, Some(y)) => ManufacturedControl::new(&sc.problem, y.clone())
            .and_then(|m| m.interpolate(mesh))
            .map_err(CliError::from_core)?,
        (None, None) => {
            return Err(CliError::Validation(
                "missing field(s): fields.u or fields.y_exact".into(),
            ))
        }
    };
    let (y, stats) = solve_state_with(&sc.problem, mesh, &u, None, &sc.config.params.state_options())
        .map_err(CliError::from_core)?;
    if !stats.converged {
        return Err(CliError::Solver(format!(
            "state iteration did not converge in {} steps (last increment {:e})",
            stats.iterations, stats.final_residual
        )));
    }
    let mut out = Outcome::default();
    let err = match &f.y_exact {
        Some(ye) => Some(l2_error(mesh, &y, &ye.expr).map_err(CliError::from_core)?),
        None => None,
    };
    if let Some(e) = err {
        out.metric("l2_error", e);
    }
    out.metric("h_max", mesh.h_max());
    out.metric("iterations", stats.iterations as f64);
    out.json(
        "state.json",
        &json!({
            "h_max": mesh.h_max(),
            "l2_error": err,
            "stats": stats,
            "y": vec_json(&y),
        }),
    );
    Ok(out)
}

fn optimize(sc: &Scenario, mesh: &TriMesh<f64>) -> Result<OptimizerResult<f64>, CliError> {
    let u0 = match &sc.fields.u0 {
        Some(e) => interp(mesh, e)?,
        None => NodalField::zeros(mesh.num_vertices()),
    };
    projected_gradient_solve(&sc.problem, mesh, &u0, &sc.config.params.optimizer_params()).map_err(CliError::from_core)
}

/// ū from `fields.u` when given, else from the optimizer.
fn base_control(
    sc: &Scenario,
    mesh: &TriMesh<f64>,
) -> Result<(NodalField<f64>, Option<OptimizerResult<f64>>), CliError> {
    match &sc.fields.u {
        Some(e) => Ok((interp(mesh, e)?, None)),
        None => {
            let r = optimize(sc, mesh)?;
            Ok((r.u_bar.clone(), Some(r)))
        }
    }
}

fn solve_ocp(sc: &Scenario, mesh: &TriMesh<f64>) -> Result<Outcome, CliError> {
    let r = optimize(sc, mesh)?;
    let mut out = Outcome::default();
    out.metric("kkt_residual", r.stats.kkt_residual);
    out.metric("j", r.stats.j);
    out.metric("iterations", r.stats.iterations as f64);
    out.metric("h_max", mesh.h_max());
    let mut report = r.report_json();
    report["h_max"] = json!(mesh.h_max());
    out.json("ocp.json", &report);
    let mut csv = String::from("iteration,j,kkt_residual\n");
    for (i, (j, k)) in r.stats.j_history.iter().zip(&r.stats.kkt_history).enumerate() {
        csv.push_str(&format!("{i},{j:e},{k:e}\n"));
    }
    out.file("ocp_history.csv", csv);
    if !r.stats.converged {
        return Err(CliError::SolverWithOutput(
            format!(
                "optimizer stopped after {} iterations with kkt residual {:e}",
                r.stats.iterations, r.stats.kkt_residual
            ),
            out,
        ));
    }
    Ok(out)
}

fn extract(sc: &Scenario, mesh: &TriMesh<f64>) -> Result<Outcome, CliError> {
    let y = require(&[("fields.y_bar", &sc.fields.y_bar)])?[0];
    let yh = interp(mesh, &y.expr)?;
    let dec = extract_level_set(mesh, &yh, sc.level_value()).map_err(CliError::from_core)?;
    let mut out = Outcome::default();
    out.metric("total_length", dec.total_length());
    out.metric("components", dec.components.len() as f64);
    out.metric("h_max", mesh.h_max());
    out.file("levelset.json", dec.to_json() + "\n");
    Ok(out)
}

fn verify_green(sc: &Scenario, mesh: &TriMesh<f64>) -> Result<Outcome, CliError> {
    let f = &sc.fields;
    let req = require(&[("fields.y_bar", &f.y_bar), ("fields.y2", &f.y2), ("fields.phi", &f.phi)])?;
    let (y1, y2, phi) = (req[0], req[1], req[2]);
    let v = require(&[("fields.v", &f.v)])?[0];
    let vd = qlkink::expr::DiffExpr::new(v.clone()).map_err(|e| CliError::Validation(format!("fields.v: {e}")))?;
    let p = &sc.config.params;
    let window = p.window.as_deref();
    let opts = GreenOptions {
        window,
        theta_grad: p.theta_grad,
        normals: match p.normals {
            Normals::Discrete => NormalSource::Discrete,
            Normals::Analytic => NormalSource::Analytic { y1, y2 },
        },
    };
    let (h1, h2) = (interp(mesh, &y1.expr)?, interp(mesh, &y2.expr)?);
    let rep = green_residual(
        mesh,
        &h1,
        &h2,
        sc.level_value(),
        GreenFunction::Analytic(&vd),
        phi,
        &opts,
    )
    .map_err(CliError::from_core)?;
    let mut out = Outcome::default();
    out.metric("residual", rep.residual);
    out.metric("lhs", rep.lhs);
    out.metric("rhs", rep.rhs);
    out.metric("h_max", mesh.h_max());
    out.file(
        "green.csv",
        format!(
            "h_max,lhs,rhs,residual\n{:e},{:e},{:e},{:e}\n",
            rep.h_max, rep.lhs, rep.rhs, rep.residual
        ),
    );
    out.json("green.json", &json!(rep));
    Ok(out)
}

fn jump(sc: &Scenario, mesh: &TriMesh<f64>) -> Result<Outcome, CliError> {
    let y = require(&[("fields.y_bar", &sc.fields.y_bar)])?[0];
    let yh = interp(mesh, &y.expr)?;
    let a = &sc.problem.a;
    let rep =
        jump_functional(mesh, &yh, a.t_bar(), a.sigma0(), &sc.config.params.r_list).map_err(CliError::from_core)?;
    let mut out = Outcome::default();
    out.metric("extrapolated", rep.extrapolated);
    out.metric("h_max", mesh.h_max());
    out.file("jump.csv", rep.to_csv());
    out.json("jump.json", &json!(rep));
    Ok(out)
}

fn an_limits(sc: &Scenario, mesh: &TriMesh<f64>) -> Result<Outcome, CliError> {
    let f = &sc.fields;
    let y = require(&[("fields.y_bar", &f.y_bar), ("fields.phi", &f.phi)])?;
    let (yb, phi) = (y[0], y[1]);
    let w = require(&[("fields.w", &f.w)])?[0];
    let (yh, wh) = (interp(mesh, &yb.expr)?, interp(mesh, w)?);
    let p = &sc.config.params;
    let opts = LimitOptions {
        delta: p.delta,
        theta_grad: p.theta_grad,
    };
    let t = sc.problem.a.t_bar();
    let ph = PhiSource::Analytic(phi);
    let run = |f: LimitFactor| {
        limit_experiment(mesh, &yh, &wh, ph, t, p.component_index, p.epsilon, &p.s_list, f, &opts)
            .map_err(CliError::from_core)
    };
    let an = run(LimitFactor::An)?;
    let tilde = run(LimitFactor::Tilde)?;
    let comb = run(LimitFactor::Combined)?;
    let mut out = Outcome::default();
    let rel = |e: f64| if an.target != 0.0 { e / an.target.abs() } else { e };
    out.metric("an_error", rel(an.final_error()));
    out.metric("an_tilde_error", rel(tilde.final_error()));
    out.metric("combined_value", rel(*comb.values.last().expect("nonempty")));
    out.metric("target", an.target);
    out.metric("h_max", mesh.h_max());
    out.file("an.csv", an.to_csv());
    out.file("an_tilde.csv", tilde.to_csv());
    out.file("combined.csv", comb.to_csv());
    out.json(
        "an_limits.json",
        &json!({"an": an, "an_tilde": tilde, "combined": comb}),
    );
    Ok(out)
}

fn curvature(sc: &Scenario, mesh: &TriMesh<f64>, seed: u64) -> Result<Outcome, CliError> {
    let (u_bar, _) = base_control(sc, mesh)?;
    let p = &sc.config.params;
    let v = match &sc.fields.v {
        Some(e) => interp(mesh, e)?,
        None => sample_directions(mesh, 0, 1, seed).pop().expect("one direction"),
    };
    let v = v.scaled(1.0 / mesh.l2_norm(&v).max(f64::MIN_POSITIVE));
    let copts = CurvatureOptions {
        state: qlkink::pde::StateOptions {
            tol: p.optimizer.state_tol,
            ..p.state_options()
        },
        linear_tol: p.linear_tol.min(1e-13),
        theta_grad: p.theta_grad,
    };
    let cf = CliError::from_core;
    let base = BasePoint::new(&sc.problem, mesh, &u_bar, &copts).map_err(cf)?;
    let rep = base.curvature(&sc.problem, mesh, &v, &copts).map_err(cf)?;
    let lim = q2_liminf_estimate(
        &sc.problem,
        mesh,
        &base,
        &v,
        &p.liminf_s_list,
        &LimitOptions {
            delta: p.delta,
            theta_grad: p.theta_grad,
        },
        &copts.state,
    )
    .map_err(cf)?;
    let z = base.linearized(mesh, &v, copts.linear_tol).map_err(cf)?;
    let a = &sc.problem.a;
    let sigma = jump_functional(mesh, &base.y, a.t_bar(), a.sigma0(), &p.r_list).map_err(cf)?;
    let bound = sigma.extrapolated * mesh.max_gradient(&base.phi) * z.max_abs().powi(2);
    let mut out = Outcome::default();
    out.metric("q_total", rep.total);
    out.metric("q_2", rep.q_2);
    out.metric("q2_liminf", lim.final_value);
    out.metric("sigma", sigma.extrapolated);
    out.metric("sigma_bound", bound);
    out.metric("h_max", mesh.h_max());
    let mut csv = String::from("s,value\n");
    for (s, v) in lim.s_list.iter().zip(&lim.values) {
        csv.push_str(&format!("{s:e},{v:e}\n"));
    }
    out.file("q2_liminf.csv", csv);
    out.json(
        "curvature.json",
        &json!({
            "report": rep,
            "q2_liminf": lim,
            "sigma": sigma.extrapolated,
            "grad_phi_linf": mesh.max_gradient(&base.phi),
            "z_linf": z.max_abs(),
            "sigma_bound": bound,
        }),
    );
    Ok(out)
}

fn soc(sc: &Scenario, mesh: &TriMesh<f64>, seed: u64) -> Result<Outcome, CliError> {
    let (u_bar, _) = base_control(sc, mesh)?;
    let p = &sc.config.params;
    let opts = SocOptions {
        mode: p.soc.mode,
        tol_active: p.soc.tol_active,
        tol_q: p.soc.tol_q,
        tol_kkt: p.optimizer.tol_kkt,
        curvature: CurvatureOptions {
            state: qlkink::pde::StateOptions {
                tol: p.optimizer.state_tol,
                ..p.state_options()
            },
            linear_tol: p.linear_tol.min(1e-13),
            theta_grad: p.theta_grad,
        },
    };
    let dirs = Directions::Sample {
        coordinate: p.soc.coordinate_directions,
        smooth: p.soc.smooth_directions,
        seed,
    };
    let s = check_soc(&sc.problem, mesh, &u_bar, dirs, &opts).map_err(CliError::from_core)?;
    let mut out = Outcome::default();
    out.metric("min_q", s.min_q.unwrap_or(f64::NAN));
    out.metric("holds", if s.holds { 1.0 } else { 0.0 });
    out.metric("h_max", mesh.h_max());
    out.file("soc.csv", s.to_csv());
    let mut report = json!(s);
    if let Some(v) = &sc.fields.v {
        // Empirical quadratic growth along the critical-cone part of v.
        let params = p.optimizer_params();
        let base = evaluate(&sc.problem, mesh, &u_bar, None, &params).map_err(CliError::from_core)?;
        let v = interp(mesh, v)?;
        let dir = critical_cone_project(&sc.problem, mesh, &u_bar, &base.phi, &v, p.soc.tol_active).direction;
        if mesh.l2_norm(&dir) > 0.0 {
            let ratios =
                growth_ratios(&sc.problem, mesh, &u_bar, &dir, &p.r_list, &params).map_err(CliError::from_core)?;
            let mut csv = String::from("r,growth_ratio\n");
            for (r, g) in p.r_list.iter().zip(&ratios) {
                csv.push_str(&format!("{r:e},{g:e}\n"));
            }
            out.file("growth.csv", csv);
            out.metric("min_growth", ratios.iter().copied().fold(f64::INFINITY, f64::min));
            report["growth"] = json!({ "r": p.r_list, "ratio": ratios });
        }
    }
    out.json("soc.json", &report);
    Ok(out)
}
