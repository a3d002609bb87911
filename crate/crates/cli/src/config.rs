//! Scenario files: JSON in, validated problem data out.

use serde::{Deserialize, Serialize};

use qlkink::expr::{parse_expr, DiffExpr, Expr};
use qlkink::mesh::{build_mesh, PolygonDomain, TriMesh};
use qlkink::optimize::{OptimizerParams, SocMode};
use qlkink::pde::{ControlProblem, PiecewiseC2Coefficient, StateOptions};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub domain: DomainSpec,
    pub mesh: MeshSpec,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub fields: FieldSpec,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Rectangle { x0: f64, y0: f64, x1: f64, y1: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub target_h: f64,
    #[serde(default = "one")]
    pub levels: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "unit_b")]
    pub b: String,
    pub a0: String,
    pub a1: String,
    pub t_bar: f64,
    #[serde(rename = "L", default = "zero_l")]
    pub l: String,
    #[serde(rename = "dL_dy", default, skip_serializing_if = "Option::is_none")]
    pub dl_dy: Option<String>,
    #[serde(rename = "d2L_dy2", default, skip_serializing_if = "Option::is_none")]
    pub d2l_dy2: Option<String>,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn unit_b() -> String {
    "1".into()
}

fn zero_l() -> String {
    "0".into()
}

/// Analytic fields, all optional; commands name the ones they need.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_exact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_bar: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normals {
    Discrete,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Level value for level-set and Green commands; defaults to t_bar.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub epsilon: f64,
    pub component_index: usize,
    pub s_list: Vec<f64>,
    pub liminf_s_list: Vec<f64>,
    pub r_list: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub theta_grad: f64,
    pub normals: Normals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<[f64; 2]>>,
    pub state_tol: f64,
    pub state_max_iter: usize,
    pub linear_tol: f64,
    pub optimizer: OptimizerSpec,
    pub soc: SocSpec,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            t: None,
            epsilon: 0.15,
            component_index: 0,
            s_list: vec![1e-1, 3e-2, 1e-2],
            liminf_s_list: vec![1e-1, 1e-2, 1e-3],
            r_list: vec![0.1, 0.05, 0.025],
            delta: None,
            theta_grad: 1e-8,
            normals: Normals::Discrete,
            window: None,
            state_tol: 1e-10,
            state_max_iter: 200,
            linear_tol: 1e-12,
            optimizer: OptimizerSpec::default(),
            soc: SocSpec::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSpec {
    pub step0: f64,
    pub max_iter: usize,
    pub tol_kkt: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub state_tol: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let d = OptimizerParams::<f64>::default();
        OptimizerSpec {
            step0: d.step0,
            max_iter: d.max_iter,
            tol_kkt: d.tol_kkt,
            backtrack: d.backtrack,
            armijo: d.armijo,
            state_tol: d.state.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SocSpec {
    pub mode: SocMode,
    pub coordinate_directions: usize,
    pub smooth_directions: usize,
    pub tol_active: f64,
    pub tol_q: f64,
}

impl Default for SocSpec {
    fn default() -> Self {
        SocSpec {
            mode: SocMode::Necessary,
            coordinate_directions: 5,
            smooth_directions: 10,
            tol_active: 1e-6,
            tol_q: 1e-10,
        }
    }
}

/// A parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub domain: PolygonDomain<f64>,
    pub problem: ControlProblem,
    pub fields: ParsedFields,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedFields {
    pub y_exact: Option<DiffExpr>,
    pub u: Option<Expr>,
    pub u0: Option<Expr>,
    pub y_bar: Option<DiffExpr>,
    pub y2: Option<DiffExpr>,
    pub w: Option<Expr>,
    pub phi: Option<DiffExpr>,
    pub v: Option<Expr>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Parses every expression and checks every numeric constraint,
    /// reporting all problems at once.
    pub fn build(&self) -> Result<Scenario, CliError> {
        let mut errs: Vec<String> = Vec::new();
        let domain = match &self.domain {
            DomainSpec::Rectangle { x0, y0, x1, y1 } => PolygonDomain::rectangle(*x0, *y0, *x1, *y1),
            DomainSpec::Polygon { vertices } => PolygonDomain::new(vertices.clone()),
        }
        .map_err(|e| errs.push(format!("domain: {e}")))
        .ok();
        if !(self.mesh.target_h > 0.0) {
            errs.push("mesh.target_h: must be positive".into());
        }
        if self.mesh.levels == 0 {
            errs.push("mesh.levels: must be at least 1".into());
        }
        let pr = &self.problem;
        if !(pr.nu > 0.0) {
            errs.push("problem.nu: must be positive".into());
        }
        if !(pr.alpha < pr.beta) {
            errs.push("problem.alpha, problem.beta: need alpha < beta".into());
        }
        let mut expr = |name: &str, text: &str| -> Option<Expr> {
            parse_expr(text).map_err(|e| errs.push(format!("{name}: {e}"))).ok()
        };
        let b = expr("problem.b", &pr.b);
        let l = expr("problem.L", &pr.l);
        let dl = pr.dl_dy.as_deref().map(|s| expr("problem.dL_dy", s));
        let d2l = pr.d2l_dy2.as_deref().map(|s| expr("problem.d2L_dy2", s));
        let f = &self.fields;
        let mut opt = |name: &str, s: &Option<String>| s.as_deref().and_then(|t| expr(&format!("fields.{name}"), t));
        let raw = [
            opt("y_exact", &f.y_exact),
            opt("u", &f.u),
            opt("u0", &f.u0),
            opt("y_bar", &f.y_bar),
            opt("y2", &f.y2),
            opt("w", &f.w),
            opt("phi", &f.phi),
            opt("v", &f.v),
        ];
        let mut diff = |name: &str, e: &Option<Expr>| {
            e.clone().and_then(|e| {
                DiffExpr::new(e)
                    .map_err(|err| errs.push(format!("fields.{name}: {err}")))
                    .ok()
            })
        };
        let fields = ParsedFields {
            y_exact: diff("y_exact", &raw[0]),
            u: raw[1].clone(),
            u0: raw[2].clone(),
            y_bar: diff("y_bar", &raw[3]),
            y2: diff("y2", &raw[4]),
            w: raw[5].clone(),
            phi: diff("phi", &raw[6]),
            v: raw[7].clone(),
        };
        let coeff = PiecewiseC2Coefficient::parse(&pr.a0, &pr.a1, pr.t_bar)
            .map_err(|e| errs.push(format!("problem.a0, problem.a1: {e}")))
            .ok();
        let bd = b.and_then(|b| DiffExpr::new(b).map_err(|e| errs.push(format!("problem.b: {e}"))).ok());
        self.params.check(&mut errs);
        let problem = match (bd, coeff, l) {
            (Some(b), Some(a), Some(l)) if errs.is_empty() => {
                let built = match (dl, d2l) {
                    (Some(Some(dl)), Some(Some(d2l))) => {
                        ControlProblem::new(b, a, l, dl, d2l, pr.nu, pr.alpha, pr.beta)
                    }
                    (None, None) => ControlProblem::with_lagrangian(b, a, l, pr.nu, pr.alpha, pr.beta),
                    _ => {
                        errs.push("problem.dL_dy, problem.d2L_dy2: give both or neither".into());
                        return Err(CliError::Validation(errs.join("; ")));
                    }
                };
                built.map_err(|e| errs.push(format!("problem: {e}"))).ok()
            }
            _ => None,
        };
        match (domain, problem) {
            (Some(domain), Some(problem)) if errs.is_empty() => Ok(Scenario {
                config: self.clone(),
                domain,
                problem,
                fields,
            }),
            _ => Err(CliError::Validation(errs.join("; "))),
        }
    }
}

impl Params {
    fn check(&self, errs: &mut Vec<String>) {
        let decreasing = |v: &[f64]| !v.is_empty() && v.iter().all(|&x| x > 0.0) && v.windows(2).all(|w| w[0] > w[1]);
        for (name, list) in [
            ("params.s_list", &self.s_list),
            ("params.liminf_s_list", &self.liminf_s_list),
            ("params.r_list", &self.r_list),
        ] {
            if !decreasing(list) {
                errs.push(format!("{name}: must be nonempty, positive and strictly decreasing"));
            }
        }
        for (name, x) in [
            ("params.epsilon", self.epsilon),
            ("params.state_tol", self.state_tol),
            ("params.linear_tol", self.linear_tol),
            ("params.optimizer.step0", self.optimizer.step0),
            ("params.optimizer.tol_kkt", self.optimizer.tol_kkt),
            ("params.optimizer.state_tol", self.optimizer.state_tol),
        ] {
            if !(x > 0.0) {
                errs.push(format!("{name}: must be positive"));
            }
        }
        for (name, x) in [
            ("params.optimizer.backtrack", self.optimizer.backtrack),
            ("params.optimizer.armijo", self.optimizer.armijo),
        ] {
            if !(x > 0.0 && x < 1.0) {
                errs.push(format!("{name}: must lie in (0, 1)"));
            }
        }
        if self.delta.is_some_and(|d| !(d > 0.0)) {
            errs.push("params.delta: must be positive".into());
        }
    }

    pub fn state_options(&self) -> StateOptions<f64> {
        StateOptions {
            tol: self.state_tol,
            max_iter: self.state_max_iter,
            linear_tol: self.linear_tol,
        }
    }

    pub fn optimizer_params(&self) -> OptimizerParams<f64> {
        let o = &self.optimizer;
        OptimizerParams {
            step0: o.step0,
            max_iter: o.max_iter,
            tol_kkt: o.tol_kkt,
            backtrack: o.backtrack,
            armijo: o.armijo,
            state: StateOptions {
                tol: o.state_tol,
                max_iter: self.state_max_iter,
                linear_tol: self.linear_tol.min(1e-13),
            },
            linear_tol: self.linear_tol.min(1e-13),
        }
    }
}

impl Scenario {
    /// Mesh of refinement level `k`: spacing target_h / 2^k.
    pub fn mesh(&self, level: usize) -> Result<TriMesh<f64>, CliError> {
        let h = self.config.mesh.target_h / f64::powi(2.0, level as i32);
        build_mesh(&self.domain, h).map_err(CliError::from_core)
    }

    pub fn level_value(&self) -> f64 {
        self.config.params.t.unwrap_or(self.problem.a.t_bar())
    }
}

/// Names every missing field, e.g. `missing field(s): fields.phi, fields.w`.
pub fn require<'a, T>(items: &[(&str, &'a Option<T>)]) -> Result<Vec<&'a T>, CliError> {
    let missing: Vec<&str> = items.iter().filter(|(_, v)| v.is_none()).map(|(n, _)| *n).collect();
    if !missing.is_empty() {
        return Err(CliError::Validation(format!(
            "missing field(s): {}",
            missing.join(", ")
        )));
    }
    Ok(items.iter().map(|(_, v)| v.as_ref().expect("checked")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin;

    #[test]
    fn minimal_file_takes_defaults() {
        let text = r#"{
            "name": "m",
            "domain": { "kind": "rectangle", "x0": 0, "y0": 0, "x1": 1, "y1": 1 },
            "mesh": { "target_h": 0.5 },
            "problem": { "a0": "y^2", "a1": "y^2", "t_bar": 0, "nu": 1, "alpha": -1, "beta": 1 },
            "fields": {},
            "params": {}
        }"#;
        let sc = ScenarioConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(sc.config.mesh.levels, 1);
        assert_eq!(sc.config.problem.b, "1");
        assert_eq!(sc.config.params.epsilon, 0.15);
        assert_eq!(sc.level_value(), 0.0);
        assert_eq!(sc.mesh(1).unwrap().h_max(), sc.mesh(0).unwrap().h_max() / 2.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&builtin("strip-geometry").unwrap().to_json()).unwrap();
        v["problem"]["gamma"] = serde_json::json!(1.0);
        let err = ScenarioConfig::from_json(&v.to_string()).unwrap_err();
        assert!(
            matches!(err, CliError::Validation(ref m) if m.contains("gamma")),
            "{err}"
        );
    }

    #[test]
    fn all_problems_reported_together() {
        let mut cfg = builtin("strip-geometry").unwrap();
        cfg.mesh.target_h = 0.0;
        cfg.problem.alpha = 2.0;
        cfg.problem.beta = 1.0;
        cfg.problem.a1 = "y +".into();
        let Err(CliError::Validation(m)) = cfg.build() else {
            panic!("expected a validation error")
        };
        for key in ["mesh.target_h", "problem.alpha", "problem.a1"] {
            assert!(m.contains(key), "{key} missing from: {m}");
        }
    }

    #[test]
    fn require_names_missing_fields() {
        let (a, b): (Option<u8>, Option<u8>) = (Some(1), None);
        assert_eq!(require(&[("fields.a", &a)]).unwrap(), vec![&1]);
        let Err(CliError::Validation(m)) = require(&[("fields.a", &a), ("fields.b", &b)]) else {
            panic!()
        };
        assert!(m.contains("fields.b") && !m.contains("fields.a"));
    }
}
