//! Projected gradient for the box-constrained problem and sampled
//! second-order checks on the critical cone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::{BasePoint, CurvatureOptions};
use crate::error::{Error, Result};
use crate::mesh::{NodalField, TriMesh};
use crate::pde::{
    lagrangian_integral, lagrangian_load, solve_adjoint, solve_state_with, AdjointRhs, ControlProblem, StateOptions,
};
use crate::real::Real;

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(bound = "T: Real")]
pub struct OptimizerParams<T> {
    pub step0: T,
    pub max_iter: usize,
    pub tol_kkt: T,
    pub backtrack: T,
    pub armijo: T,
    #[serde(skip)]
    pub state: StateOptions<T>,
    pub linear_tol: T,
}

impl<T: Real> Default for OptimizerParams<T> {
    fn default() -> Self {
        OptimizerParams {
            step0: T::one(),
            max_iter: 500,
            tol_kkt: T::lit(1e-8),
            backtrack: T::half(),
            armijo: T::lit(1e-4),
            state: StateOptions {
                tol: T::lit(1e-13),
                ..StateOptions::default()
            },
            linear_tol: T::lit(1e-13),
        }
    }
}

impl<T: Real> OptimizerParams<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x > T::zero() && x < T::one();
        if !(self.step0 > T::zero()) || !(self.tol_kkt > T::zero()) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "step0, tol_kkt and max_iter must be positive".into(),
            ));
        }
        if !unit(self.backtrack) || !unit(self.armijo) {
            return Err(Error::InvalidArgument(
                "backtracking and Armijo factors must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// State, adjoint, objective value and gradient at one control.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub u: NodalField<T>,
    pub y: NodalField<T>,
    pub phi: NodalField<T>,
    pub j: T,
    /// φ + νu, the representative of j′(u) in the L² inner product.
    pub gradient: NodalField<T>,
}

fn state<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    u: &NodalField<T>,
    warm: Option<&NodalField<T>>,
    opts: &StateOptions<T>,
) -> Result<NodalField<T>> {
    let (y, st) = solve_state_with(problem, mesh, u, warm, opts)?;
    if !st.converged {
        return Err(Error::NonlinearSolve {
            iterations: st.iterations,
            increment: st.final_residual.as_f64(),
        });
    }
    Ok(y)
}

fn j_of<T: Real>(problem: &ControlProblem, mesh: &TriMesh<T>, u: &NodalField<T>, y: &NodalField<T>) -> Result<T> {
    Ok(lagrangian_integral(problem, mesh, y)? + T::half() * T::lit(problem.nu) * mesh.l2_inner(u, u))
}

pub fn evaluate<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    u: &NodalField<T>,
    warm: Option<&NodalField<T>>,
    params: &OptimizerParams<T>,
) -> Result<Evaluation<T>> {
    let y = state(problem, mesh, u, warm, &params.state)?;
    let j = j_of(problem, mesh, u, &y)?;
    let load = lagrangian_load(problem, mesh, &y)?;
    let phi = solve_adjoint(problem, mesh, &y, AdjointRhs::Load(load), params.linear_tol)?;
    let gradient = phi.axpy(T::lit(problem.nu), u);
    Ok(Evaluation {
        u: u.clone(),
        y,
        phi,
        j,
        gradient,
    })
}

/// j(u) = ∫ L(x, S(u)) dx + (ν/2)‖u‖².
pub fn objective<T: Real>(problem: &ControlProblem, mesh: &TriMesh<T>, u: &NodalField<T>) -> Result<T> {
    let y = state(problem, mesh, u, None, &OptimizerParams::default().state)?;
    j_of(problem, mesh, u, &y)
}

pub fn gradient<T: Real>(problem: &ControlProblem, mesh: &TriMesh<T>, u: &NodalField<T>) -> Result<NodalField<T>> {
    Ok(evaluate(problem, mesh, u, None, &OptimizerParams::default())?.gradient)
}

pub fn clamp_field<T: Real>(u: &NodalField<T>, alpha: T, beta: T) -> NodalField<T> {
    u.map(|x| x.max(alpha).min(beta))
}

fn bounds<T: Real>(problem: &ControlProblem) -> (T, T) {
    (T::lit(problem.alpha), T::lit(problem.beta))
}

fn kkt_of<T: Real>(problem: &ControlProblem, mesh: &TriMesh<T>, e: &Evaluation<T>) -> T {
    let (a, b) = bounds(problem);
    let target = clamp_field(&e.phi.scaled(-T::one() / T::lit(problem.nu)), a, b);
    mesh.l2_norm(&e.u.axpy(-T::one(), &target))
}

/// ‖u − clamp(−φ_u/ν, α, β)‖_{L²}.
pub fn kkt_residual<T: Real>(problem: &ControlProblem, mesh: &TriMesh<T>, u: &NodalField<T>) -> Result<T> {
    Ok(kkt_of(
        problem,
        mesh,
        &evaluate(problem, mesh, u, None, &OptimizerParams::default())?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct OptimizerStats<T> {
    pub iterations: usize,
    pub converged: bool,
    pub j_history: Vec<T>,
    pub kkt_history: Vec<T>,
    pub steps: Vec<T>,
    pub kkt_residual: T,
    pub j: T,
}

#[derive(Debug, Clone)]
pub struct OptimizerResult<T> {
    pub u_bar: NodalField<T>,
    pub y_bar: NodalField<T>,
    pub phi_bar: NodalField<T>,
    pub stats: OptimizerStats<T>,
}

impl<T: Real> OptimizerResult<T> {
    pub fn report_json(&self) -> serde_json::Value {
        serde_json::json!({
            "u_bar": self.u_bar.values.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
            "j": self.stats.j.as_f64(),
            "kkt_residual": self.stats.kkt_residual.as_f64(),
            "iterations": self.stats.iterations,
            "converged": self.stats.converged,
        })
    }
}

/// u⁺ = clamp(u − τ·(φ + νu), α, β) with a Barzilai–Borwein trial step and
/// Armijo backtracking on j (up to a relative roundoff floor). Returns the last iterate with
/// `converged = false` if `max_iter` is reached.
pub fn projected_gradient_solve<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    u0: &NodalField<T>,
    params: &OptimizerParams<T>,
) -> Result<OptimizerResult<T>> {
    params.validate()?;
    u0.check_len(mesh, "initial control")?;
    let (a, b) = bounds(problem);
    let mut cur = evaluate(problem, mesh, &clamp_field(u0, a, b), None, params)?;
    let mut kkt = kkt_of(problem, mesh, &cur);
    let mut stats = OptimizerStats {
        iterations: 0,
        converged: false,
        j_history: vec![cur.j],
        kkt_history: vec![kkt],
        steps: Vec::new(),
        kkt_residual: kkt,
        j: cur.j,
    };
    let mut tau = params.step0;
    let tau_min = T::lit(1e-14) * params.step0;
    while kkt > params.tol_kkt && stats.iterations < params.max_iter {
        let mut step = tau;
        let next = loop {
            let trial_u = clamp_field(&cur.u.axpy(-step, &cur.gradient), a, b);
            let d = trial_u.axpy(-T::one(), &cur.u);
            let slope = mesh.l2_inner(&cur.gradient, &d);
            let y = state(problem, mesh, &trial_u, Some(&cur.y), &params.state)?;
            let j = j_of(problem, mesh, &trial_u, &y)?;
            // j carries roundoff of order 1e-12·|j| from the state solve.
            let noise = T::lit(1e-12) * cur.j.abs();
            if j <= cur.j + params.armijo * slope + noise || step < tau_min {
                if step < tau_min && j > cur.j {
                    return Err(Error::OptimizerStalled {
                        iterations: stats.iterations,
                        residual: kkt.as_f64(),
                    });
                }
                break evaluate(problem, mesh, &trial_u, Some(&y), params)?;
            }
            step *= params.backtrack;
        };
        // BB1 step in the L² inner product for the next trial.
        let s = next.u.axpy(-T::one(), &cur.u);
        let g = next.gradient.axpy(-T::one(), &cur.gradient);
        let sy = mesh.l2_inner(&s, &g);
        let ss = mesh.l2_inner(&s, &s);
        tau = if sy > T::zero() && ss > T::zero() {
            (ss / sy)
                .min(T::lit(1e6) * params.step0)
                .max(T::lit(1e-6) * params.step0)
        } else {
            params.step0
        };
        stats.steps.push(step);
        cur = next;
        kkt = kkt_of(problem, mesh, &cur);
        stats.iterations += 1;
        stats.j_history.push(cur.j);
        stats.kkt_history.push(kkt);
    }
    stats.converged = kkt <= params.tol_kkt;
    stats.kkt_residual = kkt;
    stats.j = cur.j;
    Ok(OptimizerResult {
        u_bar: cur.u,
        y_bar: cur.y,
        phi_bar: cur.phi,
        stats,
    })
}

/// ∫(φ̄ + νū)(u − ū) dx, nonnegative for admissible u at a stationary ū.
pub fn variational_inequality<T: Real>(
    mesh: &TriMesh<T>,
    gradient: &NodalField<T>,
    u_bar: &NodalField<T>,
    u: &NodalField<T>,
) -> T {
    mesh.l2_inner(gradient, &u.axpy(-T::one(), u_bar))
}

// ---------------------------------------------------------------------------
// Critical cone and second-order checks

#[derive(Debug, Clone, PartialEq)]
pub struct ConeProjection<T> {
    pub direction: NodalField<T>,
    /// ‖v − P v‖_{L²}.
    pub violation: T,
}

/// Nodewise projection onto the critical cone at (ū, φ̄).
pub fn critical_cone_project<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    u_bar: &NodalField<T>,
    phi_bar: &NodalField<T>,
    v: &NodalField<T>,
    tol_active: T,
) -> ConeProjection<T> {
    let (a, b) = bounds::<T>(problem);
    let nu = T::lit(problem.nu);
    let values = (0..v.len())
        .map(|i| {
            let (u, mut x) = (u_bar.values[i], v.values[i]);
            if (phi_bar.values[i] + nu * u).abs() > tol_active {
                return T::zero();
            }
            if (u - a).abs() <= tol_active {
                x = x.max(T::zero());
            }
            if (u - b).abs() <= tol_active {
                x = x.min(T::zero());
            }
            x
        })
        .collect();
    let direction = NodalField::from_vec(values);
    let violation = mesh.l2_norm(&v.axpy(-T::one(), &direction));
    ConeProjection { direction, violation }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SocMode {
    Necessary,
    Sufficient,
}

#[derive(Debug, Clone)]
pub enum Directions<T> {
    Given(Vec<NodalField<T>>),
    /// `coordinate` hat functions at interior nodes plus `smooth` random
    /// Gaussian bumps, drawn from a seeded stream.
    Sample {
        coordinate: usize,
        smooth: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SONCReport<T> {
    pub direction_id: usize,
    pub q_s: T,
    pub q_1: T,
    pub q_2: T,
    pub q_total: T,
    pub cone_violation: T,
    /// Necessary mode: Q < −tol_q.
    pub violates: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SocSummary<T> {
    pub mode: SocMode,
    pub reports: Vec<SONCReport<T>>,
    pub min_q: Option<T>,
    /// Necessary: no sampled violation. Sufficient: min sampled Q > tol_q.
    /// A sampled check, not a certificate.
    pub holds: bool,
}

impl<T: Real> SocSummary<T> {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("direction_id,q_s,q_1,q_2,q_total,cone_violation\n");
        for r in self.reports.iter().filter(|r| r.note.is_none()) {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e}\n",
                r.direction_id, r.q_s, r.q_1, r.q_2, r.q_total, r.cone_violation
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SocOptions<T> {
    pub mode: SocMode,
    pub tol_active: T,
    pub tol_q: T,
    pub tol_kkt: T,
    pub curvature: CurvatureOptions<T>,
}

impl<T: Real> Default for SocOptions<T> {
    fn default() -> Self {
        SocOptions {
            mode: SocMode::Necessary,
            tol_active: T::lit(1e-6),
            tol_q: T::lit(1e-10),
            tol_kkt: T::lit(1e-8),
            curvature: CurvatureOptions::default(),
        }
    }
}

pub fn sample_directions<T: Real>(
    mesh: &TriMesh<T>,
    coordinate: usize,
    smooth: usize,
    seed: u64,
) -> Vec<NodalField<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.num_vertices();
    let interior: Vec<usize> = (0..n).filter(|&i| !mesh.is_boundary(i)).collect();
    let mut out = Vec::with_capacity(coordinate + smooth);
    for _ in 0..coordinate.min(interior.len()) {
        let mut f = NodalField::zeros(n);
        f.values[interior[rng.gen_range(0..interior.len())]] = T::one();
        out.push(f);
    }
    let (lo, hi) = mesh
        .vertices()
        .iter()
        .fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), p| {
            (
                [lo[0].min(p[0].as_f64()), lo[1].min(p[1].as_f64())],
                [hi[0].max(p[0].as_f64()), hi[1].max(p[1].as_f64())],
            )
        });
    let diam = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    for _ in 0..smooth {
        let c = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        let r = diam * rng.gen_range(0.1..0.5);
        let amp: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        out.push(mesh.interpolate(|p| {
            let d2 = (p[0].as_f64() - c[0]).powi(2) + (p[1].as_f64() - c[1]).powi(2);
            T::lit(amp * (-d2 / (r * r)).exp())
        }));
    }
    out
}

/// Projects each direction into the critical cone, normalizes it in L² and
/// evaluates Q at the given base point. No stationarity check.
pub fn evaluate_directions<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    base: &BasePoint<T>,
    directions: &[NodalField<T>],
    opts: &SocOptions<T>,
) -> Result<SocSummary<T>> {
    let mut reports = Vec::with_capacity(directions.len());
    for (id, v) in directions.iter().enumerate() {
        v.check_len(mesh, "direction")?;
        let norm = mesh.l2_norm(v);
        let skipped = |note: &str, violation: T| SONCReport {
            direction_id: id,
            q_s: T::zero(),
            q_1: T::zero(),
            q_2: T::zero(),
            q_total: T::zero(),
            cone_violation: violation,
            violates: false,
            note: Some(note.to_string()),
        };
        if norm == T::zero() {
            reports.push(skipped("zero direction", T::zero()));
            continue;
        }
        let proj = critical_cone_project(
            problem,
            mesh,
            &base.u,
            &base.phi,
            &v.scaled(T::one() / norm),
            opts.tol_active,
        );
        let pn = mesh.l2_norm(&proj.direction);
        if pn <= T::lit(1e-12) {
            reports.push(skipped(
                "direction projects to zero in the critical cone",
                proj.violation,
            ));
            continue;
        }
        let d = proj.direction.scaled(T::one() / pn);
        let q = base.curvature(problem, mesh, &d, &opts.curvature)?;
        reports.push(SONCReport {
            direction_id: id,
            q_s: q.q_s,
            q_1: q.q_1,
            q_2: q.q_2,
            q_total: q.total,
            cone_violation: proj.violation,
            violates: q.total < -opts.tol_q,
            note: None,
        });
    }
    let min_q = reports
        .iter()
        .filter(|r| r.note.is_none())
        .map(|r| r.q_total)
        .fold(None, |m: Option<T>, q| Some(m.map_or(q, |m| m.min(q))));
    let holds = match opts.mode {
        SocMode::Necessary => reports.iter().all(|r| !r.violates),
        SocMode::Sufficient => min_q.is_some_and(|q| q > opts.tol_q),
    };
    Ok(SocSummary {
        mode: opts.mode,
        reports,
        min_q,
        holds,
    })
}

/// Sampled second-order check at a stationary ū.
pub fn check_soc<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    u_bar: &NodalField<T>,
    directions: Directions<T>,
    opts: &SocOptions<T>,
) -> Result<SocSummary<T>> {
    let base = BasePoint::new(problem, mesh, u_bar, &opts.curvature)?;
    let e = Evaluation {
        u: u_bar.clone(),
        y: base.y.clone(),
        phi: base.phi.clone(),
        j: T::zero(),
        gradient: NodalField::zeros(0),
    };
    let kkt = kkt_of(problem, mesh, &e);
    let tol = T::lit(10.0) * opts.tol_kkt;
    if !(kkt <= tol) {
        return Err(Error::NotStationary {
            residual: kkt.as_f64(),
            tol: tol.as_f64(),
        });
    }
    let dirs = match directions {
        Directions::Given(d) => d,
        Directions::Sample {
            coordinate,
            smooth,
            seed,
        } => sample_directions(mesh, coordinate, smooth, seed),
    };
    evaluate_directions(problem, mesh, &base, &dirs, opts)
}

/// Ratios (j(ū + r v) − j(ū)) / ‖r v‖² along a direction.
pub fn growth_ratios<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    u_bar: &NodalField<T>,
    v: &NodalField<T>,
    r_list: &[T],
    params: &OptimizerParams<T>,
) -> Result<Vec<T>> {
    let base = evaluate(problem, mesh, u_bar, None, params)?;
    let vn2 = mesh.l2_inner(v, v);
    r_list
        .iter()
        .map(|&r| {
            let u = u_bar.axpy(r, v);
            let y = state(problem, mesh, &u, Some(&base.y), &params.state)?;
            Ok((j_of(problem, mesh, &u, &y)? - base.j) / (r * r * vn2))
        })
        .collect()
}
