//! State, linearized and adjoint solves for
//! −div[(b + a(y))∇y] = u with homogeneous Dirichlet data.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{DiffExpr, EvalError, Expr, ScalarFn, Var, Vars};
use crate::geometry::{clip_convex, dot, Affine, Point, TriRule, DEGREE5};
use crate::mesh::{NodalField, TriMesh};
use crate::real::Real;
use crate::sparse::{
    assemble_drift_weighted, assemble_drift_weighted_transposed, assemble_weighted_stiffness, linear_solve, CsrMatrix,
};

/// Which branch of the coefficient is active on a piece of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// y < t̄ (a0).
    Below,
    /// y > t̄ (a1).
    Above,
    /// y ≡ t̄ on the whole piece; derivatives are taken as 0 there.
    On,
}

/// a(t) = a0(t) for t ≤ t̄ and a1(t) for t > t̄, both branches C².
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseC2Coefficient {
    a0: ScalarFn,
    a1: ScalarFn,
    t_bar: f64,
    sigma0: f64,
}

impl PiecewiseC2Coefficient {
    pub fn new(a0: ScalarFn, a1: ScalarFn, t_bar: f64) -> Result<Self> {
        if !t_bar.is_finite() {
            return Err(Error::InvalidArgument("t_bar must be finite".into()));
        }
        let gap = (a0.value(t_bar)? - a1.value(t_bar)?).abs();
        if !(gap <= 1e-12) {
            return Err(Error::DiscontinuousCoefficient { gap });
        }
        let sigma0 = (a0.deriv(t_bar)? - a1.deriv(t_bar)?).abs();
        let c = PiecewiseC2Coefficient { a0, a1, t_bar, sigma0 };
        c.check_nonnegative(t_bar - 10.0, t_bar + 10.0, 401)?;
        Ok(c)
    }

    pub fn parse(a0: &str, a1: &str, t_bar: f64) -> Result<Self> {
        Self::new(ScalarFn::parse(a0)?, ScalarFn::parse(a1)?, t_bar)
    }

    /// A coefficient without a kink: both branches equal `a`.
    pub fn smooth(a: ScalarFn, t_bar: f64) -> Result<Self> {
        Self::new(a.clone(), a, t_bar)
    }

    pub fn zero() -> Self {
        let z = ScalarFn::new(Expr::Num(0.0)).expect("constant");
        PiecewiseC2Coefficient {
            a0: z.clone(),
            a1: z,
            t_bar: 0.0,
            sigma0: 0.0,
        }
    }

    /// Samples a(t) on a uniform grid of [lo, hi].
    pub fn check_nonnegative(&self, lo: f64, hi: f64, samples: usize) -> Result<()> {
        for k in 0..samples {
            let t = lo + (hi - lo) * k as f64 / (samples.max(2) - 1) as f64;
            let v: f64 = self.eval(t)?;
            if v < 0.0 {
                return Err(Error::NegativeCoefficient { at: t, value: v });
            }
        }
        Ok(())
    }

    pub fn a0(&self) -> &ScalarFn {
        &self.a0
    }

    pub fn a1(&self) -> &ScalarFn {
        &self.a1
    }

    pub fn t_bar(&self) -> f64 {
        self.t_bar
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    /// a0′(t̄) − a1′(t̄), signed.
    pub fn slope_jump(&self) -> f64 {
        self.a0.deriv(self.t_bar).unwrap_or(f64::NAN) - self.a1.deriv(self.t_bar).unwrap_or(f64::NAN)
    }

    pub fn branch_of<T: Real>(&self, t: T) -> Branch {
        if t <= T::lit(self.t_bar) {
            Branch::Below
        } else {
            Branch::Above
        }
    }

    pub fn eval<T: Real>(&self, t: T) -> Result<T, EvalError> {
        match self.branch_of(t) {
            Branch::Above => self.a1.value(t),
            _ => self.a0.value(t),
        }
    }

    /// One-sided directional derivative a′(t; s).
    pub fn dir_deriv<T: Real>(&self, t: T, s: T) -> Result<T, EvalError> {
        let tb = T::lit(self.t_bar);
        if t > tb || (t == tb && s > T::zero()) {
            Ok(self.a1.deriv(t)? * s)
        } else if t < tb || s < T::zero() {
            Ok(self.a0.deriv(t)? * s)
        } else {
            Ok(T::zero())
        }
    }

    /// Classical a″ away from t̄ and 0 at t̄.
    pub fn second<T: Real>(&self, t: T) -> Result<T, EvalError> {
        let tb = T::lit(self.t_bar);
        if t < tb {
            self.a0.second(t)
        } else if t > tb {
            self.a1.second(t)
        } else {
            Ok(T::zero())
        }
    }

    pub fn branch_value<T: Real>(&self, b: Branch, t: T) -> Result<T, EvalError> {
        match b {
            Branch::Below => self.a0.value(t),
            Branch::Above => self.a1.value(t),
            Branch::On => self.a0.value(T::lit(self.t_bar)),
        }
    }

    pub fn branch_deriv<T: Real>(&self, b: Branch, t: T) -> Result<T, EvalError> {
        match b {
            Branch::Below => self.a0.deriv(t),
            Branch::Above => self.a1.deriv(t),
            Branch::On => Ok(T::zero()),
        }
    }

    pub fn branch_second<T: Real>(&self, b: Branch, t: T) -> Result<T, EvalError> {
        match b {
            Branch::Below => self.a0.second(t),
            Branch::Above => self.a1.second(t),
            Branch::On => Ok(T::zero()),
        }
    }
}

pub fn coeff_eval<T: Real>(a: &PiecewiseC2Coefficient, t: T) -> Result<T, EvalError> {
    a.eval(t)
}

pub fn coeff_dir_deriv<T: Real>(a: &PiecewiseC2Coefficient, t: T, s: T) -> Result<T, EvalError> {
    a.dir_deriv(t, s)
}

pub fn coeff_second<T: Real>(a: &PiecewiseC2Coefficient, t: T) -> Result<T, EvalError> {
    a.second(t)
}

/// Data of the optimal control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    pub b: DiffExpr,
    pub a: PiecewiseC2Coefficient,
    pub l: Expr,
    pub dl_dy: Expr,
    pub d2l_dy2: Expr,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ControlProblem {
    pub fn new(
        b: DiffExpr,
        a: PiecewiseC2Coefficient,
        l: Expr,
        dl_dy: Expr,
        d2l_dy2: Expr,
        nu: f64,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {nu}")));
        }
        if !(alpha < beta) {
            return Err(Error::InvalidArgument(format!(
                "need alpha < beta, got [{alpha}, {beta}]"
            )));
        }
        if b.expr.depends_on(Var::Y) {
            return Err(Error::InvalidArgument("b must not depend on y".into()));
        }
        Ok(ControlProblem {
            b,
            a,
            l,
            dl_dy,
            d2l_dy2,
            nu,
            alpha,
            beta,
        })
    }

    /// Builds the problem with ∂L/∂y and ∂²L/∂y² obtained symbolically.
    pub fn with_lagrangian(
        b: DiffExpr,
        a: PiecewiseC2Coefficient,
        l: Expr,
        nu: f64,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let dl = l.differentiate(Var::Y)?;
        let d2l = dl.differentiate(Var::Y)?;
        Self::new(b, a, l, dl, d2l, nu, alpha, beta)
    }

    pub fn t_bar<T: Real>(&self) -> T {
        T::lit(self.a.t_bar)
    }

    /// min of b over the degree-5 quadrature points of the mesh.
    pub fn b_lower<T: Real>(&self, mesh: &TriMesh<T>) -> Result<T> {
        let mut lo = T::infinity();
        for t in 0..mesh.num_triangles() {
            let mut err = None;
            DEGREE5.for_each(mesh.tri_points(t), |p, _, _| match self.b.value(p) {
                Ok(v) => lo = lo.min(v),
                Err(e) => err = Some(e),
            });
            if let Some(e) = err {
                return Err(e.into());
            }
        }
        Ok(lo)
    }

    pub fn check_b<T: Real>(&self, mesh: &TriMesh<T>) -> Result<T> {
        let lo = self.b_lower(mesh)?;
        if !(lo > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "b must be positive, min over quadrature points is {lo}"
            )));
        }
        Ok(lo)
    }

    pub fn l_at<T: Real>(&self, p: Point<T>, y: T) -> Result<T, EvalError> {
        self.l.eval(&Vars::with_y(p[0], p[1], y))
    }

    pub fn dl_at<T: Real>(&self, p: Point<T>, y: T) -> Result<T, EvalError> {
        self.dl_dy.eval(&Vars::with_y(p[0], p[1], y))
    }

    pub fn d2l_at<T: Real>(&self, p: Point<T>, y: T) -> Result<T, EvalError> {
        self.d2l_dy2.eval(&Vars::with_y(p[0], p[1], y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SolveStats<T> {
    pub iterations: usize,
    /// Last fixed-point increment ‖y_{k+1} − y_k‖_∞.
    pub final_residual: T,
    pub fixed_point_increments: Vec<T>,
    /// ‖K(y)y − Mu‖₂ / ‖Mu‖₂ at the returned iterate.
    pub nonlinear_residual: T,
    pub converged: bool,
    pub damped: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct StateOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    pub linear_tol: T,
}

impl<T: Real> Default for StateOptions<T> {
    fn default() -> Self {
        StateOptions {
            tol: T::lit(1e-10),
            max_iter: 200,
            linear_tol: T::lit(1e-12),
        }
    }
}

// ---------------------------------------------------------------------------
// Integration across the kink

/// Splits a triangle along the line {y_h = t̄} into at most two convex pieces.
pub fn kink_pieces<T: Real>(pts: [Point<T>; 3], vals: [T; 3], t_bar: T, tol: T) -> Vec<(Vec<Point<T>>, Branch)> {
    let tri = pts.to_vec();
    if vals.iter().all(|&v| v == t_bar) {
        return vec![(tri, Branch::On)];
    }
    let lo = vals[0].min(vals[1]).min(vals[2]);
    let hi = vals[0].max(vals[1]).max(vals[2]);
    if lo >= t_bar {
        return vec![(tri, Branch::Above)];
    }
    if hi <= t_bar {
        return vec![(tri, Branch::Below)];
    }
    let f = Affine::from_triangle(pts, [vals[0] - t_bar, vals[1] - t_bar, vals[2] - t_bar]);
    let mut out = Vec::with_capacity(2);
    let below = clip_convex(&tri, &f.neg(), tol);
    if below.len() >= 3 {
        out.push((below, Branch::Below));
    }
    let above = clip_convex(&tri, &f, tol);
    if above.len() >= 3 {
        out.push((above, Branch::Above));
    }
    out
}

/// Barycentric coordinates of `p` with respect to triangle `t`.
pub fn barycentric<T: Real>(mesh: &TriMesh<T>, t: usize, p: Point<T>) -> [T; 3] {
    let g = mesh.basis_gradients(t);
    let tri = mesh.triangles()[t];
    let v = mesh.vertices();
    let mut l = [T::zero(); 3];
    for i in 0..3 {
        let q = v[tri[i]];
        l[i] = T::one() + g[i][0] * (p[0] - q[0]) + g[i][1] * (p[1] - q[1]);
    }
    l
}

fn clip_tol<T: Real>(mesh: &TriMesh<T>) -> T {
    mesh.h_max() * T::epsilon() * T::lit(16.0)
}

/// Integrates `f(t, point, barycentric, branch, y)` over the mesh with the
/// degree-5 rule applied separately on each side of {y_h = t̄}.
pub fn integrate_split<T: Real, F>(mesh: &TriMesh<T>, y: &NodalField<T>, t_bar: T, mut f: F) -> Result<T>
where
    F: FnMut(usize, Point<T>, [T; 3], Branch, T) -> std::result::Result<T, EvalError>,
{
    let tol = clip_tol(mesh);
    let mut s = T::zero();
    for t in 0..mesh.num_triangles() {
        s += integrate_split_triangle(mesh, y, t, t_bar, tol, &DEGREE5, &mut f)?;
    }
    Ok(s)
}

fn integrate_split_triangle<T: Real, F>(
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
    t: usize,
    t_bar: T,
    tol: T,
    rule: &TriRule,
    f: &mut F,
) -> Result<T>
where
    F: FnMut(usize, Point<T>, [T; 3], Branch, T) -> std::result::Result<T, EvalError>,
{
    let vals = mesh.local_values(y, t);
    let aff = mesh.affine(y, t);
    let mut s = T::zero();
    for (poly, br) in kink_pieces(mesh.tri_points(t), vals, t_bar, tol) {
        s += rule
            .integrate_polygon(&poly, |p| {
                let v = f(t, p, barycentric(mesh, t, p), br, aff.eval(p))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError::NonFinite)
                }
            })
            .map_err(Error::Eval)?;
    }
    Ok(s)
}

/// Per-triangle quantities of the frozen operator at a state y.
#[derive(Debug, Clone)]
pub struct FrozenCoefficient<T> {
    /// (1/|T|)∫_T (b + a(y_h)) dx.
    pub coeff: Vec<T>,
    /// (∇y_h)_T.
    pub grad_y: Vec<Point<T>>,
    /// ∫_T 𝟙_{y≠t̄} a′(y_h) φ_j dx for the three local vertices.
    pub drift_weights: Vec<[T; 3]>,
}

pub fn frozen_coefficient<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
    with_drift: bool,
) -> Result<FrozenCoefficient<T>> {
    y.check_len(mesh, "state")?;
    let t_bar = problem.t_bar::<T>();
    let tol = clip_tol(mesh);
    let nt = mesh.num_triangles();
    let mut coeff = Vec::with_capacity(nt);
    let mut grad_y = Vec::with_capacity(nt);
    let mut drift_weights = Vec::with_capacity(if with_drift { nt } else { 0 });
    let a = &problem.a;
    for t in 0..nt {
        let mut c = integrate_split_triangle(mesh, y, t, t_bar, tol, &DEGREE5, &mut |_, p, _, br, yv| {
            Ok(problem.b.value(p)? + a.branch_value(br, yv)?)
        })?;
        c /= mesh.area(t);
        if !(c > T::zero()) {
            return Err(Error::NonPositiveCoefficient {
                triangle: t,
                value: c.as_f64(),
            });
        }
        coeff.push(c);
        grad_y.push(mesh.gradient(y, t));
        if with_drift {
            let mut m = [T::zero(); 3];
            for (j, mj) in m.iter_mut().enumerate() {
                *mj = integrate_split_triangle(mesh, y, t, t_bar, tol, &DEGREE5, &mut |_, _, l, br, yv| {
                    Ok(a.branch_deriv(br, yv)? * l[j])
                })?;
            }
            drift_weights.push(m);
        }
    }
    Ok(FrozenCoefficient {
        coeff,
        grad_y,
        drift_weights,
    })
}

fn constrained_rhs<T: Real>(mesh: &TriMesh<T>, mut rhs: Vec<T>) -> Vec<T> {
    for (r, &fixed) in rhs.iter_mut().zip(mesh.boundary_flags()) {
        if fixed {
            *r = T::zero();
        }
    }
    rhs
}

fn inf_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).fold(T::zero(), T::max)
}

fn norm2<T: Real>(a: &[T]) -> T {
    a.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Picard iteration with default linear tolerance; errors on non-convergence.
pub fn solve_state<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    u: &NodalField<T>,
    tol: T,
    max_iter: usize,
) -> Result<(NodalField<T>, SolveStats<T>)> {
    let opts = StateOptions {
        tol,
        max_iter,
        ..StateOptions::default()
    };
    let (y, stats) = solve_state_with(problem, mesh, u, None, &opts)?;
    if !stats.converged {
        return Err(Error::NonlinearSolve {
            iterations: stats.iterations,
            increment: stats.final_residual.as_f64(),
        });
    }
    Ok((y, stats))
}

/// Picard iteration returning the last iterate with `converged = false`
/// when the increment tolerance is not met within `max_iter` steps.
pub fn solve_state_with<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    u: &NodalField<T>,
    initial: Option<&NodalField<T>>,
    opts: &StateOptions<T>,
) -> Result<(NodalField<T>, SolveStats<T>)> {
    u.check_len(mesh, "control")?;
    if !u.is_finite() {
        return Err(Error::InvalidArgument("control has non-finite entries".into()));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    problem.check_b(mesh)?;
    let rhs = constrained_rhs(mesh, mesh.mass_apply(u));
    let n = mesh.num_vertices();
    let mut y = match initial {
        Some(y0) => {
            y0.check_len(mesh, "initial state")?;
            let mut y0 = y0.clone();
            y0.zero_boundary(mesh);
            y0
        }
        None => NodalField::zeros(n),
    };
    let mut incs: Vec<T> = Vec::new();
    let mut growth = 0usize;
    let mut relax = T::one();
    let mut converged = false;
    let mut iterations = 0usize;
    for _ in 0..opts.max_iter.max(1) {
        iterations += 1;
        let k = operator(problem, mesh, &y, false)?.0;
        let y_new = linear_solve(&k, &rhs, opts.linear_tol)?;
        let step: Vec<T> = y
            .values
            .iter()
            .zip(&y_new)
            .map(|(&a, &b)| a + relax * (b - a))
            .collect();
        let inc = inf_dist(&step, &y.values);
        if let Some(&last) = incs.last() {
            growth = if inc > last { growth + 1 } else { 0 };
        }
        incs.push(inc);
        y.values = step;
        if inc <= opts.tol {
            converged = true;
            break;
        }
        if growth >= 3 && relax == T::one() {
            relax = T::half();
            growth = 0;
        }
    }
    let k = operator(problem, mesh, &y, false)?.0;
    let ky = k.matvec(&y.values);
    let res: Vec<T> = ky.iter().zip(&rhs).map(|(&a, &b)| a - b).collect();
    let scale = norm2(&rhs);
    let nonlinear_residual = if scale > T::zero() {
        norm2(&res) / scale
    } else {
        norm2(&res)
    };
    Ok((
        y,
        SolveStats {
            iterations,
            final_residual: *incs.last().unwrap_or(&T::zero()),
            fixed_point_increments: incs,
            nonlinear_residual,
            converged,
            damped: relax < T::one(),
        },
    ))
}

/// Boundary-constrained frozen stiffness K(y) and, if requested, the
/// linearized operator K(y) + D(y).
fn operator<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
    linearized: bool,
) -> Result<(CsrMatrix<T>, FrozenCoefficient<T>)> {
    let fc = frozen_coefficient(problem, mesh, y, linearized)?;
    let k = assemble_weighted_stiffness(mesh, &fc.coeff)?;
    let a = if linearized {
        let d = assemble_drift_weighted(mesh, &fc.grad_y, &fc.drift_weights)?;
        k.add_scaled(T::one(), &d)
    } else {
        k
    };
    Ok((a.constrain(mesh.boundary_flags()), fc))
}

/// The linearized operator at y (rows: test functions), boundary-constrained.
pub fn linearized_operator<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
) -> Result<CsrMatrix<T>> {
    Ok(operator(problem, mesh, y, true)?.0)
}

/// Exact transpose of [`linearized_operator`], assembled directly.
pub fn adjoint_operator<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
) -> Result<CsrMatrix<T>> {
    let fc = frozen_coefficient(problem, mesh, y, true)?;
    let k = assemble_weighted_stiffness(mesh, &fc.coeff)?;
    let dt = assemble_drift_weighted_transposed(mesh, &fc.grad_y, &fc.drift_weights)?;
    Ok(k.add_scaled(T::one(), &dt).constrain(mesh.boundary_flags()))
}

/// z = S′(u)v: solves the linearized equation with right-hand side M v.
pub fn solve_linearized<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
    v: &NodalField<T>,
    tol: T,
) -> Result<NodalField<T>> {
    v.check_len(mesh, "direction")?;
    let a = linearized_operator(problem, mesh, y)?;
    solve_linearized_with(&a, mesh, v, tol)
}

/// Linearized solve with a pre-assembled operator (reused across directions).
pub fn solve_linearized_with<T: Real>(
    a: &CsrMatrix<T>,
    mesh: &TriMesh<T>,
    v: &NodalField<T>,
    tol: T,
) -> Result<NodalField<T>> {
    let rhs = constrained_rhs(mesh, mesh.mass_apply(v));
    Ok(NodalField::from_vec(linear_solve(a, &rhs, tol)?))
}

/// Right-hand side of the adjoint equation.
#[derive(Debug, Clone)]
pub enum AdjointRhs<'a, T> {
    /// A P1 field g, tested as ∫ g ψ dx.
    Field(&'a NodalField<T>),
    /// An assembled load vector (entries ∫ f φ_i dx).
    Load(Vec<T>),
}

pub fn solve_adjoint<T: Real>(
    problem: &ControlProblem,
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
    rhs: AdjointRhs<'_, T>,
    tol: T,
) -> Result<NodalField<T>> {
    let a = adjoint_operator(problem, mesh, y)?;
    solve_adjoint_with(&a, mesh, rhs, tol)
}

pub fn solve_adjoint_with<T: Real>(
    a: &CsrMatrix<T>,
    mesh: &TriMesh<T>,
    rhs: AdjointRhs<'_, T>,
    tol: T,
) -> Result<NodalField<T>> {
    let load = match rhs {
        AdjointRhs::Field(g) => {
            g.check_len(mesh, "adjoint right-hand side")?;
            mesh.mass_apply(g)
        }
        AdjointRhs::Load(l) => {
            if l.len() != mesh.num_vertices() {
                return Err(Error::InvalidArgument("adjoint load vector has wrong length".into()));
            }
            l
        }
    };
    let rhs = constrained_rhs(mesh, load);
    Ok(NodalField::from_vec(linear_solve(a, &rhs, tol)?))
}

/// Load vector ∫ ∂L/∂y(x, y_h) φ_i dx (degree-5 rule).
pub fn lagrangian_load<T: Real>(problem: &ControlProblem, mesh: &TriMesh<T>, y: &NodalField<T>) -> Result<Vec<T>> {
    y.check_len(mesh, "state")?;
    let mut out = vec![T::zero(); mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let vals = mesh.local_values(y, t);
        let mut err = None;
        DEGREE5.for_each(mesh.tri_points(t), |p, l, w| {
            let yv = l[0] * vals[0] + l[1] * vals[1] + l[2] * vals[2];
            match problem.dl_at(p, yv) {
                Ok(d) if d.is_finite() => {
                    for k in 0..3 {
                        out[tri[k]] += w * d * l[k];
                    }
                }
                Ok(_) => err = Some(EvalError::NonFinite),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e.into());
        }
    }
    Ok(out)
}

/// ∫ L(x, y_h) dx with the rule used for [`lagrangian_load`].
pub fn lagrangian_integral<T: Real>(problem: &ControlProblem, mesh: &TriMesh<T>, y: &NodalField<T>) -> Result<T> {
    y.check_len(mesh, "state")?;
    mesh.integrate_with_rule(&DEGREE5, |t, p, l| {
        let v = mesh.local_values(y, t);
        problem.l_at(p, l[0] * v[0] + l[1] * v[1] + l[2] * v[2])
    })
}

/// ∫ (b + a(y_h)) |∇y_h|² dx, the left side of the energy identity.
pub fn energy<T: Real>(problem: &ControlProblem, mesh: &TriMesh<T>, y: &NodalField<T>) -> Result<T> {
    let fc = frozen_coefficient(problem, mesh, y, false)?;
    Ok((0..mesh.num_triangles())
        .map(|t| fc.coeff[t] * dot(fc.grad_y[t], fc.grad_y[t]) * mesh.area(t))
        .sum())
}

/// Control u = −div[(b + a(y*))∇y*] for a prescribed state y*, one symbolic
/// expression per coefficient branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedControl {
    pub y_exact: DiffExpr,
    pub branches: [Expr; 2],
    pub t_bar: f64,
}

impl ManufacturedControl {
    pub fn new(problem: &ControlProblem, y_exact: DiffExpr) -> Result<Self> {
        let build = |a: &ScalarFn| -> Result<Expr> {
            let c = Expr::add(problem.b.expr.clone(), a.f.substitute(Var::Y, &y_exact.expr));
            let cx1 = c.differentiate(Var::X1)?;
            let cx2 = c.differentiate(Var::X2)?;
            let flux = Expr::add(
                Expr::add(Expr::mul(cx1, y_exact.dx1.clone()), Expr::mul(cx2, y_exact.dx2.clone())),
                Expr::mul(c, y_exact.laplacian.clone()),
            );
            Ok(Expr::neg(flux))
        };
        Ok(ManufacturedControl {
            branches: [build(problem.a.a0())?, build(problem.a.a1())?],
            y_exact,
            t_bar: problem.a.t_bar(),
        })
    }

    pub fn value<T: Real>(&self, p: Point<T>) -> Result<T, EvalError> {
        let k = usize::from(self.y_exact.value(p)? > T::lit(self.t_bar));
        self.branches[k].eval_point(p)
    }

    pub fn interpolate<T: Real>(&self, mesh: &TriMesh<T>) -> Result<NodalField<T>> {
        let values = mesh
            .vertices()
            .iter()
            .map(|&p| self.value(p))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(NodalField::from_vec(values))
    }
}

/// ‖y_h − y*‖_{L²} with the degree-5 rule.
pub fn l2_error<T: Real>(mesh: &TriMesh<T>, y: &NodalField<T>, exact: &Expr) -> Result<T> {
    let s = mesh.integrate_with_rule(&DEGREE5, |t, p, l| {
        let v = mesh.local_values(y, t);
        let d = l[0] * v[0] + l[1] * v[1] + l[2] * v[2] - exact.eval_point(p)?;
        Ok(d * d)
    })?;
    Ok(s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, PolygonDomain};

    fn abs_kink(t_bar: f64) -> PiecewiseC2Coefficient {
        PiecewiseC2Coefficient::parse(&format!("{t_bar} - y"), &format!("y - {t_bar}"), t_bar).unwrap()
    }

    fn problem(a: PiecewiseC2Coefficient) -> ControlProblem {
        ControlProblem::with_lagrangian(
            DiffExpr::parse("1").unwrap(),
            a,
            "0.5*y^2".parse().unwrap(),
            1e-2,
            -10.0,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let a = abs_kink(1.0);
        assert_eq!(a.sigma0(), 2.0);
        assert_eq!(a.dir_deriv(1.0, 2.0).unwrap(), 2.0);
        assert_eq!(a.dir_deriv(1.0, -2.0).unwrap(), 2.0);
        assert_eq!(a.dir_deriv(0.0, 5.0).unwrap(), -5.0);
        assert_eq!(a.dir_deriv(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(a.eval(3.0).unwrap(), 2.0);
        assert_eq!(a.second(1.0).unwrap(), 0.0);
        assert_eq!(a.slope_jump(), -2.0);
    }

    #[test]
    fn coefficient_validation() {
        assert!(matches!(
            PiecewiseC2Coefficient::parse("y", "y + 1", 0.0),
            Err(Error::DiscontinuousCoefficient { .. })
        ));
        assert!(matches!(
            PiecewiseC2Coefficient::parse("y", "y", 0.0),
            Err(Error::NegativeCoefficient { .. })
        ));
        let q = PiecewiseC2Coefficient::parse("y^2", "y^2", 10.0).unwrap();
        assert_eq!(q.sigma0(), 0.0);
        assert_eq!(q.second(3.0).unwrap(), 2.0);
    }

    #[test]
    fn problem_validation() {
        let b = DiffExpr::parse("1").unwrap();
        let l: Expr = "y".parse().unwrap();
        let zero = PiecewiseC2Coefficient::zero();
        assert!(ControlProblem::with_lagrangian(b.clone(), zero.clone(), l.clone(), 0.0, 0.0, 1.0).is_err());
        assert!(ControlProblem::with_lagrangian(b.clone(), zero.clone(), l.clone(), 1.0, 1.0, 1.0).is_err());
        let neg = DiffExpr::parse("x1 - 0.5").unwrap();
        let p = ControlProblem::with_lagrangian(neg, zero, l, 1.0, 0.0, 1.0).unwrap();
        let m = build_mesh(&PolygonDomain::unit_square(), 0.25).unwrap();
        assert!(p.check_b(&m).is_err());
    }

    #[test]
    fn kink_pieces_partition_the_triangle() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let pieces = kink_pieces(pts, [0.0, 1.0, 0.2], 0.5, 1e-14);
        assert_eq!(pieces.len(), 2);
        let area: f64 = pieces.iter().map(|(p, _)| crate::geometry::polygon_area(p)).sum();
        assert!((area - 0.5).abs() < 1e-15);
        assert_eq!(kink_pieces(pts, [0.5, 0.5, 0.5], 0.5, 1e-14)[0].1, Branch::On);
        assert_eq!(kink_pieces(pts, [0.5, 0.6, 0.7], 0.5, 1e-14)[0].1, Branch::Above);
    }

    #[test]
    fn zero_control_gives_zero_state() {
        let m = build_mesh(&PolygonDomain::unit_square(), 0.125).unwrap();
        let p = problem(abs_kink(0.5));
        let (y, st) = solve_state(&p, &m, &NodalField::zeros(m.num_vertices()), 1e-10, 50).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
        assert_eq!(st.iterations, 1);
    }

    #[test]
    fn state_energy_identity_and_sign() {
        let m: TriMesh<f64> = build_mesh(&PolygonDomain::unit_square(), 1.0 / 16.0).unwrap();
        let p = problem(abs_kink(0.02));
        let u = m.interpolate(|x| 2.0 + x[0]);
        let (y, st) = solve_state(&p, &m, &u, 1e-12, 200).unwrap();
        assert!(st.converged && st.final_residual <= 1e-12);
        assert!(y.values.iter().all(|&v| v >= -1e-10));
        let lhs = energy(&p, &m, &y).unwrap();
        let rhs = m.l2_inner(&u, &y);
        assert!(((lhs - rhs) / rhs).abs() <= 1e-8);
    }

    #[test]
    fn linearized_without_coefficient_is_poisson() {
        let m = build_mesh(&PolygonDomain::unit_square(), 0.125).unwrap();
        let p = problem(PiecewiseC2Coefficient::zero());
        let y = m.interpolate(|x| x[0] * (1.0 - x[0]));
        let v = m.interpolate(|x| 1.0 + x[1]);
        let z = solve_linearized(&p, &m, &y, &v, 1e-12).unwrap();
        let k = crate::sparse::assemble_weighted_stiffness(&m, &vec![1.0; m.num_triangles()])
            .unwrap()
            .constrain(m.boundary_flags());
        let rhs = constrained_rhs(&m, m.mass_apply(&v));
        let z2 = linear_solve(&k, &rhs, 1e-12).unwrap();
        assert!(inf_dist(&z.values, &z2) < 1e-10);
        let zero = solve_linearized(&p, &m, &y, &NodalField::zeros(m.num_vertices()), 1e-12).unwrap();
        assert!(zero.values.iter().all(|&x| x == 0.0));
        let phi = solve_adjoint(&p, &m, &y, AdjointRhs::Field(&v), 1e-12).unwrap();
        assert!(inf_dist(&phi.values, &z2) < 1e-10);
    }

    #[test]
    fn adjoint_operator_is_exact_transpose() {
        let m = build_mesh(&PolygonDomain::unit_square(), 0.25).unwrap();
        let p = problem(abs_kink(0.05));
        let y = m.interpolate(|x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]) * 2.0);
        let a = linearized_operator(&p, &m, &y).unwrap();
        let at = adjoint_operator(&p, &m, &y).unwrap();
        assert_eq!(a.transpose(), at);
    }

    #[test]
    fn drift_weights_sum_to_mean_slope() {
        // For a = |y - t̄| the weights add up to ∫_T sign(y - t̄) dx.
        let m = build_mesh(&PolygonDomain::unit_square(), 0.5).unwrap();
        let p = problem(abs_kink(0.5));
        let y = m.interpolate(|x| x[0]);
        let fc = frozen_coefficient(&p, &m, &y, true).unwrap();
        for t in 0..m.num_triangles() {
            let s: f64 = fc.drift_weights[t].iter().sum();
            let area_above = crate::geometry::polygon_area(&clip_convex(
                &m.tri_points(t),
                &Affine { c: -0.5, g: [1.0, 0.0] },
                1e-14,
            ));
            assert!((s - (2.0 * area_above - m.area(t))).abs() < 1e-14);
        }
    }

    #[test]
    fn manufactured_control_matches_hand_derivation() {
        let y = DiffExpr::parse("sin(pi*x1)*sin(pi*x2)").unwrap();
        let p = problem(PiecewiseC2Coefficient::zero());
        let mc = ManufacturedControl::new(&p, y.clone()).unwrap();
        let x = [0.3, 0.7];
        let pi = std::f64::consts::PI;
        let expect = 2.0 * pi * pi * (pi * 0.3).sin() * (pi * 0.7).sin();
        assert!((mc.value(x).unwrap() - expect).abs() < 1e-12);
        // a = |y - 0.5|: u = -(1 + |y*-0.5|)Δy* - sign(y*-0.5)|∇y*|².
        let p = problem(abs_kink(0.5));
        let mc = ManufacturedControl::new(&p, y.clone()).unwrap();
        for x in [[0.5, 0.5], [0.1, 0.2]] {
            let yv: f64 = y.value(x).unwrap();
            let g = y.gradient(x).unwrap();
            let e = -(1.0 + (yv - 0.5).abs()) * y.lap(x).unwrap() - (yv - 0.5).signum() * (g[0] * g[0] + g[1] * g[1]);
            assert!((mc.value(x).unwrap() - e).abs() < 1e-12);
        }
    }
}
