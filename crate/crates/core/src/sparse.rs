//! CSR operators over P1 vertex indices, their assembly, and the linear
//! solver (ILU(0)-preconditioned BiCGStab).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{dot, Point};
use crate::mesh::TriMesh;
use crate::real::Real;

/// Sparsity pattern with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub diag: Vec<usize>,
}

impl Pattern {
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Pattern {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut diag = Vec::with_capacity(rows.len());
        row_ptr.push(0);
        for (i, mut r) in rows.into_iter().enumerate() {
            if !r.contains(&i) {
                r.push(i);
            }
            r.sort_unstable();
            r.dedup();
            let base = cols.len();
            diag.push(base + r.iter().position(|&c| c == i).expect("diagonal present"));
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        Pattern { row_ptr, cols, diag }
    }

    pub fn for_mesh<T: Real>(mesh: &TriMesh<T>) -> Pattern {
        let mut rows: Vec<Vec<usize>> = (0..mesh.num_vertices()).map(|i| vec![i]).collect();
        for tri in mesh.triangles() {
            for &a in tri {
                for &b in tri {
                    rows[a].push(b);
                }
            }
        }
        Pattern::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Storage index of entry (i, j), if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }
}

/// Square sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pattern: Arc<Pattern>,
    values: Vec<T>,
}

/// The operator type named by the assembly routines.
pub type SparseOperator<T> = CsrMatrix<T>;

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![T::zero(); pattern.cols.len()];
        CsrMatrix { pattern, values }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let pat: Vec<Vec<usize>> = rows
            .iter()
            .map(|r| (0..n).filter(|&j| r[j] != T::zero()).collect())
            .collect();
        let mut m = CsrMatrix::zeros(Arc::new(Pattern::from_rows(pat)));
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != T::zero() {
                    m.add_to(i, j, v);
                }
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let pat = Pattern::from_rows((0..n).map(|i| vec![i]).collect());
        CsrMatrix {
            pattern: Arc::new(pat),
            values: vec![T::one(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern.find(i, j).map_or(T::zero(), |k| self.values[k])
    }

    /// Adds `v` to entry (i, j); the entry must be in the pattern.
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        let k = self
            .pattern
            .find(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        let p = &self.pattern;
        for i in 0..p.n() {
            let mut s = T::zero();
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * x[p.cols[k]];
            }
            y[i] = s;
        }
    }

    /// Bilinear form xᵀ A y.
    pub fn form(&self, x: &[T], y: &[T]) -> T {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(&a, &b)| a * b).sum()
    }

    /// Transpose on the same (structurally symmetric) pattern.
    pub fn transpose(&self) -> Self {
        let p = &self.pattern;
        let mut t = CsrMatrix::zeros(self.pattern.clone());
        for i in 0..p.n() {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.cols[k];
                let idx = p
                    .find(j, i)
                    .expect("transpose requires a structurally symmetric pattern");
                t.values[idx] = self.values[k];
            }
        }
        t
    }

    /// Entrywise `self + s * other`; both must share a pattern.
    pub fn add_scaled(&self, s: T, other: &CsrMatrix<T>) -> Self {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern,
            "pattern mismatch"
        );
        CsrMatrix {
            pattern: self.pattern.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + s * b)
                .collect(),
        }
    }

    /// Replaces rows and columns of flagged (Dirichlet) indices by the identity.
    pub fn constrain(&self, fixed: &[bool]) -> Self {
        let p = &self.pattern;
        let mut out = self.clone();
        for i in 0..p.n() {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.cols[k];
                if fixed[i] || fixed[j] {
                    out.values[k] = if i == j { T::one() } else { T::zero() };
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        let p = &self.pattern;
        (0..p.n()).all(|i| {
            (p.row_ptr[i]..p.row_ptr[i + 1]).all(|k| {
                let j = p.cols[k];
                (self.values[k] - self.get(j, i)).abs() <= tol
            })
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.n();
        let mut d = vec![vec![T::zero(); n]; n];
        let p = &self.pattern;
        for (i, row) in d.iter_mut().enumerate() {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                row[p.cols[k]] = self.values[k];
            }
        }
        d
    }
}

fn mesh_pattern<T: Real>(mesh: &TriMesh<T>) -> Arc<Pattern> {
    Arc::new(mesh.pattern_cell().get_or_init(|| Pattern::for_mesh(mesh)).clone())
}

/// Entry (i, j) = Σ_T coeff_T ∇φ_i·∇φ_j |T|, triangles in ascending order.
pub fn assemble_weighted_stiffness<T: Real>(mesh: &TriMesh<T>, coeff: &[T]) -> Result<CsrMatrix<T>> {
    if coeff.len() != mesh.num_triangles() {
        return Err(Error::InvalidArgument(format!(
            "stiffness: {} coefficients for {} triangles",
            coeff.len(),
            mesh.num_triangles()
        )));
    }
    if let Some(t) = coeff.iter().position(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "stiffness: non-finite coefficient on triangle {t}"
        )));
    }
    let mut a = CsrMatrix::zeros(mesh_pattern(mesh));
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.basis_gradients(t);
        let w = coeff[t] * mesh.area(t);
        for i in 0..3 {
            for j in 0..3 {
                a.add_to(tri[i], tri[j], w * dot(g[i], g[j]));
            }
        }
    }
    Ok(a)
}

/// Weighted stiffness that additionally requires coefficients ≥ `lower` > 0,
/// so that the boundary-constrained operator is positive definite.
pub fn assemble_weighted_stiffness_definite<T: Real>(mesh: &TriMesh<T>, coeff: &[T], lower: T) -> Result<CsrMatrix<T>> {
    if !(lower > T::zero()) {
        return Err(Error::InvalidArgument("definiteness bound must be positive".into()));
    }
    if let Some(t) = coeff.iter().position(|&c| !(c >= lower)) {
        return Err(Error::NonPositiveCoefficient {
            triangle: t,
            value: coeff[t].as_f64(),
        });
    }
    assemble_weighted_stiffness(mesh, coeff)
}

/// Drift operator with general per-vertex weights:
/// entry (i, j) = Σ_T (g_T·∇φ_i) m_{T,j}, where m_{T,j} = ∫_T c φ_j dx for
/// some scalar c. Row index i is the test function, column j the trial.
pub fn assemble_drift_weighted<T: Real>(mesh: &TriMesh<T>, g: &[Point<T>], m: &[[T; 3]]) -> Result<CsrMatrix<T>> {
    if g.len() != mesh.num_triangles() || m.len() != mesh.num_triangles() {
        return Err(Error::InvalidArgument(
            "drift: one vector and weight triple per triangle".into(),
        ));
    }
    let mut a = CsrMatrix::zeros(mesh_pattern(mesh));
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let bg = mesh.basis_gradients(t);
        for i in 0..3 {
            let gi = dot(g[t], bg[i]);
            for j in 0..3 {
                a.add_to(tri[i], tri[j], gi * m[t][j]);
            }
        }
    }
    Ok(a)
}

/// Exact transpose of [`assemble_drift_weighted`], assembled directly.
pub fn assemble_drift_weighted_transposed<T: Real>(
    mesh: &TriMesh<T>,
    g: &[Point<T>],
    m: &[[T; 3]],
) -> Result<CsrMatrix<T>> {
    if g.len() != mesh.num_triangles() || m.len() != mesh.num_triangles() {
        return Err(Error::InvalidArgument(
            "drift: one vector and weight triple per triangle".into(),
        ));
    }
    let mut a = CsrMatrix::zeros(mesh_pattern(mesh));
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let bg = mesh.basis_gradients(t);
        for i in 0..3 {
            let gi = dot(g[t], bg[i]);
            for j in 0..3 {
                a.add_to(tri[j], tri[i], gi * m[t][j]);
            }
        }
    }
    Ok(a)
}

fn third_area_weights<T: Real>(mesh: &TriMesh<T>) -> Vec<[T; 3]> {
    (0..mesh.num_triangles())
        .map(|t| [mesh.area(t) * T::third(); 3])
        .collect()
}

/// Entry (i, j) = Σ_T (w_T·∇φ_i) φ̄_{j,T} |T| with φ̄_{j,T} = 1/3, i.e. the
/// weak form ∫ z (w·∇ψ) dx for trial z and test ψ.
pub fn assemble_drift<T: Real>(mesh: &TriMesh<T>, w: &[Point<T>]) -> Result<CsrMatrix<T>> {
    assemble_drift_weighted(mesh, w, &third_area_weights(mesh))
}

/// Exact transpose of [`assemble_drift`]: the weak form ∫ (w·∇φ) ψ dx.
pub fn assemble_drift_transposed<T: Real>(mesh: &TriMesh<T>, w: &[Point<T>]) -> Result<CsrMatrix<T>> {
    assemble_drift_weighted_transposed(mesh, w, &third_area_weights(mesh))
}

// ---------------------------------------------------------------------------
// Linear solver

/// Incomplete LU factorisation with zero fill on the matrix pattern.
struct Ilu0<T> {
    pattern: Arc<Pattern>,
    lu: Vec<T>,
}

impl<T: Real> Ilu0<T> {
    fn new(a: &CsrMatrix<T>) -> Result<Self> {
        let p = a.pattern.clone();
        let n = p.n();
        let mut lu = a.values.clone();
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (lo, hi) = (p.row_ptr[i], p.row_ptr[i + 1]);
            for k in lo..hi {
                pos[p.cols[k]] = k;
            }
            for k in lo..p.diag[i] {
                let c = p.cols[k];
                let piv = lu[p.diag[c]];
                if piv == T::zero() || !piv.is_finite() {
                    return Err(Error::SingularSystem(format!("zero pivot at row {c}")));
                }
                lu[k] /= piv;
                let f = lu[k];
                for kk in (p.diag[c] + 1)..p.row_ptr[c + 1] {
                    let cc = p.cols[kk];
                    let q = pos[cc];
                    if q != usize::MAX {
                        let d = f * lu[kk];
                        lu[q] -= d;
                    }
                }
            }
            for k in lo..hi {
                pos[p.cols[k]] = usize::MAX;
            }
            if lu[p.diag[i]] == T::zero() {
                return Err(Error::SingularSystem(format!("zero pivot at row {i}")));
            }
        }
        Ok(Ilu0 { pattern: p, lu })
    }

    fn apply(&self, r: &[T], out: &mut [T]) {
        let p = &self.pattern;
        let n = p.n();
        for i in 0..n {
            let mut s = r[i];
            for k in p.row_ptr[i]..p.diag[i] {
                s -= self.lu[k] * out[p.cols[k]];
            }
            out[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = out[i];
            for k in (p.diag[i] + 1)..p.row_ptr[i + 1] {
                s -= self.lu[k] * out[p.cols[k]];
            }
            out[i] = s / self.lu[p.diag[i]];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T> {
    /// Relative residual target: ‖Ax − b‖₂ ≤ tol ‖b‖₂.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> SolveOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        SolveOptions { tol, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearStats<T> {
    pub iterations: usize,
    pub residual: T,
}

fn dotv<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm2<T: Real>(a: &[T]) -> T {
    dotv(a, a).sqrt()
}

/// Solves `A x = b` to relative residual `tol`.
pub fn linear_solve<T: Real>(a: &CsrMatrix<T>, b: &[T], tol: T) -> Result<Vec<T>> {
    linear_solve_with(a, b, &SolveOptions::with_tol(tol)).map(|(x, _)| x)
}

/// ILU(0)-preconditioned BiCGStab with restarts on breakdown. The returned
/// residual is recomputed from scratch, never taken from the recurrence.
pub fn linear_solve_with<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    opts: &SolveOptions<T>,
) -> Result<(Vec<T>, LinearStats<T>)> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "rhs has {} entries, matrix is {n}x{n}",
            b.len()
        )));
    }
    let bnorm = norm2(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok((
            x,
            LinearStats {
                iterations: 0,
                residual: T::zero(),
            },
        ));
    }
    let target = opts.tol * bnorm;
    let m = Ilu0::new(a)?;
    // Below this the residual is roundoff in A x itself: a backward-stable stop.
    let anorm = (0..n)
        .map(|i| {
            let (lo, hi) = (a.pattern.row_ptr[i], a.pattern.row_ptr[i + 1]);
            a.values[lo..hi].iter().fold(T::zero(), |s, v| s + v.abs())
        })
        .fold(T::zero(), T::max);
    let floor_factor = T::from_f64(64.0).expect("cast") * T::epsilon();
    let goal = |x: &[T]| target.max(floor_factor * (anorm * norm2(x) + bnorm));

    let mut r = vec![T::zero(); n];
    let mut iterations = 0usize;
    let residual_of = |x: &[T], r: &mut Vec<T>| {
        a.matvec_into(x, r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm2(r)
    };
    let mut res = residual_of(&x, &mut r);
    let (mut p, mut v, mut s, mut t) = (
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
    );
    let (mut ph, mut sh) = (vec![T::zero(); n], vec![T::zero(); n]);
    let tiny = T::min_positive_value().sqrt();

    'restart: for _restart in 0..20 {
        if res <= goal(&x) {
            break;
        }
        let rhat = r.clone();
        let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
        p.iter_mut().for_each(|e| *e = T::zero());
        v.iter_mut().for_each(|e| *e = T::zero());
        loop {
            if iterations >= opts.max_iter {
                break 'restart;
            }
            iterations += 1;
            let rho_new = dotv(&rhat, &r);
            if rho_new.abs() <= tiny * norm2(&rhat) * norm2(&r) {
                res = residual_of(&x, &mut r);
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            m.apply(&p, &mut ph);
            a.matvec_into(&ph, &mut v);
            let rv = dotv(&rhat, &v);
            if rv == T::zero() || !rv.is_finite() {
                res = residual_of(&x, &mut r);
                continue 'restart;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) <= goal(&x) {
                for i in 0..n {
                    x[i] += alpha * ph[i];
                }
                res = residual_of(&x, &mut r);
                if res <= goal(&x) {
                    break 'restart;
                }
                continue 'restart;
            }
            m.apply(&s, &mut sh);
            a.matvec_into(&sh, &mut t);
            let tt = dotv(&t, &t);
            if tt == T::zero() {
                res = residual_of(&x, &mut r);
                continue 'restart;
            }
            omega = dotv(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * t[i];
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::LinearSolve {
                    iterations,
                    residual: f64::NAN,
                });
            }
            if norm2(&r) <= goal(&x) {
                res = residual_of(&x, &mut r);
                if res <= goal(&x) {
                    break 'restart;
                }
                continue 'restart;
            }
            if omega == T::zero() {
                res = residual_of(&x, &mut r);
                continue 'restart;
            }
        }
    }
    res = residual_of(&x, &mut r);
    if res <= goal(&x) {
        Ok((
            x,
            LinearStats {
                iterations,
                residual: res / bnorm,
            },
        ))
    } else {
        Err(Error::LinearSolve {
            iterations,
            residual: (res / bnorm).as_f64(),
        })
    }
}
