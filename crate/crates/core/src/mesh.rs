//! Convex polygonal domains, P1 triangulations and nodal fields.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{EvalError, Expr};
use crate::geometry::{self, cross, dist, orient, sub, Affine, Point, TriRule, EDGE_MIDPOINT};
use crate::real::Real;

/// Open bounded convex polygon, vertices counterclockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PolygonDomain<T> {
    pub vertices: Vec<Point<T>>,
}

impl<T: Real> PolygonDomain<T> {
    pub fn new(vertices: Vec<Point<T>>) -> Result<Self> {
        let d = PolygonDomain { vertices };
        d.validate()?;
        Ok(d)
    }

    pub fn rectangle(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(T::zero(), T::zero(), T::one(), T::one()).expect("unit square")
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return Err(Error::DegenerateDomain(format!("{n} vertices, need at least 3")));
        }
        let mut any_positive = false;
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            let c = v[(i + 2) % n];
            if dist(a, b) == T::zero() {
                return Err(Error::DegenerateDomain(format!("repeated vertex {i}")));
            }
            let turn = cross(sub(b, a), sub(c, b));
            if turn < T::zero() {
                return Err(Error::DegenerateDomain(format!(
                    "not convex or not counterclockwise at vertex {}",
                    (i + 1) % n
                )));
            }
            any_positive |= turn > T::zero();
        }
        if !any_positive {
            return Err(Error::DegenerateDomain("all vertices collinear".into()));
        }
        // Convex turns with total winding of one full turn: simple polygon.
        let mut winding = T::zero();
        for i in 0..n {
            let a = sub(v[(i + 1) % n], v[i]);
            let b = sub(v[(i + 2) % n], v[(i + 1) % n]);
            winding += cross(a, b).atan2(geometry::dot(a, b));
        }
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        if (winding - two_pi).abs() > T::lit(1e-6) {
            return Err(Error::DegenerateDomain("polygon is not simple".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> T {
        geometry::polygon_area(&self.vertices)
    }

    /// Bounds (x0, y0, x1, y1) when the polygon is an axis-aligned rectangle.
    pub fn as_rectangle(&self) -> Option<(T, T, T, T)> {
        if self.vertices.len() != 4 {
            return None;
        }
        let xs: Vec<T> = self.vertices.iter().map(|p| p[0]).collect();
        let ys: Vec<T> = self.vertices.iter().map(|p| p[1]).collect();
        let x0 = xs.iter().cloned().fold(T::infinity(), T::min);
        let x1 = xs.iter().cloned().fold(T::neg_infinity(), T::max);
        let y0 = ys.iter().cloned().fold(T::infinity(), T::min);
        let y1 = ys.iter().cloned().fold(T::neg_infinity(), T::max);
        let corner = |p: &Point<T>| (p[0] == x0 || p[0] == x1) && (p[1] == y0 || p[1] == y1);
        if self.vertices.iter().all(corner) && (self.area() - (x1 - x0) * (y1 - y0)).abs() <= T::zero() {
            Some((x0, y0, x1, y1))
        } else {
            None
        }
    }
}

/// Edge structure: each edge lists its two vertices and adjacent triangles.
#[derive(Debug, Clone)]
pub struct Topology {
    pub edges: Vec<[usize; 2]>,
    /// Adjacent triangles; the second is `usize::MAX` on the boundary.
    pub edge_tris: Vec<[usize; 2]>,
    /// `tri_edges[t][k]` is the edge between local vertices k and k+1.
    pub tri_edges: Vec<[usize; 3]>,
}

pub const NO_TRI: usize = usize::MAX;

/// Conforming triangulation with counterclockwise triangles.
#[derive(Debug, Clone)]
pub struct TriMesh<T> {
    vertices: Vec<Point<T>>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    h_max: T,
    areas: Vec<T>,
    basis_grads: Vec<[Point<T>; 3]>,
    topology: OnceLock<Topology>,
    pattern: OnceLock<crate::sparse::Pattern>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MeshExport<T> {
    pub vertices: Vec<Point<T>>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<usize>,
}

impl<T: Real> TriMesh<T> {
    /// Assembles a mesh from raw arrays; boundary flags are derived from edge
    /// multiplicity and triangles are reoriented counterclockwise.
    pub fn from_parts(vertices: Vec<Point<T>>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let o = orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if o == T::zero() {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate")));
            }
            if o < T::zero() {
                tri.swap(1, 2);
            }
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut basis_grads = Vec::with_capacity(triangles.len());
        let mut h_max = T::zero();
        for tri in &triangles {
            let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let det = orient(p[0], p[1], p[2]);
            areas.push(det * T::half());
            let mut g = [[T::zero(); 2]; 3];
            for k in 0..3 {
                let a = p[(k + 1) % 3];
                let b = p[(k + 2) % 3];
                // Gradient of the hat function of vertex k: rot(b - a) / det.
                g[k] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
            }
            basis_grads.push(g);
            for k in 0..3 {
                h_max = h_max.max(dist(p[k], p[(k + 1) % 3]));
            }
        }
        let mut mesh = TriMesh {
            boundary: vec![false; vertices.len()],
            vertices,
            triangles,
            h_max,
            areas,
            basis_grads,
            topology: OnceLock::new(),
            pattern: OnceLock::new(),
        };
        let topo = mesh.topology().clone();
        for (e, tris) in topo.edge_tris.iter().enumerate() {
            if tris[1] == NO_TRI {
                let [a, b] = topo.edges[e];
                mesh.boundary[a] = true;
                mesh.boundary[b] = true;
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.boundary[v]).collect()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn h_max(&self) -> T {
        self.h_max
    }

    pub fn area(&self, t: usize) -> T {
        self.areas[t]
    }

    pub fn total_area(&self) -> T {
        self.areas.iter().copied().sum()
    }

    /// Gradients of the three hat functions on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> &[Point<T>; 3] {
        &self.basis_grads[t]
    }

    pub fn tri_points(&self, t: usize) -> [Point<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn centroid(&self, t: usize) -> Point<T> {
        let p = self.tri_points(t);
        [
            (p[0][0] + p[1][0] + p[2][0]) * T::third(),
            (p[0][1] + p[1][1] + p[2][1]) * T::third(),
        ]
    }

    pub fn topology(&self) -> &Topology {
        self.topology.get_or_init(|| {
            let mut index: HashMap<(usize, usize), usize> = HashMap::new();
            let mut edges = Vec::new();
            let mut edge_tris: Vec<[usize; 2]> = Vec::new();
            let mut tri_edges = Vec::with_capacity(self.triangles.len());
            for (t, tri) in self.triangles.iter().enumerate() {
                let mut te = [0usize; 3];
                for k in 0..3 {
                    let a = tri[k];
                    let b = tri[(k + 1) % 3];
                    let key = (a.min(b), a.max(b));
                    let e = *index.entry(key).or_insert_with(|| {
                        edges.push([key.0, key.1]);
                        edge_tris.push([t, NO_TRI]);
                        edges.len() - 1
                    });
                    if edge_tris[e][0] != t {
                        edge_tris[e][1] = t;
                    }
                    te[k] = e;
                }
                tri_edges.push(te);
            }
            Topology {
                edges,
                edge_tris,
                tri_edges,
            }
        })
    }

    pub(crate) fn pattern_cell(&self) -> &OnceLock<crate::sparse::Pattern> {
        &self.pattern
    }

    /// Nodal values of `field` on triangle `t`.
    pub fn local_values(&self, field: &NodalField<T>, t: usize) -> [T; 3] {
        let [a, b, c] = self.triangles[t];
        [field.values[a], field.values[b], field.values[c]]
    }

    /// Constant gradient of a P1 field on triangle `t`.
    pub fn gradient(&self, field: &NodalField<T>, t: usize) -> Point<T> {
        let v = self.local_values(field, t);
        let g = &self.basis_grads[t];
        [
            v[0] * g[0][0] + v[1] * g[1][0] + v[2] * g[2][0],
            v[0] * g[0][1] + v[1] * g[1][1] + v[2] * g[2][1],
        ]
    }

    /// The P1 field on triangle `t` as an affine function.
    pub fn affine(&self, field: &NodalField<T>, t: usize) -> Affine<T> {
        let g = self.gradient(field, t);
        let p0 = self.vertices[self.triangles[t][0]];
        Affine {
            c: field.values[self.triangles[t][0]] - geometry::dot(g, p0),
            g,
        }
    }

    pub fn interpolate<F: FnMut(Point<T>) -> T>(&self, mut f: F) -> NodalField<T> {
        NodalField {
            values: self.vertices.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn interpolate_expr(&self, e: &Expr) -> Result<NodalField<T>> {
        let values = self
            .vertices
            .iter()
            .map(|&p| e.eval_point(p))
            .collect::<std::result::Result<Vec<T>, EvalError>>()?;
        Ok(NodalField { values })
    }

    /// Like [`interpolate_expr`](Self::interpolate_expr) but forces zero boundary values.
    pub fn interpolate_expr_zero_bc(&self, e: &Expr) -> Result<NodalField<T>> {
        let mut f = self.interpolate_expr(e)?;
        f.zero_boundary(self);
        Ok(f)
    }

    /// Exact integral of a P1 field (vertex rule).
    pub fn integrate_field(&self, field: &NodalField<T>) -> T {
        let mut s = T::zero();
        for t in 0..self.triangles.len() {
            let v = self.local_values(field, t);
            s += (v[0] + v[1] + v[2]) * T::third() * self.areas[t];
        }
        s
    }

    /// Integrates a point callback with the degree-2 edge-midpoint rule.
    pub fn integrate_fn<F>(&self, f: F) -> Result<T>
    where
        F: FnMut(usize, Point<T>, [T; 3]) -> std::result::Result<T, EvalError>,
    {
        self.integrate_with_rule(&EDGE_MIDPOINT, f)
    }

    /// Integrates a point callback with any triangle rule; `f` receives the
    /// triangle index, the point and its barycentric coordinates.
    pub fn integrate_with_rule<F>(&self, rule: &TriRule, mut f: F) -> Result<T>
    where
        F: FnMut(usize, Point<T>, [T; 3]) -> std::result::Result<T, EvalError>,
    {
        let mut s = T::zero();
        for t in 0..self.triangles.len() {
            let mut err = None;
            rule.for_each(self.tri_points(t), |p, l, w| {
                if err.is_some() {
                    return;
                }
                match f(t, p, l) {
                    Ok(v) if v.is_finite() => s += w * v,
                    Ok(_) => err = Some(EvalError::NonFinite),
                    Err(e) => err = Some(e),
                }
            });
            if let Some(e) = err {
                return Err(Error::Eval(e));
            }
        }
        Ok(s)
    }

    /// Integrates an analytic expression in (x1, x2).
    pub fn integrate_expr(&self, e: &Expr) -> Result<T> {
        self.integrate_fn(|_, p, _| e.eval_point(p))
    }

    /// Exact L2 inner product of two P1 fields (consistent mass).
    pub fn l2_inner(&self, u: &NodalField<T>, v: &NodalField<T>) -> T {
        let mut s = T::zero();
        let twelfth = T::lit(1.0 / 12.0);
        for t in 0..self.triangles.len() {
            let a = self.local_values(u, t);
            let b = self.local_values(v, t);
            let diag = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let sums = (a[0] + a[1] + a[2]) * (b[0] + b[1] + b[2]);
            s += (diag + sums) * twelfth * self.areas[t];
        }
        s
    }

    pub fn l2_norm(&self, u: &NodalField<T>) -> T {
        self.l2_inner(u, u).max(T::zero()).sqrt()
    }

    /// Consistent mass matrix applied to a nodal vector.
    pub fn mass_apply(&self, u: &NodalField<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.vertices.len()];
        let twelfth = T::lit(1.0 / 12.0);
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.local_values(u, t);
            let sum = a[0] + a[1] + a[2];
            for k in 0..3 {
                out[tri[k]] += (a[k] + sum) * twelfth * self.areas[t];
            }
        }
        out
    }

    /// Sum of |∇u|² weighted by triangle area.
    pub fn dirichlet_energy(&self, u: &NodalField<T>) -> T {
        (0..self.triangles.len())
            .map(|t| {
                let g = self.gradient(u, t);
                geometry::dot(g, g) * self.areas[t]
            })
            .sum()
    }

    /// Max over triangles of |∇u|.
    pub fn max_gradient(&self, u: &NodalField<T>) -> T {
        (0..self.triangles.len())
            .map(|t| geometry::norm(self.gradient(u, t)))
            .fold(T::zero(), T::max)
    }

    /// Uniform red refinement: each triangle is split into four.
    pub fn refine(&self) -> Result<TriMesh<T>> {
        let topo = self.topology();
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        for &[a, b] in &topo.edges {
            vertices.push(geometry::lerp(self.vertices[a], self.vertices[b], T::half()));
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [e01, e12, e20] = topo.tri_edges[t];
            let (m01, m12, m20) = (nv + e01, nv + e12, nv + e20);
            triangles.push([tri[0], m01, m20]);
            triangles.push([m01, tri[1], m12]);
            triangles.push([m20, m12, tri[2]]);
            triangles.push([m01, m12, m20]);
        }
        TriMesh::from_parts(vertices, triangles)
    }

    pub fn export(&self) -> MeshExport<T> {
        MeshExport {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary: self.boundary_vertices(),
        }
    }

    /// Index of a triangle containing `p` (barycentric test with slack), if any.
    pub fn locate(&self, p: Point<T>) -> Option<(usize, [T; 3])> {
        let slack = T::lit(-1e-12);
        for t in 0..self.triangles.len() {
            let q = self.tri_points(t);
            let det = orient(q[0], q[1], q[2]);
            let l0 = orient(p, q[1], q[2]) / det;
            let l1 = orient(q[0], p, q[2]) / det;
            let l2 = T::one() - l0 - l1;
            if l0 >= slack && l1 >= slack && l2 >= slack {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }

    /// Evaluates a P1 field at `p` by point location.
    pub fn eval_at(&self, field: &NodalField<T>, p: Point<T>) -> Option<T> {
        self.locate(p).map(|(t, l)| {
            let v = self.local_values(field, t);
            l[0] * v[0] + l[1] * v[1] + l[2] * v[2]
        })
    }
}

/// Triangulates `domain`.
///
/// Axis-aligned rectangles get a structured grid with `n = ceil(side / target_h)`
/// cells per side, each cell split by one diagonal in an alternating pattern.
/// Other convex polygons are fanned from their first vertex and red-refined
/// until the largest triangle diameter is at most `target_h`.
pub fn build_mesh<T: Real>(domain: &PolygonDomain<T>, target_h: T) -> Result<TriMesh<T>> {
    if !(target_h > T::zero()) || !target_h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target_h must be positive, got {target_h}"
        )));
    }
    domain.validate()?;
    if let Some((x0, y0, x1, y1)) = domain.as_rectangle() {
        let nx = ((x1 - x0) / target_h).ceil().to_usize().unwrap_or(1).max(1);
        let ny = ((y1 - y0) / target_h).ceil().to_usize().unwrap_or(1).max(1);
        return structured_rectangle(x0, y0, x1, y1, nx, ny);
    }
    let v = &domain.vertices;
    let tris = (1..v.len() - 1).map(|k| [0, k, k + 1]).collect();
    let mut mesh = TriMesh::from_parts(v.clone(), tris)?;
    while mesh.h_max() > target_h {
        mesh = mesh.refine()?;
    }
    Ok(mesh)
}

/// Structured `nx` x `ny` grid on a rectangle with alternating diagonals.
pub fn structured_rectangle<T: Real>(x0: T, y0: T, x1: T, y1: T, nx: usize, ny: usize) -> Result<TriMesh<T>> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("grid needs at least one cell".into()));
    }
    let coord = |a: T, b: T, i: usize, n: usize| {
        if i == n {
            b
        } else {
            a + (b - a) * T::from_usize(i).unwrap() / T::from_usize(n).unwrap()
        }
    };
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([coord(x0, x1, i, nx), coord(y0, y1, j, ny)]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    TriMesh::from_parts(vertices, triangles)
}

/// One value per mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Real")]
pub struct NodalField<T> {
    pub values: Vec<T>,
}

impl<T: Real> NodalField<T> {
    pub fn zeros(n: usize) -> Self {
        NodalField {
            values: vec![T::zero(); n],
        }
    }

    pub fn constant(n: usize, c: T) -> Self {
        NodalField { values: vec![c; n] }
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        NodalField { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_len(&self, mesh: &TriMesh<T>, what: &str) -> Result<()> {
        if self.values.len() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "{what}: field has {} values, mesh has {} vertices",
                self.values.len(),
                mesh.num_vertices()
            )));
        }
        Ok(())
    }

    pub fn zero_boundary(&mut self, mesh: &TriMesh<T>) {
        for (v, b) in self.values.iter_mut().zip(mesh.boundary_flags()) {
            if *b {
                *v = T::zero();
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: T, other: &NodalField<T>) -> NodalField<T> {
        NodalField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + s * b)
                .collect(),
        }
    }

    pub fn scaled(&self, s: T) -> NodalField<T> {
        NodalField {
            values: self.values.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn map<F: Fn(T) -> T>(&self, f: F) -> NodalField<T> {
        NodalField {
            values: self.values.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(h: f64) -> TriMesh<f64> {
        build_mesh(&PolygonDomain::unit_square(), h).unwrap()
    }

    #[test]
    fn counting_examples() {
        let m = unit(1.0);
        assert_eq!((m.num_triangles(), m.num_vertices()), (2, 4));
        let m = unit(0.5);
        assert_eq!((m.num_triangles(), m.num_vertices()), (8, 9));
        let tri = PolygonDomain::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let m = build_mesh(&tri, 10.0).unwrap();
        assert_eq!(m.num_triangles(), 1);
        assert!(build_mesh(&tri, 0.0).is_err());
    }

    #[test]
    fn refine_examples() {
        let m = unit(1.0);
        let r = m.refine().unwrap();
        assert_eq!(r.num_triangles(), 8);
        assert!((r.h_max() - m.h_max() / 2.0).abs() < 1e-14);
        assert!((r.total_area() - 1.0).abs() < 1e-12);
        assert_eq!(r.boundary_vertices().len(), 8);
    }

    #[test]
    fn general_convex_polygon() {
        let hex: Vec<[f64; 2]> = (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let d = PolygonDomain::new(hex).unwrap();
        let m = build_mesh(&d, 0.3).unwrap();
        assert!(m.h_max() <= 0.3);
        assert!((m.total_area() - d.area()).abs() <= 1e-12 * d.area());
        for t in 0..m.num_triangles() {
            assert!(m.area(t) > 0.0);
        }
    }

    #[test]
    fn degenerate_domains_rejected() {
        assert!(PolygonDomain::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        assert!(PolygonDomain::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
        // clockwise
        assert!(PolygonDomain::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).is_err());
        // nonconvex
        assert!(PolygonDomain::new(vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [2.0, 2.0], [0.0, 2.0]]).is_err());
    }

    #[test]
    fn conformity_every_interior_edge_has_two_triangles() {
        let m = unit(0.25).refine().unwrap();
        let topo = m.topology();
        for (e, tris) in topo.edge_tris.iter().enumerate() {
            let [a, b] = topo.edges[e];
            let on_boundary = tris[1] == NO_TRI;
            let pa = m.vertices()[a];
            let pb = m.vertices()[b];
            let boundary_edge = (pa[0] == pb[0] && (pa[0] == 0.0 || pa[0] == 1.0))
                || (pa[1] == pb[1] && (pa[1] == 0.0 || pa[1] == 1.0));
            assert_eq!(on_boundary, boundary_edge);
        }
    }

    #[test]
    fn integration_examples() {
        let m = unit(0.25);
        let one = m.integrate_fn(|_, _, _| Ok(1.0)).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
        let x1 = m.interpolate(|p| p[0]);
        assert!((m.integrate_field(&x1) - 0.5).abs() < 1e-14);
        let xy = m.integrate_fn(|_, p, _| Ok(p[0] * p[1])).unwrap();
        assert!((xy - 0.25).abs() < 1e-14);
        assert!(m.integrate_fn(|_, _, _| Ok(f64::NAN)).is_err());
    }

    #[test]
    fn sine_integral_converges_at_second_order() {
        let exact = 4.0 / std::f64::consts::PI.powi(2);
        let e = crate::expr::parse_expr("sin(pi*x1)*sin(pi*x2)").unwrap();
        let mut m = unit(0.25);
        let mut errs = Vec::new();
        for _ in 0..4 {
            let f = m.interpolate_expr(&e).unwrap();
            errs.push((m.integrate_field(&f) - exact).abs());
            m = m.refine().unwrap();
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.9, "{errs:?}");
        }
    }

    #[test]
    fn l2_inner_matches_quadrature() {
        let m = unit(0.25);
        let u = m.interpolate(|p| p[0] * p[0] - p[1]);
        let v = m.interpolate(|p| 1.0 + p[0] * p[1]);
        let quad = m
            .integrate_fn(|t, _, l| {
                let a = m.local_values(&u, t);
                let b = m.local_values(&v, t);
                let ua = l[0] * a[0] + l[1] * a[1] + l[2] * a[2];
                let vb = l[0] * b[0] + l[1] * b[1] + l[2] * b[2];
                Ok(ua * vb)
            })
            .unwrap();
        assert!((m.l2_inner(&u, &v) - quad).abs() < 1e-14);
        let mu = m.mass_apply(&u);
        let dotp: f64 = mu.iter().zip(&v.values).map(|(a, b)| a * b).sum();
        assert!((dotp - quad).abs() < 1e-14);
    }

    #[test]
    fn f32_mesh() {
        let m: TriMesh<f32> = build_mesh(&PolygonDomain::unit_square(), 0.25).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-6);
    }
}
