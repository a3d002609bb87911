//! Regions between two level curves and Green's first identity on them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{DiffExpr, EvalError};
use crate::geometry::{
    clip_convex, clip_to_convex_window, cross, dot, lerp, norm, polygon_area, sub, Point, EDGE_MIDPOINT,
};
use crate::levelset::{curve_integral, extract_level_set, LevelCurve};
use crate::mesh::{NodalField, TriMesh};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct RegionPiece<T> {
    pub triangle: usize,
    /// +1 for S⁺ = {y1 > t > y2}, −1 for S⁻ = {y1 < t < y2}.
    pub sign: i8,
    pub polygon: Vec<Point<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct RegionIndicator<T> {
    pub pieces: Vec<RegionPiece<T>>,
}

impl<T: Real> RegionIndicator<T> {
    pub fn area_plus(&self) -> T {
        self.area_of(1)
    }

    pub fn area_minus(&self) -> T {
        self.area_of(-1)
    }

    fn area_of(&self, sign: i8) -> T {
        self.pieces
            .iter()
            .filter(|p| p.sign == sign)
            .map(|p| polygon_area(&p.polygon).abs())
            .sum()
    }

    /// ∫ (𝟙_{S⁺} − 𝟙_{S⁻}) dx.
    pub fn signed_area(&self) -> T {
        self.pieces
            .iter()
            .map(|p| {
                let a = polygon_area(&p.polygon).abs();
                if p.sign > 0 {
                    a
                } else {
                    -a
                }
            })
            .sum()
    }

    /// ∫ (𝟙_{S⁺} − 𝟙_{S⁻}) f dx with the degree-2 rule on each piece's fan.
    pub fn integrate<F>(&self, mut f: F) -> Result<T>
    where
        F: FnMut(Point<T>, usize) -> std::result::Result<T, EvalError>,
    {
        let mut s = T::zero();
        for p in &self.pieces {
            let v = EDGE_MIDPOINT
                .integrate_polygon(&p.polygon, |x| f(x, p.triangle))
                .map_err(Error::Eval)?;
            if p.sign > 0 {
                s += v;
            } else {
                s -= v;
            }
        }
        if !s.is_finite() {
            return Err(EvalError::NonFinite.into());
        }
        Ok(s)
    }
}

fn check_window<T: Real>(window: Option<&[Point<T>]>) -> Result<()> {
    if let Some(w) = window {
        if w.len() < 3 {
            return Err(Error::InvalidArgument("window needs at least 3 vertices".into()));
        }
        let n = w.len();
        for i in 0..n {
            let (a, b, c) = (w[i], w[(i + 1) % n], w[(i + 2) % n]);
            if cross(sub(b, a), sub(c, b)) < T::zero() {
                return Err(Error::InvalidArgument(
                    "window must be convex and counterclockwise".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Exact polygonal pieces of S⁺ and S⁻ per triangle, optionally cut to a
/// convex window.
pub fn region_split<T: Real>(
    mesh: &TriMesh<T>,
    y1: &NodalField<T>,
    y2: &NodalField<T>,
    t: T,
    window: Option<&[Point<T>]>,
) -> Result<RegionIndicator<T>> {
    y1.check_len(mesh, "y1")?;
    y2.check_len(mesh, "y2")?;
    check_window(window)?;
    let tol = T::lit(1e-12);
    let mut pieces = Vec::new();
    for tri in 0..mesh.num_triangles() {
        let f1 = mesh.affine(y1, tri).shifted(-t);
        let f2 = mesh.affine(y2, tri).shifted(-t);
        let pts = mesh.tri_points(tri);
        let min_area = mesh.area(tri) * T::epsilon() * T::lit(64.0);
        for (sign, g1, g2) in [(1i8, f1, f2.neg()), (-1i8, f1.neg(), f2)] {
            let mut poly = clip_convex(&pts, &g1, tol);
            if poly.len() >= 3 {
                poly = clip_convex(&poly, &g2, tol);
            }
            if let (Some(w), true) = (window, poly.len() >= 3) {
                poly = clip_to_convex_window(&poly, w, tol);
            }
            if poly.len() >= 3 && polygon_area(&poly).abs() > min_area {
                pieces.push(RegionPiece {
                    triangle: tri,
                    sign,
                    polygon: poly,
                });
            }
        }
    }
    Ok(RegionIndicator { pieces })
}

/// The test function v of the identity.
#[derive(Debug, Clone, Copy)]
pub enum GreenFunction<'a, T> {
    Analytic(&'a DiffExpr),
    Field(&'a NodalField<T>),
}

impl<'a, T: Real> GreenFunction<'a, T> {
    fn value(&self, mesh: &TriMesh<T>, p: Point<T>, tri: usize) -> std::result::Result<T, EvalError> {
        match self {
            GreenFunction::Analytic(e) => e.value(p),
            GreenFunction::Field(f) => Ok(mesh.affine(f, tri).eval(p)),
        }
    }

    fn gradient(&self, mesh: &TriMesh<T>, p: Point<T>, tri: usize) -> std::result::Result<Point<T>, EvalError> {
        match self {
            GreenFunction::Analytic(e) => e.gradient(p),
            GreenFunction::Field(f) => Ok(mesh.gradient(f, tri)),
        }
    }
}

/// Where the unit normals of the boundary integrals come from.
#[derive(Debug, Clone, Copy)]
pub enum NormalSource<'a> {
    /// Per-triangle gradients of the P1 fields: the normals of the polygonal
    /// regions themselves, so the identity holds up to roundoff.
    Discrete,
    /// Gradients of the analytic fields the P1 data interpolate; the residual
    /// then measures the geometric discretisation error.
    Analytic { y1: &'a DiffExpr, y2: &'a DiffExpr },
}

#[derive(Debug, Clone, Copy)]
pub struct GreenOptions<'a, T> {
    pub window: Option<&'a [Point<T>]>,
    pub theta_grad: T,
    pub normals: NormalSource<'a>,
}

impl<'a, T: Real> Default for GreenOptions<'a, T> {
    fn default() -> Self {
        GreenOptions {
            window: None,
            theta_grad: T::lit(1e-8),
            normals: NormalSource::Discrete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct GreenReport<T> {
    pub h_max: T,
    pub lhs: T,
    pub rhs: T,
    pub residual: T,
    pub area_plus: T,
    pub area_minus: T,
}

/// Cuts a segment to a convex counterclockwise window (Cyrus–Beck).
fn clip_segment<T: Real>(a: Point<T>, b: Point<T>, window: &[Point<T>]) -> Option<(Point<T>, Point<T>)> {
    let (mut t0, mut t1) = (T::zero(), T::one());
    let d = sub(b, a);
    let n = window.len();
    for i in 0..n {
        let (p, q) = (window[i], window[(i + 1) % n]);
        let e = sub(q, p);
        // Inside: cross(e, x - p) >= 0.
        let fa = cross(e, sub(a, p));
        let fd = cross(e, d);
        if fd == T::zero() {
            if fa < T::zero() {
                return None;
            }
        } else {
            let s = -fa / fd;
            if fd > T::zero() {
                t0 = t0.max(s);
            } else {
                t1 = t1.min(s);
            }
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((lerp(a, b, t0), lerp(a, b, t1)))
}

fn windowed<T: Real>(c: &LevelCurve<T>, window: Option<&[Point<T>]>) -> Vec<LevelCurve<T>> {
    let Some(w) = window else { return vec![c.clone()] };
    // Split into maximal runs of segments with nonempty intersection.
    let mut out = Vec::new();
    let mut cur: Option<LevelCurve<T>> = None;
    for i in 0..c.num_segments() {
        let (a, b) = c.segment(i);
        match clip_segment(a, b, w) {
            Some((p, q)) if p != q => {
                let run = cur.get_or_insert_with(|| LevelCurve {
                    closed: false,
                    points: vec![p],
                    length: T::zero(),
                    min_grad: c.min_grad,
                    triangles: Vec::new(),
                });
                if *run.points.last().expect("nonempty") != p {
                    // Re-entry without continuity: start a new run.
                    out.push(cur.take().expect("run"));
                    cur = Some(LevelCurve {
                        closed: false,
                        points: vec![p],
                        length: T::zero(),
                        min_grad: c.min_grad,
                        triangles: Vec::new(),
                    });
                }
                let run = cur.as_mut().expect("run");
                run.points.push(q);
                run.triangles.push(c.triangles[i]);
                run.length += crate::geometry::dist(p, q);
            }
            _ => {
                if let Some(r) = cur.take() {
                    out.push(r);
                }
            }
        }
    }
    if let Some(r) = cur.take() {
        out.push(r);
    }
    if out.len() > 1 && c.closed {
        // A closed curve cut once by the window: the last run continues into the first.
        let first_start = out[0].points[0];
        let last_end = *out.last().expect("nonempty").points.last().expect("nonempty");
        if first_start == last_end {
            let mut last = out.pop().expect("nonempty");
            let first = out.remove(0);
            last.points.extend_from_slice(&first.points[1..]);
            last.triangles.extend_from_slice(&first.triangles);
            last.length += first.length;
            out.insert(0, last);
        }
    }
    out
}

/// lhs = ∫(𝟙_{S⁺}−𝟙_{S⁻})∇v·∇φ dx and
/// rhs = −∫(𝟙_{S⁺}−𝟙_{S⁻})vΔφ dx − ∮_{𝓒₁} v∇φ·n₁ dH¹ + ∮_{𝓒₂} v∇φ·n₂ dH¹,
/// nⱼ = ∇yⱼ/|∇yⱼ|, with 𝓒ⱼ = {yⱼ = t} extracted from the P1 data.
pub fn green_residual<T: Real>(
    mesh: &TriMesh<T>,
    y1: &NodalField<T>,
    y2: &NodalField<T>,
    t: T,
    v: GreenFunction<'_, T>,
    phi: &DiffExpr,
    opts: &GreenOptions<'_, T>,
) -> Result<GreenReport<T>> {
    let regions = region_split(mesh, y1, y2, t, opts.window)?;
    let lhs = regions.integrate(|p, tri| Ok(dot(v.gradient(mesh, p, tri)?, phi.gradient(p)?)))?;
    let volume = regions.integrate(|p, tri| Ok(v.value(mesh, p, tri)? * phi.lap(p)?))?;

    let mut boundary = [T::zero(); 2];
    for (k, y) in [y1, y2].into_iter().enumerate() {
        let dec = extract_level_set(mesh, y, t)?;
        let curves: Vec<LevelCurve<T>> = dec.components.iter().flat_map(|c| windowed(c, opts.window)).collect();
        let closed_or_open = dec
            .components
            .iter()
            .filter(|c| !windowed(c, opts.window).is_empty())
            .count();
        if closed_or_open > 1 {
            return Err(Error::Components(closed_or_open));
        }
        for c in &curves {
            let mg = c
                .triangles
                .iter()
                .map(|&tri| norm(mesh.gradient(y, tri)))
                .fold(T::infinity(), T::min);
            if mg < opts.theta_grad {
                return Err(Error::GradientTooSmall {
                    min_grad: mg.as_f64(),
                    threshold: opts.theta_grad.as_f64(),
                });
            }
            boundary[k] += curve_integral(c, |p, tri| {
                let g = match opts.normals {
                    NormalSource::Discrete => mesh.gradient(y, tri),
                    NormalSource::Analytic { y1: e1, y2: e2 } => {
                        if k == 0 {
                            e1.gradient(p)?
                        } else {
                            e2.gradient(p)?
                        }
                    }
                };
                let gn = norm(g);
                if gn == T::zero() {
                    return Err(EvalError::DivisionByZero);
                }
                Ok(v.value(mesh, p, tri)? * dot(phi.gradient(p)?, g) / gn)
            })?;
        }
    }
    let rhs = -volume - boundary[0] + boundary[1];
    Ok(GreenReport {
        h_max: mesh.h_max(),
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        area_plus: regions.area_plus(),
        area_minus: regions.area_minus(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, structured_rectangle, PolygonDomain};

    fn unit(h: f64) -> TriMesh<f64> {
        build_mesh(&PolygonDomain::unit_square(), h).unwrap()
    }

    #[test]
    fn coincident_fields_give_empty_regions() {
        let m = unit(0.125);
        let y = m.interpolate(|p| p[0] * p[1]);
        let r = region_split(&m, &y, &y, 0.3, None).unwrap();
        assert!(r.pieces.is_empty());
    }

    #[test]
    fn strip_geometry() {
        let m = unit(0.125);
        let y1 = m.interpolate(|p| p[0]);
        let y2 = m.interpolate(|p| p[0] - 0.2);
        let r = region_split(&m, &y1, &y2, 0.5, None).unwrap();
        assert!((r.area_plus() - 0.2).abs() < 1e-14);
        assert_eq!(r.area_minus(), 0.0);
        assert!((r.signed_area() - 0.2).abs() < 1e-14);
        let s = region_split(&m, &y2, &y1, 0.5, None).unwrap();
        assert!((s.area_minus() - 0.2).abs() < 1e-14);
        assert_eq!(s.area_plus(), 0.0);
        for p in &r.pieces {
            let c = crate::geometry::polygon_centroid(&p.polygon);
            assert!(c[0] > 0.5 - 1e-12 && c[0] < 0.7 + 1e-12);
        }
    }

    #[test]
    fn window_cuts_the_strip() {
        let m = unit(0.125);
        let y1 = m.interpolate(|p| p[0]);
        let y2 = m.interpolate(|p| p[0] - 0.2);
        let w = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.0, 0.5]];
        let r = region_split(&m, &y1, &y2, 0.5, Some(&w)).unwrap();
        assert!((r.signed_area() - 0.1).abs() < 1e-14);
    }

    #[test]
    fn trivial_identities() {
        let m = unit(0.125);
        let y = m.interpolate(|p| p[0] + 0.1 * p[1]);
        let phi = DiffExpr::parse("x1").unwrap();
        let one = DiffExpr::parse("1").unwrap();
        let rep = green_residual(
            &m,
            &y,
            &y,
            0.5,
            GreenFunction::Analytic(&one),
            &phi,
            &GreenOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.rhs.abs() < 1e-10);
        let zero = DiffExpr::parse("0").unwrap();
        let y2 = y.map(|v| v - 0.05);
        let rep = green_residual(
            &m,
            &y,
            &y2,
            0.5,
            GreenFunction::Analytic(&zero),
            &phi,
            &GreenOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
    }

    #[test]
    fn discrete_normals_make_the_identity_exact() {
        let m: TriMesh<f64> = structured_rectangle(-1.0, -1.0, 1.0, 1.0, 16, 16).unwrap();
        let y1 = m.interpolate(|p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]));
        let y2 = y1.scaled(0.9);
        let v = DiffExpr::parse("x1^2").unwrap();
        let phi = DiffExpr::parse("x1^2 + x2^2").unwrap();
        let rep = green_residual(
            &m,
            &y1,
            &y2,
            0.45,
            GreenFunction::Analytic(&v),
            &phi,
            &GreenOptions::default(),
        )
        .unwrap();
        assert!(rep.lhs.abs() > 1e-3);
        assert!(rep.residual < 1e-12, "{rep:?}");
        let vf = m.interpolate(|p| p[0] * p[0]);
        let rep = green_residual(
            &m,
            &y1,
            &y2,
            0.45,
            GreenFunction::Field(&vf),
            &phi,
            &GreenOptions::default(),
        )
        .unwrap();
        assert!(rep.residual < 1e-12, "{rep:?}");
    }

    #[test]
    fn flat_curve_is_rejected() {
        let m = unit(0.25);
        let y1 = m.interpolate(|p| p[0]);
        let y2 = y1.scaled(1e-10);
        let phi = DiffExpr::parse("x1").unwrap();
        let v = DiffExpr::parse("1").unwrap();
        let e = green_residual(
            &m,
            &y1,
            &y2,
            1e-11,
            GreenFunction::Analytic(&v),
            &phi,
            &GreenOptions::default(),
        );
        assert!(matches!(e, Err(Error::GradientTooSmall { .. })));
    }

    #[test]
    fn segment_clipping() {
        let w = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let (p, q) = clip_segment([-1.0, 0.5], [2.0, 0.5], &w).unwrap();
        assert_eq!(p, [0.0, 0.5]);
        assert_eq!(q, [1.0, 0.5]);
        assert!(clip_segment([-1.0, 2.0], [2.0, 2.0], &w).is_none());
    }
}
