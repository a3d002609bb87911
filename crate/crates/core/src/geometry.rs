//! Planar primitives: points, affine functions, convex polygon clipping and
//! triangle quadrature.

use crate::real::Real;

pub type Point<T> = [T; 2];

#[inline]
pub fn sub<T: Real>(a: Point<T>, b: Point<T>) -> Point<T> {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add<T: Real>(a: Point<T>, b: Point<T>) -> Point<T> {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale<T: Real>(a: Point<T>, s: T) -> Point<T> {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot<T: Real>(a: Point<T>, b: Point<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross<T: Real>(a: Point<T>, b: Point<T>) -> T {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm<T: Real>(a: Point<T>) -> T {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist<T: Real>(a: Point<T>, b: Point<T>) -> T {
    norm(sub(a, b))
}

#[inline]
pub fn lerp<T: Real>(a: Point<T>, b: Point<T>, s: T) -> Point<T> {
    [a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s]
}

/// Twice the signed area of triangle (a, b, c).
#[inline]
pub fn orient<T: Real>(a: Point<T>, b: Point<T>, c: Point<T>) -> T {
    cross(sub(b, a), sub(c, a))
}

/// Closest point on segment [a, b] to p, and its parameter in [0, 1].
pub fn closest_on_segment<T: Real>(p: Point<T>, a: Point<T>, b: Point<T>) -> (Point<T>, T) {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == T::zero() {
        return (a, T::zero());
    }
    let s = (dot(sub(p, a), ab) / len2).max(T::zero()).min(T::one());
    (lerp(a, b, s), s)
}

pub fn point_segment_distance<T: Real>(p: Point<T>, a: Point<T>, b: Point<T>) -> T {
    dist(p, closest_on_segment(p, a, b).0)
}

/// Minimum distance between two segments (zero when they intersect).
pub fn segment_segment_distance<T: Real>(a0: Point<T>, a1: Point<T>, b0: Point<T>, b1: Point<T>) -> T {
    let o1 = orient(a0, a1, b0);
    let o2 = orient(a0, a1, b1);
    let o3 = orient(b0, b1, a0);
    let o4 = orient(b0, b1, a1);
    if o1 * o2 < T::zero() && o3 * o4 < T::zero() {
        return T::zero();
    }
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}

/// Affine function x -> c + g . x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine<T> {
    pub c: T,
    pub g: Point<T>,
}

impl<T: Real> Affine<T> {
    /// Interpolates the three nodal values of a nondegenerate triangle.
    pub fn from_triangle(p: [Point<T>; 3], v: [T; 3]) -> Self {
        let e1 = sub(p[1], p[0]);
        let e2 = sub(p[2], p[0]);
        let det = cross(e1, e2);
        let d1 = v[1] - v[0];
        let d2 = v[2] - v[0];
        // Solve [e1; e2] g = [d1; d2].
        let g = [(d1 * e2[1] - d2 * e1[1]) / det, (e1[0] * d2 - e2[0] * d1) / det];
        Affine {
            c: v[0] - dot(g, p[0]),
            g,
        }
    }

    #[inline]
    pub fn eval(&self, x: Point<T>) -> T {
        self.c + dot(self.g, x)
    }

    pub fn shifted(&self, dc: T) -> Self {
        Affine {
            c: self.c + dc,
            g: self.g,
        }
    }

    pub fn neg(&self) -> Self {
        Affine {
            c: -self.c,
            g: [-self.g[0], -self.g[1]],
        }
    }

    pub fn combine(&self, a: T, other: &Affine<T>, b: T) -> Self {
        Affine {
            c: a * self.c + b * other.c,
            g: [a * self.g[0] + b * other.g[0], a * self.g[1] + b * other.g[1]],
        }
    }
}

/// Keeps the part of a convex polygon where `f >= 0` (Sutherland–Hodgman
/// against one half-plane). Nearly coincident output vertices (within `tol`)
/// are merged.
pub fn clip_convex<T: Real>(poly: &[Point<T>], f: &Affine<T>, tol: T) -> Vec<Point<T>> {
    let n = poly.len();
    let mut out: Vec<Point<T>> = Vec::with_capacity(n + 1);
    if n == 0 {
        return out;
    }
    let vals: Vec<T> = poly.iter().map(|&p| f.eval(p)).collect();
    if vals.iter().all(|&v| v >= T::zero()) {
        return poly.to_vec();
    }
    if vals.iter().all(|&v| v <= T::zero()) {
        return out;
    }
    let push = |p: Point<T>, out: &mut Vec<Point<T>>| {
        if let Some(&last) = out.last() {
            if dist(last, p) <= tol {
                return;
            }
        }
        out.push(p);
    };
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b) = (poly[i], poly[j]);
        let (fa, fb) = (vals[i], vals[j]);
        if fa >= T::zero() {
            push(a, &mut out);
        }
        if (fa > T::zero() && fb < T::zero()) || (fa < T::zero() && fb > T::zero()) {
            let s = fa / (fa - fb);
            push(lerp(a, b, s), &mut out);
        }
    }
    while out.len() > 1 && dist(out[0], *out.last().unwrap()) <= tol {
        out.pop();
    }
    if out.len() < 3 {
        out.clear();
    }
    out
}

/// Keeps the part of a convex polygon inside another convex (CCW) polygon.
pub fn clip_to_convex_window<T: Real>(poly: &[Point<T>], window: &[Point<T>], tol: T) -> Vec<Point<T>> {
    let mut cur = poly.to_vec();
    let m = window.len();
    for i in 0..m {
        if cur.is_empty() {
            break;
        }
        let a = window[i];
        let b = window[(i + 1) % m];
        // Left of a->b is inside for a CCW window: f(x) = cross(b - a, x - a).
        let e = sub(b, a);
        let f = Affine {
            c: -cross(e, a),
            g: [-e[1], e[0]],
        };
        cur = clip_convex(&cur, &f, tol);
    }
    cur
}

/// Signed area (positive for counterclockwise order).
pub fn polygon_area<T: Real>(poly: &[Point<T>]) -> T {
    let n = poly.len();
    if n < 3 {
        return T::zero();
    }
    let mut s = T::zero();
    for i in 0..n {
        s += cross(poly[i], poly[(i + 1) % n]);
    }
    s * T::half()
}

pub fn polygon_centroid<T: Real>(poly: &[Point<T>]) -> Point<T> {
    let n = poly.len();
    let a = polygon_area(poly);
    if a == T::zero() {
        let mut c = [T::zero(); 2];
        for p in poly {
            c = add(c, *p);
        }
        return scale(c, T::one() / T::from_usize(n.max(1)).unwrap());
    }
    let mut cx = T::zero();
    let mut cy = T::zero();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let w = cross(p, q);
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
    }
    let k = T::one() / (T::lit(6.0) * a);
    [cx * k, cy * k]
}

/// Quadrature rule on a triangle in barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TriRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

/// Edge-midpoint rule, exact for degree 2.
pub const EDGE_MIDPOINT: TriRule = TriRule {
    points: &[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

/// Vertex rule, exact for degree 1.
pub const VERTEX: TriRule = TriRule {
    points: &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

/// Seven-point rule, exact for degree 5.
pub const DEGREE5: TriRule = TriRule {
    points: &[
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [
            0.059_715_871_789_769_82,
            0.470_142_064_105_115_1,
            0.470_142_064_105_115_1,
        ],
        [
            0.470_142_064_105_115_1,
            0.059_715_871_789_769_82,
            0.470_142_064_105_115_1,
        ],
        [
            0.470_142_064_105_115_1,
            0.470_142_064_105_115_1,
            0.059_715_871_789_769_82,
        ],
        [
            0.797_426_985_353_087_3,
            0.101_286_507_323_456_3,
            0.101_286_507_323_456_3,
        ],
        [
            0.101_286_507_323_456_3,
            0.797_426_985_353_087_3,
            0.101_286_507_323_456_3,
        ],
        [
            0.101_286_507_323_456_3,
            0.101_286_507_323_456_3,
            0.797_426_985_353_087_3,
        ],
    ],
    weights: &[
        0.225,
        0.132_394_152_788_506_2,
        0.132_394_152_788_506_2,
        0.132_394_152_788_506_2,
        0.125_939_180_544_827_2,
        0.125_939_180_544_827_2,
        0.125_939_180_544_827_2,
    ],
};

impl TriRule {
    /// Calls `f(point, barycentric, weight)` for each node; weights include the area.
    pub fn for_each<T: Real, F: FnMut(Point<T>, [T; 3], T)>(&self, tri: [Point<T>; 3], mut f: F) {
        let area = orient(tri[0], tri[1], tri[2]).abs() * T::half();
        for (b, &w) in self.points.iter().zip(self.weights) {
            let l = [T::lit(b[0]), T::lit(b[1]), T::lit(b[2])];
            let p = [
                l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
            ];
            f(p, l, T::lit(w) * area);
        }
    }

    /// Integrates over a triangle; stops at the first error.
    pub fn integrate<T: Real, E, F: FnMut(Point<T>) -> Result<T, E>>(
        &self,
        tri: [Point<T>; 3],
        mut f: F,
    ) -> Result<T, E> {
        let mut s = T::zero();
        let mut err = None;
        self.for_each(tri, |p, _, w| {
            if err.is_some() {
                return;
            }
            match f(p) {
                Ok(v) => s += w * v,
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(s),
        }
    }

    /// Integrates over a convex polygon by fanning from its first vertex.
    pub fn integrate_polygon<T: Real, E, F: FnMut(Point<T>) -> Result<T, E>>(
        &self,
        poly: &[Point<T>],
        mut f: F,
    ) -> Result<T, E> {
        let mut s = T::zero();
        for k in 1..poly.len().saturating_sub(1) {
            s += self.integrate([poly[0], poly[k], poly[k + 1]], &mut f)?;
        }
        Ok(s)
    }
}

/// Two-point Gauss–Legendre nodes on [0, 1] with weights 1/2 each.
pub fn gauss2_params<T: Real>() -> [T; 2] {
    let d = T::lit(0.5 / 3f64.sqrt());
    [T::half() - d, T::half() + d]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_interpolates_vertices() {
        let p: [Point<f64>; 3] = [[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]];
        let f = Affine::from_triangle(p, [1.0, -2.0, 4.0]);
        assert!((f.eval(p[0]) - 1.0).abs() < 1e-14);
        assert!((f.eval(p[1]) + 2.0).abs() < 1e-14);
        assert!((f.eval(p[2]) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn clip_unit_square_by_line() {
        let sq: [Point<f64>; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        // x1 - 0.3 >= 0
        let f = Affine { c: -0.3, g: [1.0, 0.0] };
        let c = clip_convex(&sq, &f, 1e-12);
        assert!((polygon_area(&c) - 0.7).abs() < 1e-14);
        let none = clip_convex(&sq, &Affine { c: -2.0, g: [1.0, 0.0] }, 1e-12);
        assert!(none.is_empty());
    }

    #[test]
    fn window_clip_and_centroid() {
        let sq: [Point<f64>; 4] = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        let win = [[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0]];
        let c = clip_to_convex_window(&sq, &win, 1e-12);
        assert!((polygon_area(&c) - 1.0).abs() < 1e-14);
        let g = polygon_centroid(&c);
        assert!((g[0] - 1.5).abs() < 1e-14 && (g[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn rules_are_exact_to_their_degree() {
        let tri = [[0.1, 0.2], [1.3, 0.1], [0.4, 0.9]];
        // Reference by the degree-5 rule for a quadratic.
        let q = |p: [f64; 2]| -> Result<f64, ()> { Ok(p[0] * p[1] + p[0] * p[0] - 2.0 * p[1] + 1.0) };
        let a = EDGE_MIDPOINT.integrate(tri, q).unwrap();
        let b = DEGREE5.integrate(tri, q).unwrap();
        assert!((a - b).abs() < 1e-14);
        let cubic = |p: [f64; 2]| -> Result<f64, ()> { Ok(p[0].powi(2) * p[1].powi(3)) };
        let c5 = DEGREE5.integrate(tri, cubic).unwrap();
        // Split into 4 sub-triangles and integrate again: a degree-5 rule is exact.
        let m = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let (m01, m12, m20) = (m(tri[0], tri[1]), m(tri[1], tri[2]), m(tri[2], tri[0]));
        let subs = [
            [tri[0], m01, m20],
            [m01, tri[1], m12],
            [m20, m12, tri[2]],
            [m01, m12, m20],
        ];
        let split: f64 = subs.iter().map(|t| DEGREE5.integrate(*t, cubic).unwrap()).sum();
        assert!((c5 - split).abs() < 1e-14);
    }

    #[test]
    fn segment_distances() {
        assert_eq!(point_segment_distance([0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(
            segment_segment_distance([0.0, -1.0], [0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]),
            0.0
        );
        assert_eq!(
            segment_segment_distance([0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [1.0, 2.0]),
            2.0
        );
    }
}
