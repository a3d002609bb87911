//! Level sets of P1 fields: extraction as oriented polylines, neighbourhood
//! bands, component tracking, and the jump functional Σ.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::EvalError;
use crate::geometry::{
    clip_convex, closest_on_segment, cross, dist, gauss2_params, lerp, norm, point_segment_distance, polygon_area,
    segment_segment_distance, sub, Affine, Point,
};
use crate::mesh::{NodalField, TriMesh, NO_TRI};
use crate::real::Real;

/// One connected component of {y = t}, oriented with {y > t} on its left.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct LevelCurve<T> {
    pub closed: bool,
    pub points: Vec<Point<T>>,
    pub length: T,
    pub min_grad: T,
    /// Triangle containing segment i (points i, i+1).
    #[serde(skip)]
    pub triangles: Vec<usize>,
}

impl<T: Real> LevelCurve<T> {
    pub fn num_segments(&self) -> usize {
        self.triangles.len()
    }

    pub fn segment(&self, i: usize) -> (Point<T>, Point<T>) {
        (self.points[i], self.points[i + 1])
    }

    /// Signed area enclosed by a closed curve (positive when counterclockwise).
    pub fn signed_area(&self) -> T {
        if !self.closed {
            return T::zero();
        }
        polygon_area(&self.points[..self.points.len() - 1])
    }

    pub fn reversed(&self) -> Self {
        let mut c = self.clone();
        c.points.reverse();
        c.triangles.reverse();
        c
    }

    /// Distance from `p` to the polyline.
    pub fn distance(&self, p: Point<T>) -> T {
        (0..self.num_segments())
            .map(|i| point_segment_distance(p, self.points[i], self.points[i + 1]))
            .fold(T::infinity(), T::min)
    }

    /// Vertices and segment midpoints, used for Hausdorff estimates.
    pub fn samples(&self) -> Vec<Point<T>> {
        let mut s = Vec::with_capacity(2 * self.points.len());
        for i in 0..self.num_segments() {
            s.push(self.points[i]);
            s.push(lerp(self.points[i], self.points[i + 1], T::half()));
        }
        if let Some(&last) = self.points.last() {
            s.push(last);
        }
        s
    }

    fn bbox(&self) -> (Point<T>, Point<T>) {
        bbox_of(&self.points)
    }
}

fn bbox_of<T: Real>(pts: &[Point<T>]) -> (Point<T>, Point<T>) {
    let mut lo = [T::infinity(); 2];
    let mut hi = [T::neg_infinity(); 2];
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct LevelSetDecomposition<T> {
    pub t: T,
    pub components: Vec<LevelCurve<T>>,
}

impl<T: Real> LevelSetDecomposition<T> {
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_length(&self) -> T {
        self.components.iter().map(|c| c.length).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("level set serializes")
    }
}

/// Vertex classification with symbolic perturbation: y(v) = t counts as above.
#[inline]
fn above<T: Real>(v: T, t: T) -> bool {
    v >= t
}

fn edge_point<T: Real>(mesh: &TriMesh<T>, y: &NodalField<T>, e: [usize; 2], t: T) -> Point<T> {
    let (a, b) = (e[0], e[1]);
    let (ya, yb) = (y.values[a], y.values[b]);
    let s = ((t - ya) / (yb - ya)).max(T::zero()).min(T::one());
    lerp(mesh.vertices()[a], mesh.vertices()[b], s)
}

/// Marching triangles with chaining into maximal components.
pub fn extract_level_set<T: Real>(mesh: &TriMesh<T>, y: &NodalField<T>, t: T) -> Result<LevelSetDecomposition<T>> {
    y.check_len(mesh, "field")?;
    if !y.is_finite() || !t.is_finite() {
        return Err(Error::InvalidArgument("level set of a non-finite field".into()));
    }
    let topo = mesh.topology();
    let crossed: Vec<bool> = topo
        .edges
        .iter()
        .map(|e| above(y.values[e[0]], t) != above(y.values[e[1]], t))
        .collect();
    let mut points: HashMap<usize, Point<T>> = HashMap::new();
    let mut point_of = |e: usize| *points.entry(e).or_insert_with(|| edge_point(mesh, y, topo.edges[e], t));
    let tri_crossed = |tri: usize| -> Option<[usize; 2]> {
        let te = topo.tri_edges[tri];
        let c: Vec<usize> = te.iter().copied().filter(|&e| crossed[e]).collect();
        (c.len() == 2).then(|| [c[0], c[1]])
    };
    let other_tri = |e: usize, tri: usize| {
        let [a, b] = topo.edge_tris[e];
        if a == tri {
            b
        } else {
            a
        }
    };

    let nt = mesh.num_triangles();
    let mut visited = vec![false; nt];
    let mut raw: Vec<(Vec<Point<T>>, Vec<usize>, bool)> = Vec::new();

    // Open components start on crossed boundary edges.
    for e in 0..topo.edges.len() {
        if !crossed[e] || topo.edge_tris[e][1] != NO_TRI {
            continue;
        }
        let start = topo.edge_tris[e][0];
        if visited[start] {
            continue;
        }
        let mut pts = vec![point_of(e)];
        let mut tris = Vec::new();
        let (mut cur_t, mut cur_e) = (start, e);
        loop {
            visited[cur_t] = true;
            let Some(ce) = tri_crossed(cur_t) else { break };
            let next_e = if ce[0] == cur_e { ce[1] } else { ce[0] };
            pts.push(point_of(next_e));
            tris.push(cur_t);
            let nxt = other_tri(next_e, cur_t);
            if nxt == NO_TRI || visited[nxt] {
                break;
            }
            cur_t = nxt;
            cur_e = next_e;
        }
        raw.push((pts, tris, false));
    }
    // Remaining crossed triangles form closed loops.
    for start in 0..nt {
        if visited[start] {
            continue;
        }
        let Some(ce) = tri_crossed(start) else { continue };
        let mut pts = vec![point_of(ce[0])];
        let mut tris = Vec::new();
        let (mut cur_t, mut cur_e) = (start, ce[0]);
        let mut closed = false;
        loop {
            visited[cur_t] = true;
            let Some(c) = tri_crossed(cur_t) else { break };
            let next_e = if c[0] == cur_e { c[1] } else { c[0] };
            pts.push(point_of(next_e));
            tris.push(cur_t);
            let nxt = other_tri(next_e, cur_t);
            if nxt == start {
                closed = true;
                break;
            }
            if nxt == NO_TRI || visited[nxt] {
                break;
            }
            cur_t = nxt;
            cur_e = next_e;
        }
        raw.push((pts, tris, closed));
    }

    let mut components = Vec::new();
    for (pts, tris, closed) in raw {
        // Drop zero-length segments produced by level values at vertices.
        let mut p2 = vec![pts[0]];
        let mut t2 = Vec::new();
        for (i, &tri) in tris.iter().enumerate() {
            if pts[i + 1] != *p2.last().expect("nonempty") {
                p2.push(pts[i + 1]);
                t2.push(tri);
            }
        }
        if t2.is_empty() {
            continue;
        }
        if closed && p2[0] != *p2.last().expect("nonempty") {
            // The closing segment was degenerate; snap the end to the start.
            *p2.last_mut().expect("nonempty") = p2[0];
        }
        let length: T = (0..t2.len()).map(|i| dist(p2[i], p2[i + 1])).sum();
        let min_grad = t2
            .iter()
            .map(|&tri| norm(mesh.gradient(y, tri)))
            .fold(T::infinity(), T::min);
        let mut curve = LevelCurve {
            closed,
            points: p2,
            length,
            min_grad,
            triangles: t2,
        };
        // Orientation: cross(direction, ∇y) > 0 puts {y > t} on the left.
        let mut best = (T::zero(), T::zero());
        for i in 0..curve.num_segments() {
            let d = sub(curve.points[i + 1], curve.points[i]);
            let g = mesh.gradient(y, curve.triangles[i]);
            let c = cross(d, g);
            if c.abs() > best.0 {
                best = (c.abs(), c);
            }
        }
        if best.1 < T::zero() {
            curve = curve.reversed();
        }
        components.push(curve);
    }
    Ok(LevelSetDecomposition { t, components })
}

/// Σ over segments of the two-point Gauss rule times the segment length.
/// The callback receives the point and the triangle of the segment.
pub fn curve_integral<T: Real, F>(curve: &LevelCurve<T>, mut f: F) -> Result<T>
where
    F: FnMut(Point<T>, usize) -> std::result::Result<T, EvalError>,
{
    let g = gauss2_params::<T>();
    let mut s = T::zero();
    for i in 0..curve.num_segments() {
        let (a, b) = curve.segment(i);
        let len = dist(a, b);
        let tri = curve.triangles[i];
        let mut acc = T::zero();
        for &gp in &g {
            let v = f(lerp(a, b, gp), tri)?;
            if !v.is_finite() {
                return Err(EvalError::NonFinite.into());
            }
            acc += v;
        }
        s += acc * T::half() * len;
    }
    Ok(s)
}

/// Uniform bucket grid over polyline segments for radius queries.
#[derive(Debug, Clone)]
pub struct SegmentGrid<T> {
    segs: Vec<(Point<T>, Point<T>)>,
    origin: Point<T>,
    cell: T,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<T: Real> SegmentGrid<T> {
    pub fn new(curves: &[&LevelCurve<T>], cell: T) -> Self {
        let segs: Vec<(Point<T>, Point<T>)> = curves
            .iter()
            .flat_map(|c| (0..c.num_segments()).map(move |i| c.segment(i)))
            .collect();
        let all: Vec<Point<T>> = segs.iter().flat_map(|s| [s.0, s.1]).collect();
        let (lo, hi) = if all.is_empty() {
            ([T::zero(); 2], [T::zero(); 2])
        } else {
            bbox_of(&all)
        };
        let cell = if cell > T::zero() { cell } else { T::one() };
        let dim = |k: usize| ((hi[k] - lo[k]) / cell).floor().to_usize().unwrap_or(0).min(4096) + 1;
        let dims = [dim(0), dim(1)];
        let mut g = SegmentGrid {
            segs,
            origin: lo,
            cell,
            dims,
            buckets: vec![Vec::new(); dims[0] * dims[1]],
        };
        for (i, s) in g.segs.clone().iter().enumerate() {
            let (a, b) = (g.cell_of(s.0), g.cell_of(s.1));
            for cx in a.0.min(b.0)..=a.0.max(b.0) {
                for cy in a.1.min(b.1)..=a.1.max(b.1) {
                    g.buckets[cy * dims[0] + cx].push(i);
                }
            }
        }
        g
    }

    fn cell_of(&self, p: Point<T>) -> (usize, usize) {
        let c = |k: usize| {
            let v = ((p[k] - self.origin[k]) / self.cell).floor();
            if v <= T::zero() {
                0
            } else {
                v.to_usize().unwrap_or(usize::MAX).min(self.dims[k] - 1)
            }
        };
        (c(0), c(1))
    }

    pub fn is_empty(&self) -> bool {
        self.segs.is_empty()
    }

    /// Distance to the nearest segment if it is below `r`.
    pub fn distance_within(&self, p: Point<T>, r: T) -> Option<T> {
        if self.segs.is_empty() {
            return None;
        }
        let lo = self.cell_of([p[0] - r, p[1] - r]);
        let hi = self.cell_of([p[0] + r, p[1] + r]);
        // Points far outside the grid map to border cells; reject them early.
        let dx = (self.origin[0] - p[0]).max(p[0] - (self.origin[0] + self.cell * T::lit(self.dims[0] as f64)));
        let dy = (self.origin[1] - p[1]).max(p[1] - (self.origin[1] + self.cell * T::lit(self.dims[1] as f64)));
        if dx >= r || dy >= r {
            return None;
        }
        let mut best = T::infinity();
        for cy in lo.1..=hi.1 {
            for cx in lo.0..=hi.0 {
                for &i in &self.buckets[cy * self.dims[0] + cx] {
                    let (a, b) = self.segs[i];
                    best = best.min(point_segment_distance(p, a, b));
                }
            }
        }
        (best < r).then_some(best)
    }
}

/// Triangle bands 𝓒_ε⁻ (inside) and 𝓒_ε⁺ (outside) of one component.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct NeighborhoodClass<T> {
    pub epsilon: T,
    pub inside_band: Vec<bool>,
    pub outside_band: Vec<bool>,
}

impl<T: Real> NeighborhoodClass<T> {
    pub fn inside_count(&self) -> usize {
        self.inside_band.iter().filter(|&&b| b).count()
    }

    pub fn outside_count(&self) -> usize {
        self.outside_band.iter().filter(|&&b| b).count()
    }
}

fn curve_distance<T: Real>(a: &LevelCurve<T>, b: &LevelCurve<T>, cutoff: T) -> T {
    let (alo, ahi) = a.bbox();
    let (blo, bhi) = b.bbox();
    let gap_x = (blo[0] - ahi[0]).max(alo[0] - bhi[0]).max(T::zero());
    let gap_y = (blo[1] - ahi[1]).max(alo[1] - bhi[1]).max(T::zero());
    if (gap_x * gap_x + gap_y * gap_y).sqrt() >= cutoff {
        return cutoff;
    }
    let mut best = T::infinity();
    for i in 0..a.num_segments() {
        let (p, q) = a.segment(i);
        for j in 0..b.num_segments() {
            let (r, s) = b.segment(j);
            best = best.min(segment_segment_distance(p, q, r, s));
        }
    }
    best
}

/// Classifies triangle centroids with 0 < dist(x, 𝓒) < ε by the sign of y − t.
/// The inside band has the sign of the enclosed region ({y > t} for open curves).
pub fn classify_neighborhood<T: Real>(
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
    dec: &LevelSetDecomposition<T>,
    component_index: usize,
    epsilon: T,
) -> Result<NeighborhoodClass<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let comp = dec.components.get(component_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "component {component_index} requested, level set has {}",
            dec.components.len()
        ))
    })?;
    let required = epsilon * T::two();
    for i in 0..dec.components.len() {
        for j in (i + 1)..dec.components.len() {
            let d = curve_distance(&dec.components[i], &dec.components[j], required);
            if d < required {
                return Err(Error::NeighborhoodOverlap {
                    a: i,
                    b: j,
                    distance: d.as_f64(),
                    required: required.as_f64(),
                });
            }
        }
    }
    let inside_positive = !(comp.closed && comp.signed_area() < T::zero());
    let grid = SegmentGrid::new(&[comp], epsilon);
    let nt = mesh.num_triangles();
    let mut inside_band = vec![false; nt];
    let mut outside_band = vec![false; nt];
    for t in 0..nt {
        let c = mesh.centroid(t);
        if let Some(d) = grid.distance_within(c, epsilon) {
            if d > T::zero() {
                let v = mesh.affine(y, t).eval(c) - dec.t;
                if v == T::zero() {
                    continue;
                }
                if (v > T::zero()) == inside_positive {
                    inside_band[t] = true;
                } else {
                    outside_band[t] = true;
                }
            }
        }
    }
    Ok(NeighborhoodClass {
        epsilon,
        inside_band,
        outside_band,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct TrackingReport<T> {
    pub count_in_band: usize,
    /// Symmetric Hausdorff distance; `None` when nothing was found.
    pub hausdorff: Option<T>,
}

/// Counts the connected pieces of {y_n = t} ∩ 𝓒^ε, where 𝓒 is component
/// `component_index` of {y = t}, and measures their Hausdorff distance to 𝓒.
pub fn component_tracking<T: Real>(
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
    y_n: &NodalField<T>,
    t: T,
    component_index: usize,
    epsilon: T,
) -> Result<TrackingReport<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let dec = extract_level_set(mesh, y, t)?;
    let comp = dec.components.get(component_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "level set of the reference field has no component {component_index}"
        ))
    })?;
    let grid = SegmentGrid::new(&[comp], epsilon);
    let dec_n = extract_level_set(mesh, y_n, t)?;
    let mut count = 0usize;
    let mut runs: Vec<Vec<Point<T>>> = Vec::new();
    for c in &dec_n.components {
        let n = if c.closed { c.points.len() - 1 } else { c.points.len() };
        let inside: Vec<bool> = c.points[..n]
            .iter()
            .map(|&p| grid.distance_within(p, epsilon).is_some())
            .collect();
        let mut cur: Vec<Point<T>> = Vec::new();
        let mut comp_runs: Vec<Vec<Point<T>>> = Vec::new();
        for i in 0..n {
            if inside[i] {
                cur.push(c.points[i]);
            } else if !cur.is_empty() {
                comp_runs.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            if c.closed && inside[0] && !comp_runs.is_empty() {
                // Wrap-around run joins the first one.
                let mut first = cur;
                first.append(&mut comp_runs[0]);
                comp_runs[0] = first;
            } else {
                comp_runs.push(cur);
            }
        }
        if c.closed && comp_runs.len() == 1 && inside.iter().all(|&b| b) {
            comp_runs[0].push(c.points[0]);
        }
        count += comp_runs.len();
        runs.extend(comp_runs);
    }
    if runs.is_empty() {
        return Ok(TrackingReport {
            count_in_band: 0,
            hausdorff: None,
        });
    }
    let found: Vec<LevelCurve<T>> = runs
        .into_iter()
        .map(|pts| LevelCurve {
            closed: false,
            triangles: vec![0; pts.len().saturating_sub(1)],
            length: T::zero(),
            min_grad: T::zero(),
            points: pts,
        })
        .collect();
    let dist_to_found = |p: Point<T>| {
        found
            .iter()
            .map(|c| {
                if c.points.len() == 1 {
                    dist(p, c.points[0])
                } else {
                    c.distance(p)
                }
            })
            .fold(T::infinity(), T::min)
    };
    let mut h = T::zero();
    for p in comp.samples() {
        h = h.max(dist_to_found(p));
    }
    for c in &found {
        for p in c.samples() {
            h = h.max(comp.distance(p));
        }
    }
    Ok(TrackingReport {
        count_in_band: count,
        hausdorff: Some(h),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct JumpReport<T> {
    pub r: Vec<T>,
    pub estimates: Vec<T>,
    pub extrapolated: T,
}

impl<T: Real> JumpReport<T> {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,estimate\n");
        for (r, e) in self.r.iter().zip(&self.estimates) {
            s.push_str(&format!("{r:e},{e:e}\n"));
        }
        s
    }
}

/// σ₀ (1/r) ∫ 𝟙_{0<|y−t̄|≤r} (|∂₁y| + |∂₂y|) dx for each r, with the band
/// clipped exactly per triangle, plus the Richardson value of the last two.
pub fn jump_functional<T: Real>(
    mesh: &TriMesh<T>,
    y: &NodalField<T>,
    t_bar: T,
    sigma0: T,
    r_list: &[T],
) -> Result<JumpReport<T>> {
    y.check_len(mesh, "field")?;
    if r_list.is_empty() {
        return Err(Error::InvalidArgument("r_list is empty".into()));
    }
    if r_list.iter().any(|&r| !(r > T::zero())) || r_list.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidArgument(
            "r_list must be positive and strictly decreasing".into(),
        ));
    }
    let tol = mesh.h_max() * T::epsilon() * T::lit(16.0);
    let mut estimates = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let mut s = T::zero();
        for t in 0..mesh.num_triangles() {
            let g = mesh.gradient(y, t);
            let w = g[0].abs() + g[1].abs();
            if w == T::zero() {
                continue;
            }
            let vals = mesh.local_values(y, t);
            let lo = vals[0].min(vals[1]).min(vals[2]);
            let hi = vals[0].max(vals[1]).max(vals[2]);
            if lo > t_bar + r || hi < t_bar - r {
                continue;
            }
            let f = mesh.affine(y, t).shifted(-t_bar);
            let upper = Affine {
                c: r,
                g: [T::zero(); 2],
            }
            .combine(T::one(), &f, -T::one());
            let lower = f.shifted(r);
            let poly = clip_convex(&mesh.tri_points(t), &upper, tol);
            let poly = clip_convex(&poly, &lower, tol);
            s += w * polygon_area(&poly).abs();
        }
        estimates.push(sigma0 * s / r);
    }
    let n = estimates.len();
    let extrapolated = if n >= 2 {
        let (r1, r2) = (r_list[n - 2], r_list[n - 1]);
        let (e1, e2) = (estimates[n - 2], estimates[n - 1]);
        (r1 * e2 - r2 * e1) / (r1 - r2)
    } else {
        estimates[0]
    };
    Ok(JumpReport {
        r: r_list.to_vec(),
        estimates,
        extrapolated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct Projection<T> {
    pub foot: Point<T>,
    pub collinearity_residual: T,
    pub segment: usize,
}

/// Nearest point on the polyline and |sin| of the angle between p − foot and
/// the gradient of y on the foot's triangle.
pub fn project_to_curve<T: Real>(
    mesh: &TriMesh<T>,
    p: Point<T>,
    curve: &LevelCurve<T>,
    y: &NodalField<T>,
) -> Result<Projection<T>> {
    if curve.num_segments() == 0 {
        return Err(Error::InvalidArgument("projection onto an empty curve".into()));
    }
    let mut best = (T::infinity(), [T::zero(); 2], 0usize);
    for i in 0..curve.num_segments() {
        let (a, b) = curve.segment(i);
        let (q, _) = closest_on_segment(p, a, b);
        let d = dist(p, q);
        if d < best.0 {
            best = (d, q, i);
        }
    }
    let (d, foot, seg) = best;
    let g = mesh.gradient(y, curve.triangles[seg]);
    let gn = norm(g);
    let residual = if d == T::zero() || gn == T::zero() {
        T::zero()
    } else {
        let v = sub(p, foot);
        (cross(v, g) / (d * gn)).abs()
    };
    Ok(Projection {
        foot,
        collinearity_residual: residual,
        segment: seg,
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
    fn vertical_line_through_vertices() {
        let m = unit(0.125);
        let y = m.interpolate(|p| p[0]);
        let dec = extract_level_set(&m, &y, 0.5).unwrap();
        assert_eq!(dec.components.len(), 1);
        let c = &dec.components[0];
        assert!(!c.closed);
        assert!((c.length - 1.0).abs() < 1e-14);
        // {y > t} lies on the left: the curve runs downward.
        assert!(c.points[0][1] > c.points[c.points.len() - 1][1]);
        for p in &c.points {
            assert!((p[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn vertical_line_between_vertices() {
        let m = unit(0.125);
        let y = m.interpolate(|p| p[0]);
        let dec = extract_level_set(&m, &y, 0.3).unwrap();
        assert_eq!(dec.components.len(), 1);
        assert!((dec.components[0].length - 1.0).abs() < 1e-13);
        for (i, &tri) in dec.components[0].triangles.iter().enumerate() {
            let (a, b) = dec.components[0].segment(i);
            let aff = m.affine(&y, tri);
            assert!((aff.eval(a) - 0.3).abs() < 1e-12 && (aff.eval(b) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_outside_range() {
        let m = unit(0.25);
        let y = m.interpolate(|p| p[0]);
        assert!(extract_level_set(&m, &y, 2.0).unwrap().is_empty());
        assert!(extract_level_set(&m, &y, -0.5).unwrap().is_empty());
    }

    #[test]
    fn closed_component_is_counterclockwise_around_maximum() {
        let m: TriMesh<f64> = structured_rectangle(-1.0, -1.0, 1.0, 1.0, 32, 32).unwrap();
        let y = m.interpolate(|p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]));
        let dec = extract_level_set(&m, &y, 0.5).unwrap();
        assert_eq!(dec.components.len(), 1);
        let c = &dec.components[0];
        assert!(c.closed);
        assert_eq!(c.points[0], *c.points.last().unwrap());
        assert!(c.signed_area() > 0.0);
        let len = curve_integral(c, |_, _| Ok(1.0)).unwrap();
        assert!((len - c.length).abs() < 1e-13);
        let three = curve_integral(c, |_, _| Ok(3.0)).unwrap();
        assert!((three - 3.0 * c.length).abs() < 1e-12);
    }

    #[test]
    fn bands_for_a_line() {
        let m = unit(1.0 / 32.0);
        let y = m.interpolate(|p| p[0]);
        let dec = extract_level_set(&m, &y, 0.5).unwrap();
        let nb = classify_neighborhood(&m, &y, &dec, 0, 0.1).unwrap();
        for t in 0..m.num_triangles() {
            let c = m.centroid(t);
            let d = (c[0] - 0.5).abs();
            assert_eq!(nb.inside_band[t] || nb.outside_band[t], d < 0.1 && d > 0.0);
            assert!(!(nb.inside_band[t] && nb.outside_band[t]));
            if nb.inside_band[t] {
                assert!(c[0] > 0.5);
            }
        }
        let tiny = classify_neighborhood(&m, &y, &dec, 0, 1e-6).unwrap();
        assert_eq!(tiny.inside_count() + tiny.outside_count(), 0);
    }

    #[test]
    fn nested_circles_overlap() {
        let m: TriMesh<f64> = structured_rectangle(-1.0, -1.0, 1.0, 1.0, 64, 64).unwrap();
        // |x| has level 0.5 on one circle; the cosine profile gives two.
        let y = m.interpolate(|p| (std::f64::consts::PI * (p[0] * p[0] + p[1] * p[1]).sqrt() * 4.0).cos());
        let dec = extract_level_set(&m, &y, 0.0).unwrap();
        let closed: Vec<_> = dec.components.iter().filter(|c| c.closed).collect();
        assert!(closed.len() >= 2);
        // Circles of radius 1/8 and 3/8: distance 1/4.
        let e = classify_neighborhood(&m, &y, &dec, 0, 0.25).unwrap_err();
        assert!(matches!(e, Error::NeighborhoodOverlap { .. }));
        assert!(classify_neighborhood(&m, &y, &dec, 0, 0.05).is_ok());
    }

    #[test]
    fn tracking_examples() {
        let m: TriMesh<f64> = structured_rectangle(-1.0, -1.0, 1.0, 1.0, 32, 32).unwrap();
        let y = m.interpolate(|p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]));
        let same = component_tracking(&m, &y, &y, 0.5, 0, 0.1).unwrap();
        assert_eq!(same.count_in_band, 1);
        assert!(same.hausdorff.unwrap() < 1e-15);
        let shifted = component_tracking(&m, &y, &y.map(|v| v + 1e-3), 0.5, 0, 0.1).unwrap();
        assert_eq!(shifted.count_in_band, 1);
        assert!(shifted.hausdorff.unwrap() < 0.01);
        let gone = component_tracking(&m, &y, &y.map(|v| v + 10.0), 0.5, 0, 0.1).unwrap();
        assert_eq!(gone.count_in_band, 0);
        assert_eq!(gone.hausdorff, None);
    }

    #[test]
    fn jump_functional_linear_field() {
        for h in [0.25, 0.125] {
            let m = unit(h);
            let y = m.interpolate(|p| p[0]);
            let rep = jump_functional(&m, &y, 0.5, 2.0, &[0.5, 0.3, 0.1, 0.01]).unwrap();
            for e in &rep.estimates {
                assert!((e - 4.0).abs() < 1e-12, "{rep:?}");
            }
            assert!((rep.extrapolated - 4.0).abs() < 1e-10);
        }
        let m = unit(0.25);
        let c = NodalField::constant(m.num_vertices(), 0.2);
        assert_eq!(
            jump_functional(&m, &c, 0.5, 2.0, &[0.1, 0.05]).unwrap().extrapolated,
            0.0
        );
        assert!(jump_functional(&m, &c, 0.5, 2.0, &[0.1, 0.2]).is_err());
        assert!(rep_csv_has_header(&jump_functional(&m, &c, 0.5, 2.0, &[0.1]).unwrap()));
    }

    fn rep_csv_has_header(r: &JumpReport<f64>) -> bool {
        let csv = r.to_csv();
        csv.starts_with("r,estimate\n") && csv.lines().count() == r.r.len() + 1
    }

    #[test]
    fn projection_examples() {
        let m = unit(0.125);
        let y = m.interpolate(|p| p[0]);
        let dec = extract_level_set(&m, &y, 0.5).unwrap();
        let c = &dec.components[0];
        let pr = project_to_curve(&m, [0.7, 0.3], c, &y).unwrap();
        assert!((pr.foot[0] - 0.5).abs() < 1e-15 && (pr.foot[1] - 0.3).abs() < 1e-15);
        assert!(pr.collinearity_residual < 1e-14);
        let on = project_to_curve(&m, [0.5, 0.6], c, &y).unwrap();
        assert_eq!(on.collinearity_residual, 0.0);
    }

    #[test]
    fn json_export_shape() {
        let m = unit(0.5);
        let y = m.interpolate(|p| p[0]);
        let js: serde_json::Value = serde_json::from_str(&extract_level_set(&m, &y, 0.3).unwrap().to_json()).unwrap();
        assert_eq!(js["t"], 0.3);
        let c = &js["components"][0];
        assert!(
            c["closed"].is_boolean() && c["points"].is_array() && c["length"].is_number() && c["min_grad"].is_number()
        );
    }
}
