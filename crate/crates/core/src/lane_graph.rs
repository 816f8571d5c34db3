//! Directed lane graphs whose vertices are quadratic Bezier centerlines.
//!
//! Planar points are `(x, z)` in meters: `x` lateral (right positive), `z`
//! forward, in whatever ego or global frame the caller is working in.

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

pub type Point = Point2<f64>;

/// Default number of samples per centerline.
pub const DEFAULT_POLYLINE_POINTS: usize = 100;

/// Default distance under which an end point and a start point are treated
/// as the same junction.
pub const DEFAULT_CONNECT_TOL: f64 = 0.5;

/// A lane centerline as a quadratic Bezier curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezierCenterline {
    pub control_points: [Point; 3],
}

/// Axis-aligned planar window, `x` and `z` ranges in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Window {
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.z_min && p.y <= self.z_max
    }
}

impl BezierCenterline {
    pub fn new(p0: Point, p1: Point, p2: Point) -> Self {
        Self {
            control_points: [p0, p1, p2],
        }
    }

    pub fn from_arrays(cp: [[f64; 2]; 3]) -> Self {
        Self::new(
            Point::new(cp[0][0], cp[0][1]),
            Point::new(cp[1][0], cp[1][1]),
            Point::new(cp[2][0], cp[2][1]),
        )
    }

    /// Straight centerline with the middle control point at the midpoint.
    pub fn straight(start: Point, end: Point) -> Self {
        Self::new(start, nalgebra::center(&start, &end), end)
    }

    pub fn to_arrays(&self) -> [[f64; 2]; 3] {
        self.control_points.map(|p| [p.x, p.y])
    }

    pub fn start(&self) -> Point {
        self.control_points[0]
    }

    pub fn end(&self) -> Point {
        self.control_points[2]
    }

    pub fn is_finite(&self) -> bool {
        self.control_points
            .iter()
            .all(|p| p.x.is_finite() && p.y.is_finite())
    }

    /// `(1-t)² P0 + 2t(1-t) P1 + t² P2`. Rejects `t` outside `[0, 1]`.
    pub fn eval(&self, t: f64) -> Result<Point> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::param("t", format!("{t} is outside [0, 1]")));
        }
        Ok(self.eval_unchecked(t))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, t: f64) -> Point {
        let [p0, p1, p2] = self.control_points;
        let s = 1.0 - t;
        Point::from(s * s * p0.coords + 2.0 * t * s * p1.coords + t * t * p2.coords)
    }

    /// Samples `count` points at `t = k / (count - 1)`.
    pub fn interpolate(&self, count: usize) -> Result<Polyline> {
        if count < 2 {
            return Err(Error::param("count", format!("{count} < 2")));
        }
        let last = (count - 1) as f64;
        let mut points: Vec<Point> = (0..count)
            .map(|k| self.eval_unchecked(k as f64 / last))
            .collect();
        // Endpoints are exact, not rounded through the blend.
        points[0] = self.start();
        points[count - 1] = self.end();
        Ok(Polyline { points })
    }

    /// Unit vector from the first to the last control point.
    pub fn direction(&self) -> Result<Vector2<f64>> {
        let d = self.end() - self.start();
        let n = d.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateCenterline);
        }
        Ok(d / n)
    }

    /// The sub-curve on parameter range `[t0, t1]`, itself a quadratic Bezier.
    pub fn segment(&self, t0: f64, t1: f64) -> BezierCenterline {
        let [p0, p1, p2] = self.control_points.map(|p| p.coords);
        // Blossom of the quadratic: B(a, b).
        let blossom = |a: f64, b: f64| {
            (1.0 - a) * (1.0 - b) * p0 + ((1.0 - a) * b + a * (1.0 - b)) * p1 + a * b * p2
        };
        BezierCenterline::new(
            Point::from(blossom(t0, t0)),
            Point::from(blossom(t0, t1)),
            Point::from(blossom(t1, t1)),
        )
    }

    /// Pieces of the curve lying inside `window`, in parameter order.
    ///
    /// Pieces shorter than `min_length` meters are discarded.
    pub fn clip(&self, window: &Window, min_length: f64) -> Vec<BezierCenterline> {
        let [p0, p1, p2] = self.control_points;
        let mut cuts = vec![0.0, 1.0];
        let axes: [(fn(&Point) -> f64, f64); 4] = [
            (|p| p.x, window.x_min),
            (|p| p.x, window.x_max),
            (|p| p.y, window.z_min),
            (|p| p.y, window.z_max),
        ];
        for (coord, level) in axes {
            for t in quadratic_level_crossings(coord(&p0), coord(&p1), coord(&p2), level) {
                if t > 0.0 && t < 1.0 {
                    cuts.push(t);
                }
            }
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let mut pieces: Vec<(f64, f64)> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = self.eval_unchecked(0.5 * (a + b));
            if !window.contains(&mid) {
                continue;
            }
            match pieces.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => pieces.push((a, b)),
            }
        }
        pieces
            .into_iter()
            .map(|(a, b)| if a == 0.0 && b == 1.0 { *self } else { self.segment(a, b) })
            .filter(|c| c.approx_length() >= min_length)
            .collect()
    }

    /// Arc length estimated from a 32-segment chord sum.
    pub fn approx_length(&self) -> f64 {
        let n = 32;
        (0..n)
            .map(|k| {
                let a = self.eval_unchecked(k as f64 / n as f64);
                let b = self.eval_unchecked((k + 1) as f64 / n as f64);
                (b - a).norm()
            })
            .sum()
    }

    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> BezierCenterline {
        BezierCenterline {
            control_points: self.control_points.map(|p| f(&p)),
        }
    }
}

/// Parameters `t` where the 1-D quadratic Bezier `(a, b, c)` equals `level`.
fn quadratic_level_crossings(a: f64, b: f64, c: f64, level: f64) -> Vec<f64> {
    // (a - 2b + c) t² + 2(b - a) t + (a - level) = 0
    let qa = a - 2.0 * b + c;
    let qb = 2.0 * (b - a);
    let qc = a - level;
    let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
    if qa.abs() <= 1e-12 * scale {
        if qb.abs() <= 1e-15 * scale {
            return vec![];
        }
        return vec![-qc / qb];
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // Numerically stable root pair.
    let q = -0.5 * (qb + qb.signum() * sq);
    let mut roots = vec![];
    if q != 0.0 {
        roots.push(qc / q);
    }
    roots.push(q / qa);
    roots
}

/// Densely sampled centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point>,
}

impl Polyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Minimum distance from `p` to any sample of this polyline.
    pub fn min_distance_to(&self, p: &Point) -> f64 {
        self.points
            .iter()
            .map(|q| (q - p).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// A structural problem found by [`LaneGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    IncidenceShape {
        rows: usize,
        expected: usize,
    },
    RaggedIncidenceRow {
        row: usize,
        len: usize,
    },
    SelfLoop(usize),
    NonFiniteControlPoint(usize),
    /// An edge whose endpoints are further apart than the connect tolerance.
    DisconnectedEdge {
        from: usize,
        to: usize,
        gap: f64,
    },
}

/// Directed graph of centerlines with a dense incidence matrix.
///
/// `incidence[x][y]` is true when the end of centerline `x` feeds the start
/// of centerline `y`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaneGraph {
    pub centerlines: Vec<BezierCenterline>,
    pub incidence: Vec<Vec<bool>>,
}

impl LaneGraph {
    /// Graph with geometric incidence computed from the curves.
    pub fn from_centerlines(centerlines: Vec<BezierCenterline>, connect_tol: f64) -> Self {
        let incidence = build_incidence(&centerlines, connect_tol);
        Self {
            centerlines,
            incidence,
        }
    }

    pub fn without_edges(centerlines: Vec<BezierCenterline>) -> Self {
        let n = centerlines.len();
        Self {
            centerlines,
            incidence: vec![vec![false; n]; n],
        }
    }

    pub fn from_edges(centerlines: Vec<BezierCenterline>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::without_edges(centerlines);
        let n = g.len();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::param(
                    "edges",
                    format!("edge ({a}, {b}) out of range for {n} centerlines"),
                ));
            }
            g.incidence[a][b] = true;
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.centerlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centerlines.is_empty()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, row) in self.incidence.iter().enumerate() {
            for (b, &on) in row.iter().enumerate() {
                if on {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.incidence.iter().flatten().filter(|&&b| b).count()
    }

    pub fn polylines(&self, count: usize) -> Result<Vec<Polyline>> {
        self.centerlines.iter().map(|c| c.interpolate(count)).collect()
    }

    /// Lists every broken invariant; an empty list means the graph is valid.
    pub fn validate(&self, connect_tol: f64) -> Vec<Violation> {
        let n = self.centerlines.len();
        let mut out = Vec::new();
        for (i, c) in self.centerlines.iter().enumerate() {
            if !c.is_finite() {
                out.push(Violation::NonFiniteControlPoint(i));
            }
        }
        if self.incidence.len() != n {
            out.push(Violation::IncidenceShape {
                rows: self.incidence.len(),
                expected: n,
            });
        }
        for (x, row) in self.incidence.iter().enumerate() {
            if row.len() != n {
                out.push(Violation::RaggedIncidenceRow {
                    row: x,
                    len: row.len(),
                });
            }
            for (y, &on) in row.iter().enumerate() {
                if !on {
                    continue;
                }
                if x == y {
                    out.push(Violation::SelfLoop(x));
                } else if x < n && y < n {
                    let gap = (self.centerlines[x].end() - self.centerlines[y].start()).norm();
                    if !(gap <= connect_tol) {
                        out.push(Violation::DisconnectedEdge { from: x, to: y, gap });
                    }
                }
            }
        }
        out
    }

    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> LaneGraph {
        LaneGraph {
            centerlines: self.centerlines.iter().map(|c| c.map_points(&f)).collect(),
            incidence: self.incidence.clone(),
        }
    }

    /// Clips every centerline to `window`. Curves that leave and re-enter
    /// produce several vertices; edges are rebuilt geometrically.
    pub fn clip(&self, window: &Window, min_length: f64, connect_tol: f64) -> LaneGraph {
        let pieces = self
            .centerlines
            .iter()
            .flat_map(|c| c.clip(window, min_length))
            .collect();
        LaneGraph::from_centerlines(pieces, connect_tol)
    }
}

/// `A[x][y]` is true iff `x != y` and the end of `x` is within `connect_tol`
/// of the start of `y`.
pub fn build_incidence(centerlines: &[BezierCenterline], connect_tol: f64) -> Vec<Vec<bool>> {
    let n = centerlines.len();
    let mut a = vec![vec![false; n]; n];
    for (x, cx) in centerlines.iter().enumerate() {
        for (y, cy) in centerlines.iter().enumerate() {
            if x != y && (cx.end() - cy.start()).norm() <= connect_tol {
                a[x][y] = true;
            }
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, z: f64) -> Point {
        Point::new(x, z)
    }

    fn arch() -> BezierCenterline {
        BezierCenterline::new(p(0.0, 0.0), p(1.0, 1.0), p(2.0, 0.0))
    }

    /// Recursive de Casteljau evaluation, independent of the closed form.
    fn de_casteljau(points: &[Point], t: f64) -> Point {
        if points.len() == 1 {
            return points[0];
        }
        let next: Vec<Point> = points
            .windows(2)
            .map(|w| Point::from(w[0].coords * (1.0 - t) + w[1].coords * t))
            .collect();
        de_casteljau(&next, t)
    }

    #[test]
    fn eval_examples() {
        let c = arch();
        assert_eq!(c.eval(0.0).unwrap(), p(0.0, 0.0));
        assert_eq!(c.eval(1.0).unwrap(), p(2.0, 0.0));
        assert_eq!(c.eval(0.5).unwrap(), p(1.0, 0.5));
        assert!(c.eval(1.01).is_err());
        assert!(c.eval(-0.1).is_err());
        assert!(c.eval(f64::NAN).is_err());

        let line = BezierCenterline::new(p(0.0, 0.0), p(3.0, 6.0), p(1.0, 2.0));
        for k in 0..=10 {
            let q = line.eval(k as f64 / 10.0).unwrap();
            assert!((q.y - 2.0 * q.x).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolate_examples() {
        let c = arch();
        let two = c.interpolate(2).unwrap();
        assert_eq!(two.points, vec![p(0.0, 0.0), p(2.0, 0.0)]);
        let three = c.interpolate(3).unwrap();
        assert_eq!(three.points, vec![p(0.0, 0.0), p(1.0, 0.5), p(2.0, 0.0)]);
        let hundred = c.interpolate(100).unwrap();
        assert_eq!(hundred.len(), 100);
        assert_eq!(hundred.points[0], c.start());
        assert_eq!(hundred.points[99], c.end());
        assert!(c.interpolate(1).is_err());
    }

    #[test]
    fn direction_examples() {
        let a = BezierCenterline::straight(p(0.0, 0.0), p(10.0, 0.0));
        assert_eq!(a.direction().unwrap(), Vector2::new(1.0, 0.0));
        let b = BezierCenterline::straight(p(1.0, 1.0), p(1.0, 5.0));
        assert_eq!(b.direction().unwrap(), Vector2::new(0.0, 1.0));
        let loopy = BezierCenterline::new(p(1.0, 1.0), p(3.0, 3.0), p(1.0, 1.0));
        assert_eq!(loopy.direction(), Err(Error::DegenerateCenterline));
    }

    #[test]
    fn incidence_examples() {
        let x = BezierCenterline::straight(p(0.0, 0.0), p(5.0, 0.0));
        let y = BezierCenterline::straight(p(5.0, 0.0), p(9.0, 0.0));
        let a = build_incidence(&[x, y], 0.5);
        assert_eq!(a, vec![vec![false, true], vec![false, false]]);

        let far = BezierCenterline::straight(p(0.0, 10.0), p(5.0, 10.0));
        let other = BezierCenterline::straight(p(0.0, 20.0), p(5.0, 20.0));
        let a = build_incidence(&[far, other], 0.5);
        assert!(a.iter().flatten().all(|&b| !b));

        let near = BezierCenterline::straight(p(5.4, 0.0), p(9.0, 0.0));
        let gap = BezierCenterline::straight(p(5.6, 0.0), p(9.0, 0.0));
        assert!(build_incidence(&[x, near], 0.5)[0][1]);
        assert!(!build_incidence(&[x, gap], 0.5)[0][1]);
    }

    #[test]
    fn validate_examples() {
        let x = BezierCenterline::straight(p(0.0, 0.0), p(5.0, 0.0));
        let y = BezierCenterline::straight(p(5.0, 0.0), p(9.0, 0.0));
        let g = LaneGraph::from_centerlines(vec![x, y], 0.5);
        assert_eq!(g.edges(), vec![(0, 1)]);
        assert!(g.validate(0.5).is_empty());

        let mut bad = g.clone();
        bad.incidence.pop();
        assert!(bad
            .validate(0.5)
            .iter()
            .any(|v| matches!(v, Violation::IncidenceShape { rows: 1, expected: 2 })));

        let mut looped = g.clone();
        looped.incidence[0][0] = true;
        assert!(looped.validate(0.5).contains(&Violation::SelfLoop(0)));

        let mut wrong = g;
        wrong.incidence[1][0] = true;
        assert!(matches!(
            wrong.validate(0.5)[0],
            Violation::DisconnectedEdge { from: 1, to: 0, .. }
        ));
    }

    #[test]
    fn segment_matches_reparameterised_curve() {
        let c = BezierCenterline::new(p(0.0, 0.0), p(4.0, 9.0), p(10.0, 2.0));
        let s = c.segment(0.2, 0.7);
        for k in 0..=10 {
            let u = k as f64 / 10.0;
            let expect = c.eval(0.2 + 0.5 * u).unwrap();
            assert!((s.eval(u).unwrap() - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn clip_to_window() {
        let w = Window {
            x_min: -5.0,
            x_max: 5.0,
            z_min: 0.0,
            z_max: 20.0,
        };
        let c = BezierCenterline::straight(p(0.0, -10.0), p(0.0, 30.0));
        let pieces = c.clip(&w, 0.0);
        assert_eq!(pieces.len(), 1);
        assert!((pieces[0].start() - p(0.0, 0.0)).norm() < 1e-12);
        assert!((pieces[0].end() - p(0.0, 20.0)).norm() < 1e-12);

        // Arch that exits through the top and comes back.
        let arch = BezierCenterline::new(p(-4.0, 10.0), p(0.0, 40.0), p(4.0, 10.0));
        let pieces = arch.clip(&w, 0.0);
        assert_eq!(pieces.len(), 2);
        for piece in &pieces {
            for q in piece.interpolate(20).unwrap().points {
                assert!(q.y <= 20.0 + 1e-9);
            }
        }

        let outside = BezierCenterline::straight(p(10.0, 0.0), p(10.0, 10.0));
        assert!(outside.clip(&w, 0.0).is_empty());
        let inside = BezierCenterline::straight(p(0.0, 1.0), p(1.0, 10.0));
        assert_eq!(inside.clip(&w, 0.0), vec![inside]);
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        (-50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, z)| Point::new(x, z))
    }

    fn arb_curve() -> impl Strategy<Value = BezierCenterline> {
        (arb_point(), arb_point(), arb_point()).prop_map(|(a, b, c)| BezierCenterline::new(a, b, c))
    }

    proptest! {
        #[test]
        fn eval_agrees_with_de_casteljau(c in arb_curve(), t in 0.0f64..=1.0) {
            let a = c.eval(t).unwrap();
            let b = de_casteljau(&c.control_points, t);
            prop_assert!((a - b).norm() <= 1e-9);
        }

        #[test]
        fn eval_stays_in_convex_hull(c in arb_curve(), t in 0.0f64..=1.0) {
            // Barycentric weights of the closed form are non-negative and sum
            // to one; check the point against the triangle's half-planes.
            let q = c.eval(t).unwrap();
            let [a, b, d] = c.control_points;
            let cross = |o: Point, u: Point, v: Point| (u - o).perp(&(v - o));
            let area = cross(a, b, d);
            let tol = 1e-7 * (1.0 + area.abs());
            if area.abs() > 1e-6 {
                let s = area.signum();
                prop_assert!(s * cross(a, b, q) >= -tol);
                prop_assert!(s * cross(b, d, q) >= -tol);
                prop_assert!(s * cross(d, a, q) >= -tol);
            }
            let min_x = a.x.min(b.x).min(d.x) - 1e-9;
            let max_x = a.x.max(b.x).max(d.x) + 1e-9;
            prop_assert!(q.x >= min_x && q.x <= max_x);
        }

        #[test]
        fn interpolate_endpoints_exact(c in arb_curve(), n in 2usize..200) {
            let poly = c.interpolate(n).unwrap();
            prop_assert_eq!(poly.points[0], c.start());
            prop_assert_eq!(poly.points[n - 1], c.end());
        }

        #[test]
        fn incidence_translation_invariant(
            starts in proptest::collection::vec((arb_point(), arb_point()), 1..8),
            shift in (-100.0f64..100.0, -100.0f64..100.0),
        ) {
            let mut curves: Vec<BezierCenterline> =
                starts.iter().map(|(a, b)| BezierCenterline::straight(*a, *b)).collect();
            // Chain a few to make edges likely.
            for i in 1..curves.len() {
                if i % 2 == 1 {
                    let prev_end = curves[i - 1].end();
                    curves[i] = BezierCenterline::straight(prev_end, curves[i].end());
                }
            }
            // Translate by a dyadic offset so the shift is exact in floating point.
            let d = nalgebra::Vector2::new((shift.0 * 4.0).round() / 4.0, (shift.1 * 4.0).round() / 4.0);
            let moved: Vec<_> = curves.iter().map(|c| c.map_points(|p| p + d)).collect();
            let a = build_incidence(&curves, 0.5);
            let b = build_incidence(&moved, 0.5);
            for x in 0..a.len() {
                for y in 0..a.len() {
                    if a[x][y] != b[x][y] {
                        // Only tolerated for gaps sitting on the threshold itself.
                        let gap = (curves[x].end() - curves[y].start()).norm();
                        prop_assert!((gap - 0.5).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
