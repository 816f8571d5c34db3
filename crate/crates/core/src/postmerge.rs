//! Temporal post-processing: merge per-frame lane-graph estimates into the
//! reference frame's estimate.
//!
//! Every estimate handed to [`match_and_update`] or [`post_merge`] must
//! already be expressed in the reference frame's ego coordinates (see
//! [`FrameEstimate::transformed`]).

use nalgebra::Vector2;

use crate::camera::{transform_ground_point, RigidTransform};
use crate::error::{Error, Result};
use crate::lane_graph::{
    build_incidence, BezierCenterline, LaneGraph, Polyline, Window, DEFAULT_POLYLINE_POINTS,
};

/// One frame's detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub control_points: Vec<BezierCenterline>,
    pub probabilities: Vec<f64>,
    /// `Q × Q` connectivity scores in `[0, 1]`.
    pub connectivity: Vec<Vec<f64>>,
    pub polylines: Vec<Polyline>,
    /// Frame offset relative to the reference frame.
    pub relative_time: i32,
}

impl FrameEstimate {
    /// Builds an estimate, sampling each centerline at `points` locations.
    pub fn new(
        control_points: Vec<BezierCenterline>,
        probabilities: Vec<f64>,
        connectivity: Vec<Vec<f64>>,
        relative_time: i32,
        points: usize,
    ) -> Result<Self> {
        let polylines = control_points
            .iter()
            .map(|c| c.interpolate(points))
            .collect::<Result<Vec<_>>>()?;
        let e = Self {
            control_points,
            probabilities,
            connectivity,
            polylines,
            relative_time,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn empty(relative_time: i32) -> Self {
        Self {
            control_points: vec![],
            probabilities: vec![],
            connectivity: vec![],
            polylines: vec![],
            relative_time,
        }
    }

    pub fn len(&self) -> usize {
        self.control_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_points.is_empty()
    }

    /// Checks that all per-query arrays agree on `Q` and value ranges.
    pub fn validate(&self) -> Result<()> {
        let q = self.control_points.len();
        if self.probabilities.len() != q {
            return Err(Error::shape("probabilities", q, self.probabilities.len()));
        }
        if self.polylines.len() != q {
            return Err(Error::shape("polylines", q, self.polylines.len()));
        }
        if self.connectivity.len() != q {
            return Err(Error::shape("connectivity rows", q, self.connectivity.len()));
        }
        for (i, row) in self.connectivity.iter().enumerate() {
            if row.len() != q {
                return Err(Error::shape("connectivity row", q, format!("{} (row {i})", row.len())));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param("connectivity", format!("row {i} has values outside [0, 1]")));
            }
        }
        if let Some(i) = self.probabilities.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param("probabilities", format!("entry {i} outside [0, 1]")));
        }
        if let Some(i) = self.control_points.iter().position(|c| !c.is_finite()) {
            return Err(Error::param("control_points", format!("entry {i} is not finite")));
        }
        if let Some(i) = self.polylines.iter().position(|p| p.len() < 2) {
            return Err(Error::param("polylines", format!("entry {i} has fewer than 2 points")));
        }
        Ok(())
    }

    /// Rows `keep` (in the given order) of every per-query array.
    pub fn select(&self, keep: &[usize]) -> FrameEstimate {
        FrameEstimate {
            control_points: keep.iter().map(|&i| self.control_points[i]).collect(),
            probabilities: keep.iter().map(|&i| self.probabilities[i]).collect(),
            connectivity: keep
                .iter()
                .map(|&i| keep.iter().map(|&j| self.connectivity[i][j]).collect())
                .collect(),
            polylines: keep.iter().map(|&i| self.polylines[i].clone()).collect(),
            relative_time: self.relative_time,
        }
    }

    /// Applies a rigid motion of the ground plane to all geometry. Bezier
    /// curves are affine-invariant, so mapping control points maps the curve.
    pub fn transformed(&self, t: &RigidTransform) -> FrameEstimate {
        let map = |p: &crate::lane_graph::Point| transform_ground_point(t, p);
        FrameEstimate {
            control_points: self.control_points.iter().map(|c| c.map_points(map)).collect(),
            polylines: self
                .polylines
                .iter()
                .map(|pl| Polyline {
                    points: pl.points.iter().map(map).collect(),
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Clips every centerline to `window`, dropping ones that fall outside or
    /// are shorter than `min_length`. A curve split into several pieces keeps
    /// its incoming connectivity on the first piece and its outgoing
    /// connectivity on the last.
    pub fn clipped(&self, window: &Window, min_length: f64) -> FrameEstimate {
        let points = self.polylines.first().map_or(DEFAULT_POLYLINE_POINTS, |p| p.len());
        // (source row, piece, is_first, is_last)
        let mut rows: Vec<(usize, BezierCenterline, bool, bool)> = Vec::new();
        for (i, c) in self.control_points.iter().enumerate() {
            let pieces = c.clip(window, min_length);
            let n = pieces.len();
            for (k, piece) in pieces.into_iter().enumerate() {
                rows.push((i, piece, k == 0, k + 1 == n));
            }
        }
        let connectivity = rows
            .iter()
            .map(|&(a, _, _, a_last)| {
                rows.iter()
                    .map(|&(b, _, b_first, _)| {
                        if a_last && b_first && a != b {
                            self.connectivity[a][b]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        FrameEstimate {
            probabilities: rows.iter().map(|r| self.probabilities[r.0]).collect(),
            polylines: rows
                .iter()
                .map(|r| r.1.interpolate(points).expect("points >= 2"))
                .collect(),
            control_points: rows.iter().map(|r| r.1).collect(),
            connectivity,
            relative_time: self.relative_time,
        }
    }
}

/// Matching thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeParams {
    pub prob_thresh: f64,
    /// Minimum dot product between unit direction vectors.
    pub dir_thresh: f64,
    /// Meters.
    pub dist_thresh: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            prob_thresh: 0.5,
            dir_thresh: 0.5,
            dist_thresh: 2.0,
        }
    }
}

impl MergeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prob_thresh) {
            return Err(Error::param("prob_thresh", format!("{} outside [0, 1]", self.prob_thresh)));
        }
        if !(-1.0..=1.0).contains(&self.dir_thresh) {
            return Err(Error::param("dir_thresh", format!("{} outside [-1, 1]", self.dir_thresh)));
        }
        if !(self.dist_thresh > 0.0 && self.dist_thresh.is_finite()) {
            return Err(Error::param("dist_thresh", format!("{} must be > 0", self.dist_thresh)));
        }
        Ok(())
    }
}

/// Keeps the queries whose probability is at least `prob_thresh`.
pub fn filter_by_probability(e: &FrameEstimate, prob_thresh: f64) -> FrameEstimate {
    let keep: Vec<usize> = (0..e.len())
        .filter(|&i| e.probabilities[i] >= prob_thresh)
        .collect();
    e.select(&keep)
}

/// Which reference endpoint survived an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeptEndpoint {
    /// Reference start kept; candidate supplied middle and end.
    Start,
    /// Reference end kept; candidate supplied start and middle.
    End,
}

/// Record of one accepted match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeUpdate {
    pub reference: usize,
    /// Index into the concatenation of the other frames' centerlines.
    pub candidate: usize,
    pub kept: KeptEndpoint,
    /// Minimum distance from the reference's first point to the candidate.
    pub start_gap: f64,
    /// Minimum distance from the reference's last point to the candidate.
    pub end_gap: f64,
}

/// Unit start-to-end direction, or zero for a degenerate curve.
fn direction_or_zero(c: &BezierCenterline) -> Vector2<f64> {
    c.direction().unwrap_or_else(|_| Vector2::zeros())
}

/// Matches every reference centerline against the other frames' centerlines
/// and splices control points from each accepted candidate.
///
/// Candidates are scanned in frame order, then index order. Directions are
/// taken from the estimates as passed in; the reference polyline is
/// re-sampled after each accepted update so later candidates see the
/// merged curve.
pub fn match_and_update(
    reference: &FrameEstimate,
    others: &[FrameEstimate],
    params: &MergeParams,
) -> (FrameEstimate, Vec<MergeUpdate>) {
    let mut merged = reference.clone();
    let mut log = Vec::new();

    let ref_dirs: Vec<Vector2<f64>> = reference.control_points.iter().map(direction_or_zero).collect();
    let cand_curves: Vec<&BezierCenterline> = others.iter().flat_map(|o| &o.control_points).collect();
    let cand_polys: Vec<&Polyline> = others.iter().flat_map(|o| &o.polylines).collect();
    let cand_dirs: Vec<Vector2<f64>> = cand_curves.iter().map(|c| direction_or_zero(c)).collect();

    for i in 0..merged.len() {
        let points = merged.polylines[i].len();
        for j in 0..cand_curves.len() {
            if ref_dirs[i].dot(&cand_dirs[j]) <= params.dir_thresh {
                continue;
            }
            let current = &merged.polylines[i];
            let candidate = cand_polys[j];
            let hits = current
                .points
                .iter()
                .filter(|p| candidate.points.iter().any(|q| (*p - q).norm() < params.dist_thresh))
                .count();
            if (hits as f64) <= 0.5 * points as f64 {
                continue;
            }
            let start_gap = candidate.min_distance_to(&current.points[0]);
            let end_gap = candidate.min_distance_to(&current.points[points - 1]);
            let r = merged.control_points[i].control_points;
            let o = cand_curves[j].control_points;
            let (updated, kept) = if start_gap >= end_gap {
                (BezierCenterline::new(r[0], o[1], o[2]), KeptEndpoint::Start)
            } else {
                (BezierCenterline::new(o[0], o[1], r[2]), KeptEndpoint::End)
            };
            merged.control_points[i] = updated;
            merged.polylines[i] = updated.interpolate(points).expect("points >= 2");
            log.push(MergeUpdate {
                reference: i,
                candidate: j,
                kept,
                start_gap,
                end_gap,
            });
        }
    }
    (merged, log)
}

/// Connectivity scores at or above this value count as edges.
pub const CONNECTIVITY_THRESH: f64 = 0.5;

/// Full temporal post-processing.
///
/// Filters every estimate, merges the others into `estimates[reference]`,
/// and builds a graph whose edges are the reference's thresholded
/// connectivity OR the geometric incidence of the merged curves.
pub fn post_merge(
    estimates: &[FrameEstimate],
    reference: usize,
    params: &MergeParams,
    connect_tol: f64,
) -> Result<LaneGraph> {
    Ok(post_merge_traced(estimates, reference, params, connect_tol)?.0)
}

/// [`post_merge`] that also returns the update log.
pub fn post_merge_traced(
    estimates: &[FrameEstimate],
    reference: usize,
    params: &MergeParams,
    connect_tol: f64,
) -> Result<(LaneGraph, Vec<MergeUpdate>)> {
    params.validate()?;
    if estimates.is_empty() {
        return Err(Error::EmptyInput("estimates"));
    }
    if reference >= estimates.len() {
        return Err(Error::param(
            "reference",
            format!("index {reference} out of range for {} estimates", estimates.len()),
        ));
    }
    for e in estimates {
        e.validate()?;
    }
    let filtered: Vec<FrameEstimate> = estimates
        .iter()
        .map(|e| filter_by_probability(e, params.prob_thresh))
        .collect();
    let others: Vec<FrameEstimate> = filtered
        .iter()
        .enumerate()
        .filter(|(n, _)| *n != reference)
        .map(|(_, e)| e.clone())
        .collect();
    let (merged, log) = match_and_update(&filtered[reference], &others, params);

    let geometric = build_incidence(&merged.control_points, connect_tol);
    let n = merged.len();
    let incidence = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| x != y && (merged.connectivity[x][y] >= CONNECTIVITY_THRESH || geometric[x][y]))
                .collect()
        })
        .collect();
    Ok((
        LaneGraph {
            centerlines: merged.control_points,
            incidence,
        },
        log,
    ))
}
