//! Lane-graph comparison scores: point-level centerline F-score, per-line
//! detection F-score with greedy matching, and connectivity F-score over the
//! matched vertices.

use serde::{Deserialize, Serialize};

use crate::lane_graph::{LaneGraph, Polyline, DEFAULT_POLYLINE_POINTS};

pub const DEFAULT_MATCH_DIST: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_f: f64,
    pub detect_f: f64,
    pub connect_f: f64,
    /// `(pred index, gt index)` in acceptance order.
    pub matched_pairs: Vec<(usize, usize)>,
}

fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn sample(g: &LaneGraph) -> Vec<Polyline> {
    g.centerlines
        .iter()
        .map(|c| c.interpolate(DEFAULT_POLYLINE_POINTS).expect("100 >= 2"))
        .collect()
}

/// Fraction of points in `from` lying within `dist` of some point in `to`.
fn covered_fraction(from: &[Polyline], to: &[Polyline], dist: f64) -> f64 {
    let total: usize = from.iter().map(Polyline::len).sum();
    if total == 0 {
        return 0.0;
    }
    let hit = from
        .iter()
        .flat_map(|p| &p.points)
        .filter(|p| to.iter().flat_map(|q| &q.points).any(|q| (*p - q).norm() <= dist))
        .count();
    hit as f64 / total as f64
}

/// Point-level F-score at 100 samples per centerline.
pub fn centerline_f(pred: &LaneGraph, gt: &LaneGraph, match_dist: f64) -> f64 {
    match (pred.is_empty(), gt.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let p = sample(pred);
    let g = sample(gt);
    f_score(covered_fraction(&p, &g, match_dist), covered_fraction(&g, &p, match_dist))
}

/// Symmetric mean closest-point distance between two polylines.
pub fn mean_polyline_distance(a: &Polyline, b: &Polyline) -> f64 {
    let directed = |x: &Polyline, y: &Polyline| {
        x.points.iter().map(|p| y.min_distance_to(p)).sum::<f64>() / x.len() as f64
    };
    0.5 * (directed(a, b) + directed(b, a))
}

/// Greedy one-to-one matching by ascending mean polyline distance; a pair is
/// accepted when its distance is below `match_dist`. Returns the F-score
/// and the accepted pairs.
pub fn detection_f(pred: &LaneGraph, gt: &LaneGraph, match_dist: f64) -> (f64, Vec<(usize, usize)>) {
    match (pred.is_empty(), gt.is_empty()) {
        (true, true) => return (1.0, vec![]),
        (true, false) | (false, true) => return (0.0, vec![]),
        _ => {}
    }
    let p = sample(pred);
    let g = sample(gt);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in p.iter().enumerate() {
        for (j, b) in g.iter().enumerate() {
            let d = mean_polyline_distance(a, b);
            if d < match_dist {
                candidates.push((d, i, j));
            }
        }
    }
    // Ties broken by index for determinism.
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; p.len()];
    let mut gt_used = vec![false; g.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    let tp = pairs.len() as f64;
    let f = f_score(tp / p.len() as f64, tp / g.len() as f64);
    (f, pairs)
}

/// F-score over directed edges among matched vertices. With no matched
/// pairs the score is 1 only if both graphs are edgeless; with matched pairs
/// but no edges among them on either side the restrictions agree, so 1.
pub fn connectivity_f(pred: &LaneGraph, gt: &LaneGraph, matched_pairs: &[(usize, usize)]) -> f64 {
    let both_edgeless = pred.edge_count() == 0 && gt.edge_count() == 0;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for &(pa, ga) in matched_pairs {
        for &(pb, gb) in matched_pairs {
            if pa == pb {
                continue;
            }
            match (pred.incidence[pa][pb], gt.incidence[ga][gb]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    if matched_pairs.is_empty() {
        return if both_edgeless { 1.0 } else { 0.0 };
    }
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    f_score(precision, recall)
}

pub fn evaluate(pred: &LaneGraph, gt: &LaneGraph, match_dist: f64) -> EvalReport {
    let mean_f = centerline_f(pred, gt, match_dist);
    let (detect_f, matched_pairs) = detection_f(pred, gt, match_dist);
    let connect_f = connectivity_f(pred, gt, &matched_pairs);
    EvalReport {
        mean_f,
        detect_f,
        connect_f,
        matched_pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane_graph::{BezierCenterline, Point};

    fn line(x0: f64, z0: f64, x1: f64, z1: f64) -> BezierCenterline {
        BezierCenterline::straight(Point::new(x0, z0), Point::new(x1, z1))
    }

    fn chain() -> LaneGraph {
        LaneGraph::from_centerlines(
            vec![line(0.0, 0.0, 0.0, 10.0), line(0.0, 10.0, 0.0, 20.0), line(0.0, 20.0, 3.0, 30.0)],
            0.5,
        )
    }

    #[test]
    fn self_match() {
        let g = chain();
        let r = evaluate(&g, &g, DEFAULT_MATCH_DIST);
        assert_eq!((r.mean_f, r.detect_f, r.connect_f), (1.0, 1.0, 1.0));
        assert_eq!(r.matched_pairs.len(), 3);
    }

    #[test]
    fn empty_conventions() {
        let g = chain();
        let e = LaneGraph::default();
        assert_eq!(centerline_f(&e, &g, 0.5), 0.0);
        assert_eq!(centerline_f(&g, &e, 0.5), 0.0);
        assert_eq!(centerline_f(&e, &e, 0.5), 1.0);
        assert_eq!(detection_f(&e, &g, 0.5).0, 0.0);
        assert_eq!(connectivity_f(&e, &e, &[]), 1.0);
        assert_eq!(connectivity_f(&e, &g, &[]), 0.0);
    }

    #[test]
    fn half_recall_two_thirds() {
        // Two disjoint equal-length lines; the prediction has only one.
        let gt = LaneGraph::without_edges(vec![line(0.0, 0.0, 0.0, 10.0), line(10.0, 0.0, 10.0, 10.0)]);
        let pred = LaneGraph::without_edges(vec![line(0.0, 0.0, 0.0, 10.0)]);
        assert!((centerline_f(&pred, &gt, 0.5) - 2.0 / 3.0).abs() < 1e-12);
        assert!((detection_f(&pred, &gt, 0.5).0 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn spurious_line_lowers_precision() {
        let gt = chain();
        let mut lines = gt.centerlines.clone();
        lines.push(line(40.0, 0.0, 40.0, 10.0));
        let pred = LaneGraph::from_centerlines(lines, 0.5);
        let (f, pairs) = detection_f(&pred, &gt, 0.5);
        let (p, r) = (3.0 / 4.0, 1.0);
        assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert_eq!(pairs.len(), 3);
    }

    #[test]
    fn far_prediction_scores_zero() {
        let gt = chain();
        let pred = LaneGraph::without_edges(vec![line(30.0, 0.0, 30.0, 10.0)]);
        let (f, pairs) = detection_f(&pred, &gt, 0.5);
        assert_eq!(f, 0.0);
        assert!(pairs.is_empty());
    }

    #[test]
    fn connectivity_cases() {
        let gt = chain();
        let pairs = vec![(0, 0), (1, 1), (2, 2)];
        let mut pred = gt.clone();
        pred.incidence[1][2] = false;
        assert!((connectivity_f(&pred, &gt, &pairs) - 2.0 / 3.0).abs() < 1e-12);

        let two = LaneGraph::from_centerlines(gt.centerlines[..2].to_vec(), 0.5);
        let dropped = LaneGraph::without_edges(two.centerlines.clone());
        assert_eq!(connectivity_f(&dropped, &two, &[(0, 0), (1, 1)]), 0.0);
    }
}
