//! Deterministic synthetic scenes, ego trajectories, per-frame detector
//! estimates and ground-pattern images.
//!
//! Every generator is a pure function of its parameters and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::bev::BevGrid;
use crate::camera::{transform_ground_point, CameraIntrinsics, CameraRig, RigidTransform};
use crate::error::{Error, Result};
use crate::lane_graph::{
    build_incidence, BezierCenterline, LaneGraph, Point, Window, DEFAULT_CONNECT_TOL,
    DEFAULT_POLYLINE_POINTS,
};
use crate::postmerge::FrameEstimate;
use crate::tensor::FeatureMap;

pub const LANE_WIDTH: f64 = 3.5;

/// Shortest visible piece kept when clipping to a window, meters.
pub const MIN_VISIBLE_LENGTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Parallel straight lanes, no junctions.
    Straight,
    /// Parallel lanes plus an on-ramp joining the rightmost lane.
    Merge,
    /// Lanes crossing a perpendicular road with right-turn connectors.
    Intersection,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(Self::Straight),
            "merge" => Ok(Self::Merge),
            "intersection" => Ok(Self::Intersection),
            other => Err(Error::param("layout", format!("unknown layout `{other}`"))),
        }
    }
}

impl Layout {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Straight => "straight",
            Self::Merge => "merge",
            Self::Intersection => "intersection",
        }
    }
}

/// Ego poses sampled along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    pub frames: usize,
    /// Seconds between frames.
    pub dt: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self { frames: 5, dt: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub layout: Layout,
    /// Lane graph in the global frame.
    pub gt_graph: LaneGraph,
    /// `(timestamp seconds, global_from_ego)`, strictly increasing in time.
    pub trajectory: Vec<(f64, RigidTransform)>,
    /// Camera rig with an identity ego pose.
    pub rig_template: CameraRig,
}

impl SyntheticScene {
    pub fn rig_at(&self, frame: usize) -> CameraRig {
        self.rig_template.with_pose(self.trajectory[frame].1)
    }

    /// Ground-truth graph in `frame`'s ego coordinates, clipped to `window`.
    pub fn gt_in_frame(&self, frame: usize, window: &Window) -> LaneGraph {
        let ego_from_global = self.trajectory[frame].1.inverse();
        self.gt_graph
            .map_points(|p| transform_ground_point(&ego_from_global, p))
            .clip(window, MIN_VISIBLE_LENGTH, DEFAULT_CONNECT_TOL)
    }
}

/// Default camera: 96×64 feature map, 90° horizontal field of view, 1.6 m
/// high and pitched 3° down.
pub fn default_rig() -> CameraRig {
    let k = CameraIntrinsics::from_fov(96, 64, 90.0).expect("valid fov");
    CameraRig::mounted(k, 1.6, 3.0, RigidTransform::identity()).expect("valid rig")
}

pub const DEFAULT_IMAGE_DIMS: (usize, usize) = (64, 96);

/// Lane center `x` offsets, ego lane first at 0, the rest to the right.
fn lane_offsets(lanes: usize) -> Vec<f64> {
    (0..lanes).map(|i| i as f64 * LANE_WIDTH).collect()
}

pub fn generate_scene(
    seed: u64,
    layout: Layout,
    lanes: usize,
    trajectory: TrajectoryParams,
) -> Result<SyntheticScene> {
    if lanes == 0 {
        return Err(Error::param("lanes", "must be >= 1"));
    }
    if trajectory.frames == 0 {
        return Err(Error::param("frames", "must be >= 1"));
    }
    if !(trajectory.dt > 0.0 && trajectory.dt.is_finite()) {
        return Err(Error::param("dt", "must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Slow urban driving so a frame `dt` away stays within the FOV margin.
    let speed: f64 = rng.random_range(2.5..5.0);
    let lateral_drift: f64 = rng.random_range(-0.1..0.1);
    let yaw_amp: f64 = rng.random_range(0.0..1.5f64).to_radians();
    let yaw_phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let start_z: f64 = rng.random_range(-5.0..5.0);
    let travel = speed * trajectory.dt * (trajectory.frames as f64 - 1.0);

    let poses = (0..trajectory.frames)
        .map(|k| {
            let t = k as f64 * trajectory.dt;
            let z = start_z + speed * t;
            let x = lateral_drift * t;
            let yaw = yaw_amp * (0.3 * t + yaw_phase).sin();
            (t, RigidTransform::from_yaw(yaw, x, z))
        })
        .collect();

    let z_lo = start_z - 80.0;
    let z_hi = start_z + travel + 120.0;
    let offsets = lane_offsets(lanes);
    // Junction placed ahead of the middle of the drive.
    let junction_z = start_z + 0.5 * travel + rng.random_range(15.0..30.0);

    let (centerlines, edges) = match layout {
        Layout::Straight => (
            offsets
                .iter()
                .map(|&x| BezierCenterline::straight(Point::new(x, z_lo), Point::new(x, z_hi)))
                .collect(),
            None,
        ),
        Layout::Merge => {
            let x_last = *offsets.last().expect("lanes >= 1");
            let mut lines: Vec<BezierCenterline> = offsets[..lanes - 1]
                .iter()
                .map(|&x| BezierCenterline::straight(Point::new(x, z_lo), Point::new(x, z_hi)))
                .collect();
            let merge_at = Point::new(x_last, junction_z);
            let ramp_len: f64 = rng.random_range(30.0..45.0);
            let ramp_angle: f64 = rng.random_range(12.0..20.0f64).to_radians();
            let ramp_start = Point::new(
                x_last + ramp_len * ramp_angle.sin(),
                junction_z - ramp_len * ramp_angle.cos(),
            );
            let before = lines.len();
            lines.push(BezierCenterline::straight(Point::new(x_last, z_lo), merge_at));
            lines.push(BezierCenterline::straight(ramp_start, merge_at));
            lines.push(BezierCenterline::straight(merge_at, Point::new(x_last, z_hi)));
            let edges = vec![(before, before + 2), (before + 1, before + 2)];
            (lines, Some(edges))
        }
        Layout::Intersection => intersection(&offsets, z_lo, z_hi, junction_z),
    };

    let gt_graph = match edges {
        Some(e) => LaneGraph::from_edges(centerlines, &e)?,
        None => LaneGraph::from_centerlines(centerlines, DEFAULT_CONNECT_TOL),
    };
    Ok(SyntheticScene {
        layout,
        gt_graph,
        trajectory: poses,
        rig_template: default_rig(),
    })
}

/// Main lanes along `+z` cut at the crossing, a perpendicular road along
/// `+x`, and a right-turn connector from each main lane onto the nearest
/// crossing lane.
fn intersection(
    offsets: &[f64],
    z_lo: f64,
    z_hi: f64,
    junction_z: f64,
) -> (Vec<BezierCenterline>, Option<Vec<(usize, usize)>>) {
    let lanes = offsets.len();
    let half = LANE_WIDTH * lanes as f64;
    let (x_left, x_right) = (offsets[0] - half, offsets[lanes - 1] + half);
    let (entry, exit) = (junction_z - half, junction_z + half);
    let mut lines = Vec::new();
    let mut edges = Vec::new();

    // Crossing road lanes, heading +x, between entry and exit.
    let cross_z: Vec<f64> = (0..lanes).map(|k| entry + (k as f64 + 0.5) * 2.0 * half / lanes as f64).collect();
    let x_far = x_right + 60.0;
    let mut cross_out = Vec::new();
    for &cz in &cross_z {
        let left = lines.len();
        lines.push(BezierCenterline::straight(Point::new(x_left - 60.0, cz), Point::new(x_left, cz)));
        lines.push(BezierCenterline::straight(Point::new(x_left, cz), Point::new(x_right, cz)));
        lines.push(BezierCenterline::straight(Point::new(x_right, cz), Point::new(x_far, cz)));
        edges.push((left, left + 1));
        edges.push((left + 1, left + 2));
        cross_out.push((cz, left + 2));
    }

    for &x in offsets {
        let base = lines.len();
        lines.push(BezierCenterline::straight(Point::new(x, z_lo), Point::new(x, entry)));
        lines.push(BezierCenterline::straight(Point::new(x, entry), Point::new(x, exit)));
        lines.push(BezierCenterline::straight(Point::new(x, exit), Point::new(x, z_hi)));
        edges.push((base, base + 1));
        edges.push((base + 1, base + 2));
        // Right turn onto the nearest crossing lane's outgoing segment.
        let (cz, out) = cross_out[0];
        let target = Point::new(x_right, cz);
        let turn = BezierCenterline::new(Point::new(x, entry), Point::new(x, cz), target);
        let turn_idx = lines.len();
        lines.push(turn);
        edges.push((base, turn_idx));
        edges.push((turn_idx, out));
    }
    (lines, Some(edges))
}

/// Detector imperfections injected into simulated estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Gaussian jitter on every control point, meters.
    pub control_point_sigma: f64,
    /// Chance a visible centerline is split into 2–3 fragments.
    pub fragment_probability: f64,
    /// Chance a visible centerline is missed.
    pub dropout_probability: f64,
    /// Expected number of spurious centerlines per frame.
    pub false_positive_rate: f64,
    /// Gaussian noise on the existence logit.
    pub prob_noise_sigma: f64,
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            control_point_sigma: 0.0,
            fragment_probability: 0.0,
            dropout_probability: 0.0,
            false_positive_rate: 0.0,
            prob_noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            ("control_point_sigma", self.control_point_sigma),
            ("fragment_probability", self.fragment_probability),
            ("dropout_probability", self.dropout_probability),
            ("false_positive_rate", self.false_positive_rate),
            ("prob_noise_sigma", self.prob_noise_sigma),
        ];
        for (name, v) in vals {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("fragment_probability", self.fragment_probability),
            ("dropout_probability", self.dropout_probability),
        ] {
            if v > 1.0 {
                return Err(Error::param(name, format!("{v} > 1")));
            }
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::zero()
    }
}

/// Existence probability given to clean true detections.
pub const TRUE_DETECTION_PROB: f64 = 0.95;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Simulated detector output for each frame in `frames`, each in its own
/// ego coordinates and clipped to `grid`'s target window.
/// `relative_time` is measured against `reference_frame`.
pub fn simulate_frame_estimates(
    scene: &SyntheticScene,
    frames: &[usize],
    reference_frame: usize,
    grid: &BevGrid,
    noise: &NoiseParams,
    seed: u64,
) -> Result<Vec<FrameEstimate>> {
    noise.validate()?;
    grid.validate()?;
    let window = grid.target_window();
    let mut out = Vec::with_capacity(frames.len());
    for &idx in frames {
        if idx >= scene.trajectory.len() {
            return Err(Error::param(
                "frames",
                format!("index {idx} outside trajectory of {}", scene.trajectory.len()),
            ));
        }
        // Per-frame stream so results do not depend on which other frames
        // were requested.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let visible = scene.gt_in_frame(idx, &window);

        let mut lines: Vec<BezierCenterline> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for c in &visible.centerlines {
            if rng.random::<f64>() < noise.dropout_probability {
                continue;
            }
            let pieces = if rng.random::<f64>() < noise.fragment_probability {
                fragment(c, &mut rng)
            } else {
                vec![*c]
            };
            for p in pieces {
                lines.push(p);
                let z = logit(TRUE_DETECTION_PROB) + gaussian(&mut rng, noise.prob_noise_sigma);
                probs.push(sigmoid(z));
            }
        }
        // Connectivity from the clean geometry, before jitter.
        let clean_edges = build_incidence(&lines, 1e-6);
        let true_count = lines.len();

        let fp_count = if noise.false_positive_rate > 0.0 {
            Poisson::new(noise.false_positive_rate)
                .map(|d| d.sample(&mut rng) as usize)
                .unwrap_or(0)
        } else {
            0
        };
        for _ in 0..fp_count {
            let start = Point::new(
                rng.random_range(window.x_min..window.x_max),
                rng.random_range(window.z_min..window.z_max),
            );
            let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let len: f64 = rng.random_range(5.0..20.0);
            let end = Point::new(start.x + len * heading.sin(), start.y + len * heading.cos());
            lines.push(BezierCenterline::straight(start, end));
            probs.push(rng.random_range(0.0..0.5));
        }

        if noise.control_point_sigma > 0.0 {
            for c in lines.iter_mut() {
                for p in c.control_points.iter_mut() {
                    p.x += gaussian(&mut rng, noise.control_point_sigma);
                    p.y += gaussian(&mut rng, noise.control_point_sigma);
                }
            }
        }

        let q = lines.len();
        let connectivity = (0..q)
            .map(|a| {
                (0..q)
                    .map(|b| if a < true_count && b < true_count && clean_edges[a][b] { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        out.push(FrameEstimate::new(
            lines,
            probs,
            connectivity,
            idx as i32 - reference_frame as i32,
            DEFAULT_POLYLINE_POINTS,
        )?);
    }
    Ok(out)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

/// Splits a centerline into 2 or 3 consecutive pieces of at least 20% of
/// the parameter range each.
fn fragment(c: &BezierCenterline, rng: &mut ChaCha8Rng) -> Vec<BezierCenterline> {
    let pieces: usize = rng.random_range(2..=3);
    let mut cuts = vec![0.0];
    let mut lo = 0.0;
    for k in 1..pieces {
        let remaining = (pieces - k) as f64;
        let hi = 1.0 - 0.2 * remaining;
        let t = rng.random_range(lo + 0.2..=hi.max(lo + 0.2));
        cuts.push(t);
        lo = t;
    }
    cuts.push(1.0);
    cuts.windows(2).map(|w| c.segment(w[0], w[1])).collect()
}

/// Renders a scalar ground-plane field as a one-channel image: each pixel
/// holds `pattern(x, z)` at its ground intersection, or 0 when the ray
/// misses the ground.
pub fn render_ground_pattern(
    pattern: impl Fn(f64, f64) -> f64,
    rig: &CameraRig,
    image_dims: (usize, usize),
) -> Result<FeatureMap> {
    let (h, w) = image_dims;
    FeatureMap::from_fn(h, w, 1, |row, col, _| {
        let hit = rig.pixel_to_ground(col as f64, row as f64);
        if hit.valid {
            pattern(hit.point.x, hit.point.y)
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(layout: Layout, lanes: usize) -> SyntheticScene {
        generate_scene(7, layout, lanes, TrajectoryParams::default()).unwrap()
    }

    #[test]
    fn scenes_are_deterministic() {
        for layout in [Layout::Straight, Layout::Merge, Layout::Intersection] {
            let a = generate_scene(11, layout, 2, TrajectoryParams::default()).unwrap();
            let b = generate_scene(11, layout, 2, TrajectoryParams::default()).unwrap();
            assert_eq!(a, b);
            assert!(a.gt_graph.validate(DEFAULT_CONNECT_TOL).is_empty(), "{layout:?}");
            assert!(a.trajectory.windows(2).all(|w| w[1].0 > w[0].0));
        }
        assert!(generate_scene(1, Layout::Straight, 0, TrajectoryParams::default()).is_err());
    }

    #[test]
    fn layout_contracts() {
        let s = scene(Layout::Straight, 2);
        assert_eq!(s.gt_graph.len(), 2);
        assert_eq!(s.gt_graph.edge_count(), 0);
        let m = scene(Layout::Merge, 2);
        assert!(m.gt_graph.edge_count() >= 1);
        let i = scene(Layout::Intersection, 2);
        let geometric = build_incidence(&i.gt_graph.centerlines, DEFAULT_CONNECT_TOL);
        assert!(geometric.iter().flatten().filter(|&&b| b).count() >= 2);
    }

    #[test]
    fn consecutive_poses_within_margin() {
        let grid = BevGrid::default();
        for seed in 0..50 {
            let s = generate_scene(seed, Layout::Straight, 1, TrajectoryParams::default()).unwrap();
            for w in s.trajectory.windows(2) {
                let step = (w[1].1.translation - w[0].1.translation).norm();
                assert!(step < grid.fov_margin, "seed {seed}: step {step}");
            }
        }
    }

    #[test]
    fn zero_noise_lies_on_gt() {
        let s = scene(Layout::Intersection, 2);
        let grid = BevGrid::default();
        let est = simulate_frame_estimates(&s, &[0, 1, 2], 1, &grid, &NoiseParams::zero(), 3).unwrap();
        assert_eq!(est.iter().map(|e| e.relative_time).collect::<Vec<_>>(), vec![-1, 0, 1]);
        for (e, idx) in est.iter().zip([0, 1, 2]) {
            let gt = s.gt_in_frame(idx, &grid.target_window());
            assert_eq!(e.len(), gt.len());
            for (poly, gt_line) in e.polylines.iter().zip(&gt.centerlines) {
                let expect = gt_line.interpolate(poly.len()).unwrap();
                for (a, b) in poly.points.iter().zip(&expect.points) {
                    assert!((a - b).norm() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn dropout_one_empties() {
        let s = scene(Layout::Merge, 3);
        let noise = NoiseParams {
            dropout_probability: 1.0,
            ..NoiseParams::zero()
        };
        let est = simulate_frame_estimates(&s, &[0, 2], 0, &BevGrid::default(), &noise, 1).unwrap();
        assert!(est.iter().all(FrameEstimate::is_empty));
    }

    #[test]
    fn fragments_cover_the_visible_span() {
        let s = scene(Layout::Straight, 1);
        let grid = BevGrid::default();
        let noise = NoiseParams {
            fragment_probability: 1.0,
            ..NoiseParams::zero()
        };
        let est = simulate_frame_estimates(&s, &[0], 0, &grid, &noise, 5).unwrap();
        let gt = s.gt_in_frame(0, &grid.target_window());
        assert_eq!(gt.len(), 1);
        let e = &est[0];
        assert!(e.len() >= 2);
        assert!((e.control_points[0].start() - gt.centerlines[0].start()).norm() < 1e-9);
        assert!((e.control_points[e.len() - 1].end() - gt.centerlines[0].end()).norm() < 1e-9);
        for w in e.control_points.windows(2) {
            assert!((w[0].end() - w[1].start()).norm() < 1e-9);
        }
        // Consecutive fragments are reported as connected.
        assert_eq!(e.connectivity[0][1], 1.0);
    }

    #[test]
    fn noisy_estimates_are_deterministic() {
        let s = scene(Layout::Intersection, 2);
        let noise = NoiseParams {
            control_point_sigma: 0.5,
            fragment_probability: 0.3,
            dropout_probability: 0.1,
            false_positive_rate: 2.0,
            prob_noise_sigma: 0.5,
        };
        let grid = BevGrid::default();
        let a = simulate_frame_estimates(&s, &[0, 1], 0, &grid, &noise, 9).unwrap();
        let b = simulate_frame_estimates(&s, &[0, 1], 0, &grid, &noise, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_frame_estimates(&s, &[1], 0, &grid, &noise, 9).unwrap();
        assert_eq!(a[1], c[0]);
        let bad = NoiseParams {
            dropout_probability: 1.5,
            ..noise
        };
        assert!(simulate_frame_estimates(&s, &[0], 0, &grid, &bad, 9).is_err());
        assert!(simulate_frame_estimates(&s, &[99], 0, &grid, &noise, 9).is_err());
    }

    #[test]
    fn rendered_patterns() {
        let k = CameraIntrinsics::new(50.0, 50.0, 50.0, 20.0).unwrap();
        let rig = CameraRig::mounted(k, 1.5, 0.0, RigidTransform::identity()).unwrap();
        let img = render_ground_pattern(|_, _| 3.0, &rig, (41, 101)).unwrap();
        for row in 0..41 {
            for col in 0..101 {
                let expect = if rig.pixel_to_ground(col as f64, row as f64).valid { 3.0 } else { 0.0 };
                assert_eq!(img.get(row, col, 0), expect);
            }
        }
        assert_eq!(img.get(40, 50, 0), 3.0);
        assert_eq!(img.get(0, 50, 0), 0.0);

        // f(x, z) = x is antisymmetric about the principal column.
        let img = render_ground_pattern(|x, _| x, &rig, (41, 101)).unwrap();
        for row in 0..41 {
            for d in 0..=50 {
                let l = img.get(row, 50 - d, 0);
                let r = img.get(row, 50 + d, 0);
                assert!((l + r).abs() < 1e-9, "row {row} d {d}");
            }
        }
    }
}
