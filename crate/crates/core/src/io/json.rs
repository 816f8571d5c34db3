//! Versioned JSON documents for graphs, rigs, estimates, scenes, warped-frame
//! sidecars and token provenance.
//!
//! Every document carries `"version": 1` and
//! `"axis_convention": "x-right, z-forward, y-down"`. Points are `[x, z]`
//! pairs in meters; rotations are 9 numbers in row-major order.

use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::bev::{BevGrid, WarpedFrame};
use crate::camera::{check_rotation, CameraIntrinsics, CameraRig, RigidTransform, AXIS_CONVENTION};
use crate::lane_graph::{BezierCenterline, LaneGraph, Point, Polyline};
use crate::postmerge::FrameEstimate;
use crate::stetr::{TokenOrigin, TokenSequence};
use crate::synthetic::{Layout, SyntheticScene};
use crate::tensor::{BinaryMask, FeatureMap};

pub const JSON_VERSION: u32 = 1;

fn schema(path: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, FormatError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| FormatError::Json {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn check_header(version: u32, axis: &str) -> Result<(), FormatError> {
    if version != JSON_VERSION {
        return Err(schema("version", format!("unsupported version {version}")));
    }
    if axis != AXIS_CONVENTION {
        return Err(schema(
            "axis_convention",
            format!("expected \"{AXIS_CONVENTION}\", found \"{axis}\""),
        ));
    }
    Ok(())
}

fn to_string<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

fn point(p: &[f64; 2], path: &str) -> Result<Point, FormatError> {
    if !(p[0].is_finite() && p[1].is_finite()) {
        return Err(schema(path, "non-finite coordinate"));
    }
    Ok(Point::new(p[0], p[1]))
}

fn curve(cp: &[[f64; 2]; 3], path: &str) -> Result<BezierCenterline, FormatError> {
    Ok(BezierCenterline::new(
        point(&cp[0], &format!("{path}[0]"))?,
        point(&cp[1], &format!("{path}[1]"))?,
        point(&cp[2], &format!("{path}[2]"))?,
    ))
}

// ---------------------------------------------------------------------------
// Graph

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    version: u32,
    axis_convention: String,
    control_points: Vec<[[f64; 2]; 3]>,
    edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphBody {
    control_points: Vec<[[f64; 2]; 3]>,
    edges: Vec<[usize; 2]>,
}

impl GraphBody {
    fn from_graph(g: &LaneGraph) -> Self {
        Self {
            control_points: g.centerlines.iter().map(BezierCenterline::to_arrays).collect(),
            edges: g.edges().into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }

    fn into_graph(self, prefix: &str) -> Result<LaneGraph, FormatError> {
        let lines = self
            .control_points
            .iter()
            .enumerate()
            .map(|(i, cp)| curve(cp, &format!("{prefix}control_points[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let n = lines.len();
        for (k, &[a, b]) in self.edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(schema(
                    format!("{prefix}edges[{k}]"),
                    format!("edge [{a}, {b}] out of range for {n} centerlines"),
                ));
            }
            if a == b {
                return Err(schema(format!("{prefix}edges[{k}]"), "self-loop"));
            }
        }
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        LaneGraph::from_edges(lines, &edges).map_err(|e| schema(format!("{prefix}edges"), e.to_string()))
    }
}

pub fn graph_to_json(g: &LaneGraph) -> String {
    let body = GraphBody::from_graph(g);
    to_string(&GraphDoc {
        version: JSON_VERSION,
        axis_convention: AXIS_CONVENTION.into(),
        control_points: body.control_points,
        edges: body.edges,
    })
}

pub fn graph_from_json(text: &str) -> Result<LaneGraph, FormatError> {
    let doc: GraphDoc = parse(text)?;
    check_header(doc.version, &doc.axis_convention)?;
    GraphBody {
        control_points: doc.control_points,
        edges: doc.edges,
    }
    .into_graph("")
}

// ---------------------------------------------------------------------------
// Rig

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformDoc {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TransformDoc {
    fn from_transform(t: &RigidTransform) -> Self {
        let r = &t.rotation;
        Self {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }

    fn to_transform(&self, path: &str) -> Result<RigidTransform, FormatError> {
        let rotation = Matrix3::from_row_slice(&self.rotation);
        check_rotation(&rotation, path).map_err(|e| schema(format!("{path}.rotation"), e.to_string()))?;
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(schema(format!("{path}.translation"), "non-finite entry"));
        }
        Ok(RigidTransform {
            rotation,
            translation: Vector3::from_row_slice(&self.translation),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigBody {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    cam_from_ego: TransformDoc,
    camera_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigDoc {
    version: u32,
    axis_convention: String,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    cam_from_ego: TransformDoc,
    ego_pose: TransformDoc,
    camera_height: f64,
}

impl RigBody {
    fn from_rig(r: &CameraRig) -> Self {
        let k = r.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            cam_from_ego: TransformDoc::from_transform(&r.cam_from_ego),
            camera_height: r.camera_height,
        }
    }

    fn to_rig(&self, ego_pose: RigidTransform, prefix: &str) -> Result<CameraRig, FormatError> {
        let intrinsics = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy)
            .map_err(|e| schema(format!("{prefix}fx"), e.to_string()))?;
        let cam_from_ego = self.cam_from_ego.to_transform(&format!("{prefix}cam_from_ego"))?;
        CameraRig::new(intrinsics, cam_from_ego, ego_pose, self.camera_height)
            .map_err(|e| schema(format!("{prefix}camera_height"), e.to_string()))
    }
}

pub fn rig_to_json(r: &CameraRig) -> String {
    let body = RigBody::from_rig(r);
    to_string(&RigDoc {
        version: JSON_VERSION,
        axis_convention: AXIS_CONVENTION.into(),
        fx: body.fx,
        fy: body.fy,
        cx: body.cx,
        cy: body.cy,
        cam_from_ego: body.cam_from_ego,
        ego_pose: TransformDoc::from_transform(&r.ego_pose),
        camera_height: body.camera_height,
    })
}

pub fn rig_from_json(text: &str) -> Result<CameraRig, FormatError> {
    let doc: RigDoc = parse(text)?;
    check_header(doc.version, &doc.axis_convention)?;
    let pose = doc.ego_pose.to_transform("ego_pose")?;
    RigBody {
        fx: doc.fx,
        fy: doc.fy,
        cx: doc.cx,
        cy: doc.cy,
        cam_from_ego: doc.cam_from_ego,
        camera_height: doc.camera_height,
    }
    .to_rig(pose, "")
}

// ---------------------------------------------------------------------------
// Estimate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateDoc {
    version: u32,
    axis_convention: String,
    relative_time: i32,
    #[serde(rename = "R")]
    control_points: Vec<[[f64; 2]; 3]>,
    #[serde(rename = "P")]
    probabilities: Vec<f64>,
    #[serde(rename = "C")]
    connectivity: Vec<Vec<f64>>,
    #[serde(rename = "Omega")]
    polylines: Vec<Vec<[f64; 2]>>,
}

pub fn estimate_to_json(e: &FrameEstimate) -> String {
    to_string(&EstimateDoc {
        version: JSON_VERSION,
        axis_convention: AXIS_CONVENTION.into(),
        relative_time: e.relative_time,
        control_points: e.control_points.iter().map(BezierCenterline::to_arrays).collect(),
        probabilities: e.probabilities.clone(),
        connectivity: e.connectivity.clone(),
        polylines: e
            .polylines
            .iter()
            .map(|p| p.points.iter().map(|q| [q.x, q.y]).collect())
            .collect(),
    })
}

pub fn estimate_from_json(text: &str) -> Result<FrameEstimate, FormatError> {
    let doc: EstimateDoc = parse(text)?;
    check_header(doc.version, &doc.axis_convention)?;
    let control_points = doc
        .control_points
        .iter()
        .enumerate()
        .map(|(i, cp)| curve(cp, &format!("R[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let polylines = doc
        .polylines
        .iter()
        .enumerate()
        .map(|(i, pts)| {
            pts.iter()
                .enumerate()
                .map(|(k, p)| point(p, &format!("Omega[{i}][{k}]")))
                .collect::<Result<Vec<_>, _>>()
                .map(|points| Polyline { points })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let e = FrameEstimate {
        control_points,
        probabilities: doc.probabilities,
        connectivity: doc.connectivity,
        polylines,
        relative_time: doc.relative_time,
    };
    e.validate().map_err(|err| schema("R", err.to_string()))?;
    Ok(e)
}

// ---------------------------------------------------------------------------
// Scene

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseSample {
    t: f64,
    pose: TransformDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    version: u32,
    axis_convention: String,
    layout: String,
    trajectory: Vec<PoseSample>,
    rig: RigBody,
    graph: GraphBody,
}

pub fn scene_to_json(s: &SyntheticScene) -> String {
    to_string(&SceneDoc {
        version: JSON_VERSION,
        axis_convention: AXIS_CONVENTION.into(),
        layout: s.layout.name().into(),
        trajectory: s
            .trajectory
            .iter()
            .map(|(t, p)| PoseSample {
                t: *t,
                pose: TransformDoc::from_transform(p),
            })
            .collect(),
        rig: RigBody::from_rig(&s.rig_template),
        graph: GraphBody::from_graph(&s.gt_graph),
    })
}

pub fn scene_from_json(text: &str) -> Result<SyntheticScene, FormatError> {
    let doc: SceneDoc = parse(text)?;
    check_header(doc.version, &doc.axis_convention)?;
    let layout: Layout = doc.layout.parse().map_err(|e: crate::Error| schema("layout", e.to_string()))?;
    let mut trajectory = Vec::with_capacity(doc.trajectory.len());
    for (i, s) in doc.trajectory.iter().enumerate() {
        if !s.t.is_finite() {
            return Err(schema(format!("trajectory[{i}].t"), "non-finite timestamp"));
        }
        if let Some((prev, _)) = trajectory.last() {
            if s.t <= *prev {
                return Err(schema(format!("trajectory[{i}].t"), "timestamps must increase strictly"));
            }
        }
        trajectory.push((s.t, s.pose.to_transform(&format!("trajectory[{i}].pose"))?));
    }
    Ok(SyntheticScene {
        layout,
        gt_graph: doc.graph.into_graph("graph.")?,
        trajectory,
        rig_template: doc.rig.to_rig(RigidTransform::identity(), "rig.")?,
    })
}

// ---------------------------------------------------------------------------
// Warped frame sidecar (features live in a tensor file next to it)

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub resolution: f64,
    pub fov_margin: f64,
}

impl From<&BevGrid> for GridDoc {
    fn from(g: &BevGrid) -> Self {
        Self {
            x_min: g.x_min,
            x_max: g.x_max,
            z_min: g.z_min,
            z_max: g.z_max,
            resolution: g.resolution,
            fov_margin: g.fov_margin,
        }
    }
}

impl From<GridDoc> for BevGrid {
    fn from(g: GridDoc) -> Self {
        Self {
            x_min: g.x_min,
            x_max: g.x_max,
            z_min: g.z_min,
            z_max: g.z_max,
            resolution: g.resolution,
            fov_margin: g.fov_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarDoc {
    version: u32,
    axis_convention: String,
    relative_time: i32,
    grid: GridDoc,
    /// Frames aggregated into this map; 1 for a single warped frame.
    #[serde(default = "one")]
    frame_count: usize,
    /// One string of `0`/`1` per grid row, row 0 nearest.
    mask: Vec<String>,
}

fn one() -> usize {
    1
}

/// Sidecar metadata for a BEV map stored as a tensor file.
#[derive(Debug, Clone, PartialEq)]
pub struct BevSidecar {
    pub relative_time: i32,
    pub grid: BevGrid,
    pub frame_count: usize,
    pub mask: BinaryMask,
}

pub fn sidecar_to_json(s: &BevSidecar) -> String {
    let mask = (0..s.mask.height())
        .map(|r| {
            (0..s.mask.width())
                .map(|c| if s.mask.get(r, c) { '1' } else { '0' })
                .collect()
        })
        .collect();
    to_string(&SidecarDoc {
        version: JSON_VERSION,
        axis_convention: AXIS_CONVENTION.into(),
        relative_time: s.relative_time,
        grid: GridDoc::from(&s.grid),
        frame_count: s.frame_count,
        mask,
    })
}

pub fn sidecar_from_json(text: &str) -> Result<BevSidecar, FormatError> {
    let doc: SidecarDoc = parse(text)?;
    check_header(doc.version, &doc.axis_convention)?;
    let grid = BevGrid::from(doc.grid);
    grid.validate().map_err(|e| schema("grid", e.to_string()))?;
    let h = doc.mask.len();
    let w = doc.mask.first().map_or(0, String::len);
    let mut bits = Vec::with_capacity(h * w);
    for (r, row) in doc.mask.iter().enumerate() {
        if row.len() != w {
            return Err(schema(format!("mask[{r}]"), format!("length {} differs from {w}", row.len())));
        }
        for (c, ch) in row.chars().enumerate() {
            bits.push(match ch {
                '0' => false,
                '1' => true,
                other => return Err(schema(format!("mask[{r}]"), format!("invalid character {other:?} at column {c}"))),
            });
        }
    }
    if (h, w) != grid.fov_dims() {
        let (fh, fw) = grid.fov_dims();
        return Err(schema("mask", format!("{h}x{w} does not match the {fh}x{fw} FOV grid")));
    }
    Ok(BevSidecar {
        relative_time: doc.relative_time,
        grid,
        frame_count: doc.frame_count,
        mask: BinaryMask::new(h, w, bits).map_err(|e| schema("mask", e.to_string()))?,
    })
}

/// Reassembles a warped frame from its tensor and sidecar.
pub fn warped_frame_from_parts(features: FeatureMap, sidecar: BevSidecar) -> Result<WarpedFrame, FormatError> {
    if (features.height(), features.width()) != (sidecar.mask.height(), sidecar.mask.width()) {
        return Err(schema(
            "mask",
            format!(
                "{}x{} mask does not match {}x{} features",
                sidecar.mask.height(),
                sidecar.mask.width(),
                features.height(),
                features.width()
            ),
        ));
    }
    Ok(WarpedFrame {
        features,
        mask: sidecar.mask,
        relative_time: sidecar.relative_time,
    })
}

// ---------------------------------------------------------------------------
// Token provenance (tokens live in a 2-D tensor file)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceDoc {
    version: u32,
    feature_dim: usize,
    /// `[frame, row, col]` per token.
    provenance: Vec<[usize; 3]>,
}

pub fn provenance_to_json(seq: &TokenSequence) -> String {
    to_string(&ProvenanceDoc {
        version: JSON_VERSION,
        feature_dim: seq.feature_dim,
        provenance: seq.provenance.iter().map(|o| [o.frame, o.row, o.col]).collect(),
    })
}

pub fn provenance_from_json(text: &str) -> Result<(usize, Vec<TokenOrigin>), FormatError> {
    let doc: ProvenanceDoc = parse(text)?;
    if doc.version != JSON_VERSION {
        return Err(schema("version", format!("unsupported version {}", doc.version)));
    }
    Ok((
        doc.feature_dim,
        doc.provenance
            .into_iter()
            .map(|[frame, row, col]| TokenOrigin { frame, row, col })
            .collect(),
    ))
}

/// Generic JSON for plain serde types such as the evaluation report.
pub fn to_json<T: Serialize>(value: &T) -> String {
    to_string(value)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, FormatError> {
    parse(text)
}
