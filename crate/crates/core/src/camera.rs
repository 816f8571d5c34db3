//! Pinhole camera, rigid poses and flat-ground back-projection.
//!
//! Axis convention (shared by every frame in the crate): `x` right, `y` down,
//! `z` forward. The camera looks along its `+z`; image `u` grows rightward and
//! `v` downward. The ego frame has its origin on the ground plane `y = 0`, so
//! a camera mounted `h` meters up sits at `y = -h`. Yaw is a rotation about
//! `+y`; a positive yaw turns the heading from `+z` toward `+x` (a right turn).

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::lane_graph::Point;

pub const AXIS_CONVENTION: &str = "x-right, z-forward, y-down";

/// Rays must point at least this far below the horizontal to hit the ground.
pub const HORIZON_MARGIN_DEG: f64 = 0.5;

/// Tolerance for orthonormality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::param("intrinsics", format!("fx={fx}, fy={fy} must be > 0")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::param("intrinsics", "principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Intrinsics for an image of `width × height` pixels with the principal
    /// point at the center and the given horizontal field of view.
    pub fn from_fov(width: usize, height: usize, horizontal_fov_deg: f64) -> Result<Self> {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let f = (width as f64 / 2.0) / (horizontal_fov_deg.to_radians() / 2.0).tan();
        Self::new(f, f, cx, cy)
    }
}

/// Rotation followed by translation: `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checked constructor: `R` must be orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, "rotation")?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::param("translation", "must be finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Planar pose: yaw about `+y` and a ground-plane position `(x, z)`.
    pub fn from_yaw(yaw: f64, x: f64, z: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::y_axis(), yaw).matrix(),
            translation: Vector3::new(x, 0.0, z),
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Heading angle for a planar pose (inverse of [`RigidTransform::from_yaw`]).
    pub fn yaw(&self) -> f64 {
        let fwd = self.rotation * Vector3::z();
        fwd.x.atan2(fwd.z)
    }
}

pub(crate) fn check_rotation(r: &Matrix3<f64>, what: &str) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::param("rotation", format!("{what} has non-finite entries")));
    }
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > ROTATION_TOL {
        return Err(Error::param(
            "rotation",
            format!("{what} is not orthonormal (max |RᵀR - I| = {err:.3e})"),
        ));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::param(
            "rotation",
            format!("{what} has determinant {det:.6}, expected +1"),
        ));
    }
    Ok(())
}

/// A camera on an ego vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    /// Maps ego-frame points into the camera frame.
    pub cam_from_ego: RigidTransform,
    /// Maps ego-frame points into the global frame.
    pub ego_pose: RigidTransform,
    /// Height of the camera center above the ground plane, meters.
    pub camera_height: f64,
}

/// Ground point with a validity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundHit {
    pub point: Point,
    pub valid: bool,
}

/// Image coordinates with a validity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

impl CameraRig {
    /// Validates the rig. The camera center implied by `cam_from_ego` must sit
    /// `camera_height` above the ego ground plane.
    pub fn new(
        intrinsics: CameraIntrinsics,
        cam_from_ego: RigidTransform,
        ego_pose: RigidTransform,
        camera_height: f64,
    ) -> Result<Self> {
        CameraIntrinsics::new(intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy)?;
        check_rotation(&cam_from_ego.rotation, "cam_from_ego")?;
        check_rotation(&ego_pose.rotation, "ego_pose")?;
        if !(camera_height > 0.0 && camera_height.is_finite()) {
            return Err(Error::param("camera_height", format!("{camera_height} must be > 0")));
        }
        let rig = Self {
            intrinsics,
            cam_from_ego,
            ego_pose,
            camera_height,
        };
        let center_y = rig.camera_center().y;
        if (center_y + camera_height).abs() > 1e-6 {
            return Err(Error::param(
                "camera_height",
                format!(
                    "{camera_height} disagrees with cam_from_ego, which puts the camera at y = {center_y}"
                ),
            ));
        }
        Ok(rig)
    }

    /// Camera above the ego origin, looking forward, pitched down by
    /// `pitch_deg` degrees.
    pub fn mounted(
        intrinsics: CameraIntrinsics,
        camera_height: f64,
        pitch_deg: f64,
        ego_pose: RigidTransform,
    ) -> Result<Self> {
        let pitch = pitch_deg.to_radians();
        let (s, c) = pitch.sin_cos();
        // Rows are the camera axes expressed in the ego frame.
        let rotation = Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
        let center = Vector3::new(0.0, -camera_height, 0.0);
        let cam_from_ego = RigidTransform {
            rotation,
            translation: -(rotation * center),
        };
        Self::new(intrinsics, cam_from_ego, ego_pose, camera_height)
    }

    pub fn with_pose(&self, ego_pose: RigidTransform) -> Self {
        Self { ego_pose, ..*self }
    }

    /// Camera center in ego coordinates.
    pub fn camera_center(&self) -> Point3<f64> {
        let inv = self.cam_from_ego.inverse();
        Point3::from(inv.translation)
    }

    /// Back-projects pixel `(u, v)` onto the ground plane of this rig's ego
    /// frame. Rays at or above `HORIZON_MARGIN_DEG` below the horizontal are
    /// flagged invalid.
    pub fn pixel_to_ground(&self, u: f64, v: f64) -> GroundHit {
        let k = &self.intrinsics;
        let ray_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let ray = self.cam_from_ego.rotation.transpose() * ray_cam;
        let center = self.camera_center();
        let min_sin = HORIZON_MARGIN_DEG.to_radians().sin();
        let norm = ray.norm();
        if !(norm.is_finite() && ray.y / norm > min_sin) {
            return GroundHit {
                point: Point::origin(),
                valid: false,
            };
        }
        let s = -center.y / ray.y;
        if !(s > 0.0 && s.is_finite()) {
            return GroundHit {
                point: Point::origin(),
                valid: false,
            };
        }
        let hit = center + s * ray;
        GroundHit {
            point: Point::new(hit.x, hit.z),
            valid: true,
        }
    }

    /// Projects ground point `(x, z)` of this rig's ego frame into the image.
    /// Invalid when the point is behind the camera or outside the domain of
    /// [`CameraRig::pixel_to_ground`].
    pub fn ground_to_pixel(&self, ground: &Point) -> PixelHit {
        let p = Point3::new(ground.x, 0.0, ground.y);
        let pc = self.cam_from_ego.apply(&p);
        let k = &self.intrinsics;
        let u = k.fx * pc.x / pc.z + k.cx;
        let v = k.fy * pc.y / pc.z + k.cy;
        let ray = p - self.camera_center();
        let min_sin = HORIZON_MARGIN_DEG.to_radians().sin();
        let valid = pc.z > 0.0 && ray.y / ray.norm() > min_sin && u.is_finite() && v.is_finite();
        PixelHit { u, v, valid }
    }

    /// Image row of the vanishing point of the ego forward direction; this is
    /// the horizon for a camera with no roll. `None` when the forward
    /// direction does not project in front of the camera.
    pub fn horizon_row(&self) -> Option<f64> {
        let fwd = self.cam_from_ego.rotation * Vector3::z();
        if fwd.z <= 1e-12 {
            return None;
        }
        Some(self.intrinsics.fy * fwd.y / fwd.z + self.intrinsics.cy)
    }
}

/// Relative transform mapping `frame`'s ego coordinates into `reference`'s.
///
/// Returns the exact identity when both poses are equal, so the reference
/// frame itself takes the same arithmetic path as a frame with no motion.
pub fn relative_pose(reference: &CameraRig, frame: &CameraRig) -> RigidTransform {
    if reference.ego_pose == frame.ego_pose {
        return RigidTransform::identity();
    }
    reference.ego_pose.inverse().compose(&frame.ego_pose)
}

/// Maps a ground point from `frame`'s ego coordinates into `reference`'s.
pub fn ref_from_frame(reference: &CameraRig, frame: &CameraRig, point: &Point) -> Point {
    transform_ground_point(&relative_pose(reference, frame), point)
}

/// Applies a rigid transform to `(x, 0, z)` and drops the height.
pub fn transform_ground_point(t: &RigidTransform, point: &Point) -> Point {
    let q = t.apply(&Point3::new(point.x, 0.0, point.y));
    Point::new(q.x, q.z)
}
