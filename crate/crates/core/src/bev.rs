//! Flat-ground warping of image-plane feature maps onto the reference BEV grid.
//!
//! The grid is traversed backward: every BEV cell center is mapped into the
//! source frame's image and sampled bilinearly, so the output has no holes.
//! Grid row 0 is the nearest row (smallest `z`), column 0 the leftmost
//! (smallest `x`).

use rayon::prelude::*;

use crate::camera::{relative_pose, transform_ground_point, CameraRig, RigidTransform};
use crate::error::{Error, Result};
use crate::lane_graph::{Point, Window};
use crate::tensor::{BinaryMask, FeatureMap};

/// Target BEV window plus the margin that defines the extended FOV grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Meters per cell.
    pub resolution: f64,
    /// Meters added on every side of the target window.
    pub fov_margin: f64,
}

impl Default for BevGrid {
    fn default() -> Self {
        Self {
            x_min: -25.0,
            x_max: 25.0,
            z_min: 1.0,
            z_max: 50.0,
            resolution: 0.25,
            fov_margin: 12.0,
        }
    }
}

fn whole_cells(extent: f64, resolution: f64, name: &'static str) -> Result<usize> {
    let cells = extent / resolution;
    let rounded = cells.round();
    if (cells - rounded).abs() > 1e-9 * cells.abs().max(1.0) || rounded < 0.0 {
        return Err(Error::param(
            name,
            format!("{extent} m is not a whole number of {resolution} m cells"),
        ));
    }
    Ok(rounded as usize)
}

impl BevGrid {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.x_min,
            self.x_max,
            self.z_min,
            self.z_max,
            self.resolution,
            self.fov_margin,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("grid", "all bounds must be finite"));
        }
        if !(self.x_min < self.x_max) {
            return Err(Error::param("x_min", "must be below x_max"));
        }
        if !(self.z_min < self.z_max) {
            return Err(Error::param("z_min", "must be below z_max"));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::param("resolution", "must be > 0"));
        }
        if self.fov_margin < 0.0 {
            return Err(Error::param("fov_margin", "must be >= 0"));
        }
        whole_cells(self.x_max - self.x_min, self.resolution, "x_max - x_min")?;
        whole_cells(self.z_max - self.z_min, self.resolution, "z_max - z_min")?;
        whole_cells(self.fov_margin, self.resolution, "fov_margin")?;
        Ok(())
    }

    /// `(H', W')` of the target window.
    pub fn target_dims(&self) -> (usize, usize) {
        (
            whole_cells(self.z_max - self.z_min, self.resolution, "z").unwrap_or(0),
            whole_cells(self.x_max - self.x_min, self.resolution, "x").unwrap_or(0),
        )
    }

    pub fn margin_cells(&self) -> usize {
        whole_cells(self.fov_margin, self.resolution, "fov_margin").unwrap_or(0)
    }

    /// `(H'', W'')` of the extended FOV grid.
    pub fn fov_dims(&self) -> (usize, usize) {
        let (h, w) = self.target_dims();
        let m = self.margin_cells();
        (h + 2 * m, w + 2 * m)
    }

    /// Center of FOV cell `(row, col)` in reference ego coordinates.
    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        let x0 = self.x_min - self.fov_margin;
        let z0 = self.z_min - self.fov_margin;
        Point::new(
            x0 + (col as f64 + 0.5) * self.resolution,
            z0 + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// FOV cell containing `p`, if any.
    pub fn cell_of(&self, p: &Point) -> Option<(usize, usize)> {
        let (h, w) = self.fov_dims();
        let col = ((p.x - (self.x_min - self.fov_margin)) / self.resolution).floor();
        let row = ((p.y - (self.z_min - self.fov_margin)) / self.resolution).floor();
        if col < 0.0 || row < 0.0 || col >= w as f64 || row >= h as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    pub fn target_window(&self) -> Window {
        Window {
            x_min: self.x_min,
            x_max: self.x_max,
            z_min: self.z_min,
            z_max: self.z_max,
        }
    }

    pub fn fov_window(&self) -> Window {
        Window {
            x_min: self.x_min - self.fov_margin,
            x_max: self.x_max + self.fov_margin,
            z_min: self.z_min - self.fov_margin,
            z_max: self.z_max + self.fov_margin,
        }
    }
}

/// A frame's features resampled onto the reference FOV grid, with the cells
/// that received valid samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedFrame {
    pub features: FeatureMap,
    pub mask: BinaryMask,
    /// Frame offset relative to the reference frame (negative = past).
    pub relative_time: i32,
}

/// Warps `features`, observed by `frame_rig`, into `ref_rig`'s BEV grid.
pub fn warp_frame(
    features: &FeatureMap,
    frame_rig: &CameraRig,
    ref_rig: &CameraRig,
    grid: &BevGrid,
    relative_time: i32,
) -> Result<WarpedFrame> {
    let frame_from_ref = relative_pose(frame_rig, ref_rig);
    warp_with(features, frame_rig, Some(&frame_from_ref), grid, relative_time)
}

/// Warps the reference frame's own features; no pose composition at all.
pub fn warp_reference(features: &FeatureMap, rig: &CameraRig, grid: &BevGrid) -> Result<WarpedFrame> {
    warp_with(features, rig, None, grid, 0)
}

fn warp_with(
    features: &FeatureMap,
    frame_rig: &CameraRig,
    frame_from_ref: Option<&RigidTransform>,
    grid: &BevGrid,
    relative_time: i32,
) -> Result<WarpedFrame> {
    grid.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyInput("feature map"));
    }
    let (h, w) = grid.fov_dims();
    let ch = features.channels();
    let mut data = vec![0.0; h * w * ch];
    let mut mask = vec![false; h * w];

    data.par_chunks_mut(w * ch)
        .zip(mask.par_chunks_mut(w))
        .enumerate()
        .for_each(|(row, (out_row, mask_row))| {
            for col in 0..w {
                let Some((u, v)) = source_pixel(frame_rig, frame_from_ref, grid, row, col) else {
                    continue;
                };
                let out = &mut out_row[col * ch..(col + 1) * ch];
                if features.bilinear_sample_into(u, v, out) {
                    mask_row[col] = true;
                }
            }
        });

    Ok(WarpedFrame {
        features: FeatureMap::new(h, w, ch, data)?,
        mask: BinaryMask::new(h, w, mask)?,
        relative_time,
    })
}

/// Image coordinates feeding FOV cell `(row, col)`, if the projection is valid.
#[inline]
fn source_pixel(
    frame_rig: &CameraRig,
    frame_from_ref: Option<&RigidTransform>,
    grid: &BevGrid,
    row: usize,
    col: usize,
) -> Option<(f64, f64)> {
    let center = grid.cell_center(row, col);
    let local = match frame_from_ref {
        Some(t) => transform_ground_point(t, &center),
        None => center,
    };
    let px = frame_rig.ground_to_pixel(&local);
    px.valid.then_some((px.u, px.v))
}

/// Validity mask of [`warp_frame`] without sampling any features.
/// `image_dims` is `(height, width)` of the frame's feature map.
pub fn compute_mask(
    frame_rig: &CameraRig,
    ref_rig: &CameraRig,
    grid: &BevGrid,
    image_dims: (usize, usize),
) -> Result<BinaryMask> {
    grid.validate()?;
    let (ih, iw) = image_dims;
    if ih == 0 || iw == 0 {
        return Err(Error::EmptyInput("image dims"));
    }
    let frame_from_ref = relative_pose(frame_rig, ref_rig);
    let (h, w) = grid.fov_dims();
    let (max_u, max_v) = ((iw - 1) as f64, (ih - 1) as f64);
    let mut mask = vec![false; h * w];
    mask.par_chunks_mut(w).enumerate().for_each(|(row, mask_row)| {
        for (col, cell) in mask_row.iter_mut().enumerate() {
            if let Some((u, v)) = source_pixel(frame_rig, Some(&frame_from_ref), grid, row, col) {
                *cell = u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v;
            }
        }
    });
    BinaryMask::new(h, w, mask)
}

/// Extracts the central target window from a FOV-sized map.
pub fn crop_to_target(map: &FeatureMap, grid: &BevGrid) -> Result<FeatureMap> {
    grid.validate()?;
    let (th, tw) = grid.target_dims();
    let (fh, fw) = grid.fov_dims();
    if map.height() < th || map.width() < tw {
        return Err(Error::shape(
            "crop_to_target",
            format!("at least {th}x{tw} (target)"),
            format!("{}x{}", map.height(), map.width()),
        ));
    }
    if (map.height(), map.width()) != (fh, fw) {
        return Err(Error::shape(
            "crop_to_target",
            format!("{fh}x{fw} (FOV grid)"),
            format!("{}x{}", map.height(), map.width()),
        ));
    }
    let m = grid.margin_cells();
    let ch = map.channels();
    let mut data = Vec::with_capacity(th * tw * ch);
    for row in m..m + th {
        for col in m..m + tw {
            data.extend_from_slice(map.cell(row, col));
        }
    }
    FeatureMap::new(th, tw, ch, data)
}

/// Mask counterpart of [`crop_to_target`].
pub fn crop_mask_to_target(mask: &BinaryMask, grid: &BevGrid) -> Result<BinaryMask> {
    let (th, tw) = grid.target_dims();
    let (fh, fw) = grid.fov_dims();
    if (mask.height(), mask.width()) != (fh, fw) {
        return Err(Error::shape(
            "crop_mask_to_target",
            format!("{fh}x{fw}"),
            format!("{}x{}", mask.height(), mask.width()),
        ));
    }
    let m = grid.margin_cells();
    let mut out = Vec::with_capacity(th * tw);
    for row in m..m + th {
        for col in m..m + tw {
            out.push(mask.get(row, col));
        }
    }
    BinaryMask::new(th, tw, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraIntrinsics, RigidTransform};

    fn small_grid(margin: f64) -> BevGrid {
        BevGrid {
            x_min: -10.0,
            x_max: 10.0,
            z_min: 1.0,
            z_max: 30.0,
            resolution: 0.5,
            fov_margin: margin,
        }
    }

    fn rig(pose: RigidTransform) -> CameraRig {
        let k = CameraIntrinsics::from_fov(96, 64, 90.0).unwrap();
        CameraRig::mounted(k, 1.6, 4.0, pose).unwrap()
    }

    #[test]
    fn default_target_dims() {
        let g = BevGrid::default();
        g.validate().unwrap();
        assert_eq!(g.target_dims(), (196, 200));
        assert_eq!(g.margin_cells(), 48);
        assert_eq!(g.fov_dims(), (292, 296));
    }

    #[test]
    fn grid_validation() {
        let mut g = BevGrid::default();
        g.resolution = 0.3;
        assert!(g.validate().is_err());
        let mut g = BevGrid::default();
        g.x_max = g.x_min;
        assert!(g.validate().is_err());
        let mut g = BevGrid::default();
        g.fov_margin = 0.1;
        assert!(g.validate().is_err());
    }

    #[test]
    fn crop_examples() {
        let g0 = small_grid(0.0);
        let (h, w) = g0.fov_dims();
        let map = FeatureMap::from_fn(h, w, 2, |r, c, k| (r * w + c) as f64 + k as f64 * 0.5).unwrap();
        assert_eq!(crop_to_target(&map, &g0).unwrap(), map);

        let g10 = BevGrid {
            resolution: 0.25,
            fov_margin: 10.0,
            ..small_grid(0.0)
        };
        let (fh, fw) = g10.fov_dims();
        let (th, tw) = g10.target_dims();
        assert_eq!((fh - th, fw - tw), (80, 80));
        let big = FeatureMap::from_fn(fh, fw, 1, |r, c, _| (r * 1000 + c) as f64).unwrap();
        let cropped = crop_to_target(&big, &g10).unwrap();
        assert_eq!(cropped.dims(), (th, tw, 1));
        assert_eq!(cropped.get(0, 0, 0), big.get(40, 40, 0));

        let tiny = FeatureMap::zeros(3, 3, 1);
        assert!(crop_to_target(&tiny, &g10).is_err());
    }

    #[test]
    fn constant_features_fill_valid_cells() {
        let r = rig(RigidTransform::identity());
        let map = FeatureMap::filled(64, 96, 3, 2.5);
        let g = small_grid(4.0);
        let out = warp_frame(&map, &r, &r, &g, 0).unwrap();
        assert!(out.mask.count() > 0);
        for row in 0..out.mask.height() {
            for col in 0..out.mask.width() {
                let cell = out.features.cell(row, col);
                if out.mask.get(row, col) {
                    assert!(cell.iter().all(|&v| (v - 2.5).abs() < 1e-12));
                } else {
                    assert!(cell.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn reference_path_is_bit_identical() {
        let r = rig(RigidTransform::from_yaw(0.4, 3.0, -7.0));
        let map = FeatureMap::from_fn(64, 96, 2, |row, c, k| ((row * 7 + c * 3 + k) % 11) as f64).unwrap();
        let g = small_grid(2.0);
        let a = warp_reference(&map, &r, &g).unwrap();
        let b = warp_frame(&map, &r, &r, &g, 0).unwrap();
        assert_eq!(a.mask, b.mask);
        let bits = |m: &FeatureMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.features), bits(&b.features));
    }

    #[test]
    fn mask_matches_compute_mask() {
        let reference = rig(RigidTransform::identity());
        let frame = rig(RigidTransform::from_yaw(0.1, 0.5, -3.0));
        let map = FeatureMap::filled(64, 96, 1, 1.0);
        let g = small_grid(4.0);
        let warped = warp_frame(&map, &frame, &reference, &g, -1).unwrap();
        let mask = compute_mask(&frame, &reference, &g, (64, 96)).unwrap();
        assert_eq!(warped.mask, mask);
    }

    #[test]
    fn cells_behind_camera_are_masked() {
        let reference = rig(RigidTransform::identity());
        let g = small_grid(4.0);
        let mask = compute_mask(&reference, &reference, &g, (64, 96)).unwrap();
        for col in 0..mask.width() {
            for row in 0..mask.height() {
                if g.cell_center(row, col).y < 0.0 {
                    assert!(!mask.get(row, col));
                }
            }
        }
        let (row, col) = g.cell_of(&Point::new(0.0, 10.0)).unwrap();
        assert!(mask.get(row, col));
    }

    #[test]
    fn ninety_degree_frustum() {
        // Level camera, 90° horizontal FOV: valid cells satisfy |x| <= z.
        let k = CameraIntrinsics::new(50.0, 50.0, 50.0, 40.0).unwrap();
        let r = CameraRig::mounted(k, 1.5, 0.0, RigidTransform::identity()).unwrap();
        let g = small_grid(0.0);
        let mask = compute_mask(&r, &r, &g, (81, 101)).unwrap();
        let mut checked = 0;
        for row in 0..mask.height() {
            for col in 0..mask.width() {
                let c = g.cell_center(row, col);
                if c.x.abs() > c.y + 0.05 {
                    assert!(!mask.get(row, col), "{c:?}");
                    checked += 1;
                } else if c.x.abs() < c.y - 0.05 && c.y > 4.0 {
                    assert!(mask.get(row, col), "{c:?}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }
}
