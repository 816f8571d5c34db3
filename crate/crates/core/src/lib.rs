//! Lane-graph extraction toolkit.
//!
//! Building blocks for turning a short video clip into a bird's-eye-view
//! lane graph:
//!
//! - [`lane_graph`]: directed graphs of quadratic Bezier centerlines.
//! - [`camera`]: pinhole intrinsics, rigid poses and flat-ground projection.
//! - [`bev`]: backward warping of image feature maps onto a reference BEV grid.
//! - [`aggregate`]: mask-gated max/mean fusion of warped frames.
//! - [`stetr`]: spatial-temporal sinusoidal embeddings and token flattening.
//! - [`postmerge`]: merging per-frame estimates into the reference frame.
//! - [`metrics`]: centerline, detection and connectivity F-scores.
//! - [`synthetic`]: deterministic scenes, estimates and rendered images.
//! - [`io`]: `LGKT` tensors and versioned JSON documents.

pub mod aggregate;
pub mod bev;
pub mod camera;
mod error;
pub mod io;
pub mod lane_graph;
pub mod metrics;
pub mod postmerge;
pub mod stetr;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
