//! On-disk formats: `LGKT` binary tensors and versioned JSON documents.

mod json;
mod tensor_file;

use thiserror::Error;

pub use json::{
    estimate_from_json, estimate_to_json, from_json, graph_from_json, graph_to_json,
    provenance_from_json, provenance_to_json, rig_from_json, rig_to_json, scene_from_json,
    scene_to_json, sidecar_from_json, sidecar_to_json, to_json, warped_frame_from_parts,
    BevSidecar, GridDoc, JSON_VERSION,
};
pub use tensor_file::{
    decode_feature_map, decode_tensor, encode_feature_map, encode_tensor, feature_map_to_tensor,
    tensor_to_feature_map, Tensor, MAGIC, MAX_NDIM, VERSION,
};

/// Parse and validation failures. Binary errors carry byte offsets, JSON
/// errors carry the path of the offending value.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected \"LGKT\"")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported version {found} at byte {offset}")]
    UnsupportedVersion { offset: usize, found: u32 },

    #[error("truncated input at byte {offset}: expected {expected} bytes, got {actual}")]
    Truncated {
        offset: usize,
        expected: usize,
        actual: usize,
    },

    #[error("{extra} trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("invalid data at byte {offset}: {reason}")]
    Invalid { offset: usize, reason: String },

    #[error("JSON error at `{path}`: {message}")]
    Json { path: String, message: String },

    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
}
