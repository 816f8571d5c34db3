//! `LGKT` binary tensors.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "LGKT"
//! 4       4           version (u32 LE) = 1
//! 8       4           ndim (u32 LE)
//! 12      4 * ndim    dims (u32 LE each)
//! ...     4 * prod    payload (f32 LE), row-major, channel-last
//! ```

use super::FormatError;
use crate::tensor::FeatureMap;

pub const MAGIC: &[u8; 4] = b"LGKT";
pub const VERSION: u32 = 1;
/// Upper bound on `ndim`; keeps hostile headers from driving allocation.
pub const MAX_NDIM: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, FormatError> {
    let end = offset + 4;
    let slice = bytes.get(offset..end).ok_or(FormatError::Truncated {
        offset,
        expected: end,
        actual: bytes.len(),
    })?;
    Ok(u32::from_le_bytes(slice.try_into().expect("4 bytes")))
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let magic = bytes.get(0..4).ok_or(FormatError::Truncated {
        offset: 0,
        expected: 4,
        actual: bytes.len(),
    })?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { offset: 4, found: version });
    }
    let ndim = read_u32(bytes, 8)?;
    if ndim > MAX_NDIM {
        return Err(FormatError::Invalid {
            offset: 8,
            reason: format!("ndim {ndim} exceeds {MAX_NDIM}"),
        });
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for k in 0..ndim as usize {
        dims.push(read_u32(bytes, 12 + 4 * k)?);
    }
    let header = 12 + 4 * ndim as usize;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_mul(4))
        .ok_or(FormatError::Invalid {
            offset: 12,
            reason: "dimension product overflows".into(),
        })?;
    let expected = header.checked_add(count).ok_or(FormatError::Invalid {
        offset: 12,
        reason: "payload length overflows".into(),
    })?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            offset: header,
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes {
            offset: expected,
            extra: bytes.len() - expected,
        });
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for d in &t.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// `H × W × C` tensor. Values are narrowed to `f32`.
pub fn feature_map_to_tensor(map: &FeatureMap) -> Tensor {
    let (h, w, c) = map.dims();
    Tensor {
        dims: vec![h as u32, w as u32, c as u32],
        data: map.data().iter().map(|&v| v as f32).collect(),
    }
}

pub fn tensor_to_feature_map(t: &Tensor) -> Result<FeatureMap, FormatError> {
    let [h, w, c] = t.dims[..] else {
        return Err(FormatError::Invalid {
            offset: 8,
            reason: format!("expected a 3-D tensor, found {} dims", t.dims.len()),
        });
    };
    FeatureMap::new(
        h as usize,
        w as usize,
        c as usize,
        t.data.iter().map(|&v| v as f64).collect(),
    )
    .map_err(|e| FormatError::Invalid {
        offset: 12 + 4 * t.dims.len(),
        reason: e.to_string(),
    })
}

pub fn encode_feature_map(map: &FeatureMap) -> Vec<u8> {
    encode_tensor(&feature_map_to_tensor(map))
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<FeatureMap, FormatError> {
    tensor_to_feature_map(&decode_tensor(bytes)?)
}
