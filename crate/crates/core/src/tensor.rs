//! Dense feature grids and bilinear sampling.
//!
//! Layout is row-major, channel-last: the feature vector of cell `(row, col)`
//! occupies `data[(row * width + col) * channels..][..channels]`.

use crate::error::{Error, Result};

/// A dense `height × width × channels` grid of finite scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Result of a bilinear lookup. Out-of-bounds lookups carry an all-zero
/// vector and `in_bounds == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub in_bounds: bool,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::shape("FeatureMap data", expected, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "data",
                format!("non-finite value at flat index {pos}"),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds a map by evaluating `f(row, col, channel)` for every entry.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * self.channels
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let o = self.offset(row, col);
        &self.data[o..o + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let o = self.offset(row, col);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.offset(row, col) + channel]
    }

    /// Bilinear lookup at continuous column `u` and row `v`.
    ///
    /// Integer coordinates return the stored cell exactly. Coordinates
    /// outside `[0, W-1] × [0, H-1]` yield zeros and `in_bounds == false`.
    pub fn bilinear_sample(&self, u: f64, v: f64) -> Sample {
        let mut values = vec![0.0; self.channels];
        let in_bounds = self.bilinear_sample_into(u, v, &mut values);
        Sample { values, in_bounds }
    }

    /// Allocation-free variant of [`FeatureMap::bilinear_sample`]; writes into
    /// `out` (length `channels`) and returns the in-bounds flag.
    pub fn bilinear_sample_into(&self, u: f64, v: f64, out: &mut [f64]) -> bool {
        debug_assert_eq!(out.len(), self.channels);
        out.iter_mut().for_each(|x| *x = 0.0);
        if self.height == 0 || self.width == 0 {
            return false;
        }
        let max_u = (self.width - 1) as f64;
        let max_v = (self.height - 1) as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) {
            return false;
        }
        let c0 = u.floor() as usize;
        let r0 = v.floor() as usize;
        let fu = u - c0 as f64;
        let fv = v - r0 as f64;
        // Neighbours past the last row/column only appear with zero weight.
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);

        let w00 = (1.0 - fu) * (1.0 - fv);
        let w01 = fu * (1.0 - fv);
        let w10 = (1.0 - fu) * fv;
        let w11 = fu * fv;
        let p00 = self.cell(r0, c0);
        if fu == 0.0 && fv == 0.0 {
            out.copy_from_slice(p00);
            return true;
        }
        let p01 = self.cell(r0, c1);
        let p10 = self.cell(r1, c0);
        let p11 = self.cell(r1, c1);
        for k in 0..self.channels {
            out[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
        }
        true
    }

    /// Applies `f` to every cell's feature vector. `f` must return a vector
    /// of the same length.
    pub fn map_cells(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<FeatureMap> {
        let mut data = Vec::with_capacity(self.data.len());
        for chunk in self.data.chunks_exact(self.channels.max(1)) {
            let mapped = f(chunk);
            if mapped.len() != self.channels {
                return Err(Error::shape("map_cells output", self.channels, mapped.len()));
            }
            data.extend(mapped);
        }
        FeatureMap::new(self.height, self.width, self.channels, data)
    }
}

/// Per-cell validity grid with values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("BinaryMask data", height * width, data.len()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds a mask from raw `{0,1}` bytes; anything else is rejected.
    pub fn from_bits(height: usize, width: usize, bits: &[u8]) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::param(
                "mask",
                format!("value {} at index {pos} is not 0 or 1", bits[pos]),
            ));
        }
        Self::new(height, width, bits.iter().map(|&b| b == 1).collect())
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Cell-wise OR. Panics if the shapes differ.
    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize, c: usize) -> FeatureMap {
        FeatureMap::from_fn(h, w, c, |r, col, k| (r * 100 + col * 10 + k) as f64).unwrap()
    }

    #[test]
    fn integer_sample_is_stored_value() {
        let m = ramp(4, 5, 2);
        let s = m.bilinear_sample(3.0, 2.0);
        assert!(s.in_bounds);
        assert_eq!(s.values, m.cell(2, 3));
    }

    #[test]
    fn constant_field_midpoint() {
        let m = FeatureMap::filled(2, 2, 3, 1.75);
        let s = m.bilinear_sample(0.5, 0.5);
        assert_eq!(s.values, vec![1.75; 3]);
    }

    #[test]
    fn linear_midpoint() {
        let m = FeatureMap::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(m.bilinear_sample(0.5, 0.0).values, vec![0.5]);
    }

    #[test]
    fn out_of_bounds_is_flagged_zero() {
        let m = FeatureMap::filled(3, 3, 2, 4.0);
        for (u, v) in [(-0.01, 1.0), (2.01, 1.0), (1.0, -1.0), (1.0, 2.5), (f64::NAN, 0.0)] {
            let s = m.bilinear_sample(u, v);
            assert!(!s.in_bounds, "({u},{v})");
            assert_eq!(s.values, vec![0.0, 0.0]);
        }
        // The far edge itself is in bounds.
        assert!(m.bilinear_sample(2.0, 2.0).in_bounds);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(FeatureMap::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(FeatureMap::new(1, 1, 1, vec![f64::INFINITY]).is_err());
        assert!(BinaryMask::from_bits(1, 2, &[0, 2]).is_err());
    }

    #[test]
    fn map_cells_examples() {
        let m = ramp(3, 2, 2);
        assert_eq!(m.map_cells(|x| x.to_vec()).unwrap(), m);
        let z = FeatureMap::zeros(2, 2, 2);
        let neg = z.map_cells(|x| x.iter().map(|v| -v).collect()).unwrap();
        assert!(neg.data().iter().all(|&v| v == 0.0));
        let ones = FeatureMap::filled(2, 3, 1, 1.0);
        let twos = ones.map_cells(|x| x.iter().map(|v| 2.0 * v).collect()).unwrap();
        assert_eq!(twos, FeatureMap::filled(2, 3, 1, 2.0));
        assert!(ones.map_cells(|_| vec![]).is_err());
    }

    proptest! {
        #[test]
        fn bilinear_function_is_reproduced(
            a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -1.0f64..1.0,
            u in 0.0f64..6.0, v in 0.0f64..4.0,
        ) {
            let f = |u: f64, v: f64| a + b * u + c * v + d * u * v;
            let m = FeatureMap::from_fn(5, 7, 1, |r, col, _| f(col as f64, r as f64)).unwrap();
            let s = m.bilinear_sample(u, v);
            prop_assert!(s.in_bounds);
            prop_assert!((s.values[0] - f(u, v)).abs() <= 1e-6);
        }

        #[test]
        fn sampling_is_continuous(
            seed in proptest::collection::vec(-3.0f64..3.0, 16),
            u in 0.0f64..2.9, v in 0.0f64..2.9, du in -0.05f64..0.05, dv in -0.05f64..0.05,
        ) {
            let m = FeatureMap::new(4, 4, 1, seed.clone()).unwrap();
            let (u2, v2) = ((u + du).clamp(0.0, 3.0), (v + dv).clamp(0.0, 3.0));
            let eps = (u2 - u).abs().max((v2 - v).abs());
            let lo = seed.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = seed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let a = m.bilinear_sample(u, v).values[0];
            let b = m.bilinear_sample(u2, v2).values[0];
            prop_assert!((a - b).abs() <= eps * (hi - lo) * 2.0 + 1e-12);
        }
    }
}
