//! Temporal aggregation of warped frames into a single BEV feature map.
//!
//! Only frames whose mask marks a cell valid take part in that cell's
//! reduction. Cells that no frame covers stay zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::bev::WarpedFrame;
use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregationOp {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for AggregationOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            other => Err(Error::param("op", format!("unknown aggregation `{other}`"))),
        }
    }
}

/// Per-cell transform applied to every frame before the reduction.
///
/// `Residual` computes `x + relu(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PreTransform {
    Identity,
    Residual {
        /// Row-major `channels × channels`.
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
}

impl PreTransform {
    pub fn channels(&self) -> Option<usize> {
        match self {
            Self::Identity => None,
            Self::Residual { bias, .. } => Some(bias.len()),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Identity => x.to_vec(),
            Self::Residual { weights, bias } => {
                let n = bias.len();
                (0..n)
                    .map(|i| {
                        let row = &weights[i * n..(i + 1) * n];
                        let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias[i];
                        x[i] + z.max(0.0)
                    })
                    .collect()
            }
        }
    }
}

/// Deterministic stand-in for the learned residual block. `None` gives the
/// identity; a seed gives Gaussian weights with variance `1 / channels`.
pub fn default_pre_transform(seed: Option<u64>, channels: usize) -> PreTransform {
    let Some(seed) = seed else {
        return PreTransform::Identity;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = 1.0 / (channels.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let weights = (0..channels * channels).map(|_| normal.sample(&mut rng)).collect();
    let bias = (0..channels).map(|_| 0.1 * normal.sample(&mut rng)).collect();
    PreTransform::Residual { weights, bias }
}

/// Aggregated BEV features with the union of the input masks.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedBev {
    pub features: FeatureMap,
    pub coverage: BinaryMask,
    pub frame_count: usize,
}

pub fn aggregate(
    frames: &[WarpedFrame],
    op: AggregationOp,
    pre_transform: &PreTransform,
) -> Result<AggregatedBev> {
    let first = frames.first().ok_or(Error::EmptyInput("frames"))?;
    let (h, w, ch) = first.features.dims();
    for (i, f) in frames.iter().enumerate() {
        if f.features.dims() != (h, w, ch) {
            let (fh, fw, fc) = f.features.dims();
            return Err(Error::shape(
                "aggregate frames",
                format!("{h}x{w}x{ch}"),
                format!("{fh}x{fw}x{fc} (frame {i})"),
            ));
        }
        if (f.mask.height(), f.mask.width()) != (h, w) {
            return Err(Error::shape(
                "aggregate masks",
                format!("{h}x{w}"),
                format!("{}x{} (frame {i})", f.mask.height(), f.mask.width()),
            ));
        }
    }
    if let Some(n) = pre_transform.channels() {
        if n != ch {
            return Err(Error::shape("pre_transform channels", ch, n));
        }
    }

    let mut data = vec![0.0; h * w * ch];
    let mut coverage = vec![false; h * w];
    data.par_chunks_mut(w * ch)
        .zip(coverage.par_chunks_mut(w))
        .enumerate()
        .for_each(|(row, (out_row, cov_row))| {
            let mut acc = vec![0.0; ch];
            for col in 0..w {
                let valid: Vec<Vec<f64>> = frames
                    .iter()
                    .filter(|f| f.mask.get(row, col))
                    .map(|f| pre_transform.apply(f.features.cell(row, col)))
                    .collect();
                if valid.is_empty() {
                    continue;
                }
                cov_row[col] = true;
                reduce(&valid, op, &mut acc);
                out_row[col * ch..(col + 1) * ch].copy_from_slice(&acc);
            }
        });

    Ok(AggregatedBev {
        features: FeatureMap::new(h, w, ch, data)?,
        coverage: BinaryMask::new(h, w, coverage)?,
        frame_count: frames.len(),
    })
}

fn reduce(values: &[Vec<f64>], op: AggregationOp, out: &mut [f64]) {
    match op {
        AggregationOp::Max => {
            for (k, o) in out.iter_mut().enumerate() {
                *o = values.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
            }
        }
        AggregationOp::Mean => {
            let n = values.len() as f64;
            for (k, o) in out.iter_mut().enumerate() {
                let column: Vec<f64> = values.iter().map(|v| v[k]).collect();
                *o = pairwise_sum(&column) / n;
            }
        }
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}
