//! Spatial-temporal sinusoidal embeddings, sequence flattening, and a small
//! untrained query decoder used to exercise output contracts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

/// Channel budget for the embeddings. The temporal block comes first, then
/// the row block, then the column block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingConfig {
    pub feature_dim: usize,
    pub temporal_dim: usize,
    pub spatial_dims: usize,
    pub base_frequency: f64,
}

impl EmbeddingConfig {
    /// About a quarter of the channels for time, the rest split evenly
    /// between row and column. `feature_dim` must be a multiple of 4.
    pub fn new(feature_dim: usize) -> Result<Self> {
        if feature_dim == 0 || feature_dim % 4 != 0 {
            return Err(Error::param(
                "feature_dim",
                format!("{feature_dim} must be a positive multiple of 4"),
            ));
        }
        let mut temporal_dim = (feature_dim / 4).max(2);
        temporal_dim += temporal_dim % 2;
        // Each spatial half needs sin/cos pairs, so spatial_dims % 4 == 0.
        while (feature_dim - temporal_dim) % 4 != 0 {
            temporal_dim += 2;
        }
        let cfg = Self {
            feature_dim,
            temporal_dim,
            spatial_dims: feature_dim - temporal_dim,
            base_frequency: 10_000.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.temporal_dim + self.spatial_dims != self.feature_dim {
            return Err(Error::param(
                "embedding",
                format!(
                    "temporal_dim {} + spatial_dims {} != feature_dim {}",
                    self.temporal_dim, self.spatial_dims, self.feature_dim
                ),
            ));
        }
        if self.temporal_dim % 2 != 0 || self.spatial_dims % 4 != 0 {
            return Err(Error::param(
                "embedding",
                "temporal_dim must be even and spatial_dims a multiple of 4",
            ));
        }
        if !(self.base_frequency > 0.0 && self.base_frequency.is_finite()) {
            return Err(Error::param("base_frequency", "must be positive"));
        }
        Ok(())
    }
}

/// `[sin(ω_0 x), cos(ω_0 x), sin(ω_1 x), …]` with `ω_k = base^(-2k/dim)`.
fn sinusoid(x: f64, dim: usize, base: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let omega = base.powf(-2.0 * k as f64 / dim as f64);
        let (s, c) = (omega * x).sin_cos();
        out.push(s);
        out.push(c);
    }
    out
}

/// Embedding of a signed frame offset (past frames are negative).
pub fn temporal_embedding(t: f64, cfg: &EmbeddingConfig) -> Vec<f64> {
    sinusoid(t, cfg.temporal_dim, cfg.base_frequency)
}

/// Row half followed by column half.
pub fn spatial_embedding(i: usize, j: usize, cfg: &EmbeddingConfig) -> Vec<f64> {
    let half = cfg.spatial_dims / 2;
    let mut out = sinusoid(i as f64, half, cfg.base_frequency);
    out.extend(sinusoid(j as f64, half, cfg.base_frequency));
    out
}

/// Source location of one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenOrigin {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
}

/// `L × F` token matrix (row-major) with per-token provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub feature_dim: usize,
    pub tokens: Vec<f64>,
    pub provenance: Vec<TokenOrigin>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn token(&self, index: usize) -> &[f64] {
        &self.tokens[index * self.feature_dim..(index + 1) * self.feature_dim]
    }
}

/// Flattens `N` maps of `X × Y × F` into `N·X·Y` tokens, adding
/// `[temporal ‖ spatial]` embeddings. Token order is frame, row, column.
pub fn flatten_with_embeddings(
    frames: &[FeatureMap],
    offsets: &[i32],
    cfg: &EmbeddingConfig,
) -> Result<TokenSequence> {
    cfg.validate()?;
    if frames.len() != offsets.len() {
        return Err(Error::shape("offsets", frames.len(), offsets.len()));
    }
    let Some(first) = frames.first() else {
        return Ok(TokenSequence {
            feature_dim: cfg.feature_dim,
            tokens: vec![],
            provenance: vec![],
        });
    };
    let (h, w, _) = first.dims();
    for (n, f) in frames.iter().enumerate() {
        if f.dims() != (h, w, cfg.feature_dim) {
            let (fh, fw, fc) = f.dims();
            return Err(Error::shape(
                "flatten frames",
                format!("{h}x{w}x{}", cfg.feature_dim),
                format!("{fh}x{fw}x{fc} (frame {n})"),
            ));
        }
    }
    let spatial: Vec<Vec<f64>> = (0..h)
        .flat_map(|i| (0..w).map(move |j| (i, j)))
        .map(|(i, j)| spatial_embedding(i, j, cfg))
        .collect();
    let mut tokens = Vec::with_capacity(frames.len() * h * w * cfg.feature_dim);
    let mut provenance = Vec::with_capacity(frames.len() * h * w);
    for (n, (frame, &t)) in frames.iter().zip(offsets).enumerate() {
        let temporal = temporal_embedding(t as f64, cfg);
        for i in 0..h {
            for j in 0..w {
                let pos = temporal.iter().chain(&spatial[i * w + j]);
                tokens.extend(frame.cell(i, j).iter().zip(pos).map(|(x, e)| x + e));
                provenance.push(TokenOrigin {
                    frame: n,
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(TokenSequence {
        feature_dim: cfg.feature_dim,
        tokens,
        provenance,
    })
}

/// Outputs of one decoder query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutput {
    /// Three control points, normalized to the target window `[0, 1]²`.
    pub control_points: [[f64; 2]; 3],
    /// Existence probability in `(0, 1)`.
    pub probability: f64,
    pub association: Vec<f64>,
    /// Attention over the input tokens; sums to one.
    pub attention: Vec<f64>,
}

pub const DEFAULT_ASSOC_DIM: usize = 8;

/// One cross-attention layer with fixed-seed random weights, followed by
/// linear heads squashed into their output ranges.
pub fn toy_query_decoder(
    seq: &TokenSequence,
    num_queries: usize,
    assoc_dim: usize,
    seed: u64,
) -> Result<Vec<QueryOutput>> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("token sequence"));
    }
    if num_queries == 0 {
        return Err(Error::param("num_queries", "must be >= 1"));
    }
    let f = seq.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (f as f64).sqrt();
    let normal = Normal::new(0.0, scale).expect("finite std");
    let mut matrix = |rows: usize, cols: usize| -> Vec<f64> {
        (0..rows * cols).map(|_| normal.sample(&mut rng)).collect()
    };
    let queries = matrix(num_queries, f);
    let w_key = matrix(f, f);
    let w_value = matrix(f, f);
    let w_points = matrix(6, f);
    let w_prob = matrix(1, f);
    let w_assoc = matrix(assoc_dim, f);

    let matvec = |m: &[f64], rows: usize, x: &[f64]| -> Vec<f64> {
        (0..rows)
            .map(|r| m[r * f..(r + 1) * f].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    };
    let keys: Vec<Vec<f64>> = (0..seq.len()).map(|i| matvec(&w_key, f, seq.token(i))).collect();
    let values: Vec<Vec<f64>> = (0..seq.len()).map(|i| matvec(&w_value, f, seq.token(i))).collect();

    let sigmoid = |z: f64| 1.0 / (1.0 + (-z.clamp(-30.0, 30.0)).exp());
    let mut out = Vec::with_capacity(num_queries);
    for q in 0..num_queries {
        let query = &queries[q * f..(q + 1) * f];
        let logits: Vec<f64> = keys
            .iter()
            .map(|k| scale * k.iter().zip(query).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let attention = softmax(&logits);
        let mut context = vec![0.0; f];
        for (a, v) in attention.iter().zip(&values) {
            for (c, x) in context.iter_mut().zip(v) {
                *c += a * x;
            }
        }
        let context: Vec<f64> = context.iter().zip(query).map(|(c, q)| c + q).collect();
        let pts = matvec(&w_points, 6, &context);
        let prob = matvec(&w_prob, 1, &context)[0];
        let assoc = matvec(&w_assoc, assoc_dim, &context);
        out.push(QueryOutput {
            control_points: [
                [sigmoid(pts[0]), sigmoid(pts[1])],
                [sigmoid(pts[2]), sigmoid(pts[3])],
                [sigmoid(pts[4]), sigmoid(pts[5])],
            ],
            probability: sigmoid(prob),
            association: assoc.into_iter().map(f64::tanh).collect(),
            attention,
        });
    }
    Ok(out)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(f: usize) -> EmbeddingConfig {
        EmbeddingConfig::new(f).unwrap()
    }

    #[test]
    fn config_split() {
        let c = cfg(256);
        assert_eq!((c.temporal_dim, c.spatial_dims), (64, 192));
        let c = cfg(8);
        assert_eq!(c.temporal_dim + c.spatial_dims, 8);
        assert_eq!(c.spatial_dims % 4, 0);
        assert!(EmbeddingConfig::new(6).is_err());
        let bad = EmbeddingConfig {
            temporal_dim: 3,
            spatial_dims: 5,
            ..cfg(8)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn temporal_examples() {
        let c = cfg(32);
        let zero = temporal_embedding(0.0, &c);
        assert_eq!(zero.len(), c.temporal_dim);
        for (k, v) in zero.iter().enumerate() {
            assert_eq!(*v, if k % 2 == 0 { 0.0 } else { 1.0 });
        }
        let one = temporal_embedding(1.0, &c);
        assert!((one[0] - 0.841_470_984_807_896_5).abs() < 1e-12);
        assert!((one[1] - 0.540_302_305_868_139_8).abs() < 1e-12);
        // Second pair uses ω_1 = 10000^(-2/8).
        assert!((one[2] - (10_000f64.powf(-0.25)).sin()).abs() < 1e-15);
        let past = temporal_embedding(-2.0, &c);
        assert!((past[0] + 2f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn spatial_examples() {
        let c = cfg(16);
        let half = c.spatial_dims / 2;
        let origin = spatial_embedding(0, 0, &c);
        for (k, v) in origin.iter().enumerate() {
            assert_eq!(*v, if k % 2 == 0 { 0.0 } else { 1.0 });
        }
        let a = spatial_embedding(3, 7, &c);
        let b = spatial_embedding(7, 3, &c);
        assert_eq!(&a[..half], &b[half..]);
        assert_eq!(&a[half..], &b[..half]);
    }

    #[test]
    fn spatial_injective_on_grid() {
        let c = cfg(32);
        let all: Vec<Vec<f64>> = (0..32)
            .flat_map(|i| (0..32).map(move |j| (i, j)))
            .map(|(i, j)| spatial_embedding(i, j, &c))
            .collect();
        let mut min = f64::INFINITY;
        for a in 0..all.len() {
            for b in a + 1..all.len() {
                let d: f64 = all[a].iter().zip(&all[b]).map(|(x, y)| (x - y).powi(2)).sum();
                min = min.min(d.sqrt());
            }
        }
        assert!(min > 0.0, "min pairwise distance {min}");
    }

    #[test]
    fn flatten_counts_and_pure_embeddings() {
        let c = cfg(8);
        let frames = vec![FeatureMap::zeros(2, 2, 8); 3];
        let seq = flatten_with_embeddings(&frames, &[-1, 0, 1], &c).unwrap();
        assert_eq!(seq.len(), 12);
        assert_eq!(seq.tokens.len(), 12 * 8);
        let expect: Vec<f64> = temporal_embedding(1.0, &c)
            .into_iter()
            .chain(spatial_embedding(1, 0, &c))
            .collect();
        let idx = seq
            .provenance
            .iter()
            .position(|o| *o == TokenOrigin { frame: 2, row: 1, col: 0 })
            .unwrap();
        assert_eq!(seq.token(idx), &expect[..]);
        assert!(flatten_with_embeddings(&frames, &[0, 1], &c).is_err());
        let mixed = vec![FeatureMap::zeros(2, 2, 8), FeatureMap::zeros(2, 3, 8)];
        assert!(flatten_with_embeddings(&mixed, &[0, 1], &c).is_err());
    }

    #[test]
    fn decoder_contract() {
        let c = cfg(8);
        let frames: Vec<FeatureMap> = (0..2)
            .map(|n| FeatureMap::from_fn(3, 3, 8, |i, j, k| ((n + i * 3 + j + k) % 5) as f64 * 0.1).unwrap())
            .collect();
        let seq = flatten_with_embeddings(&frames, &[0, -1], &c).unwrap();
        let out = toy_query_decoder(&seq, 5, 4, 42).unwrap();
        assert_eq!(out.len(), 5);
        for q in &out {
            assert_eq!(q.association.len(), 4);
            assert_eq!(q.attention.len(), seq.len());
            assert!((q.attention.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            assert!(q.probability > 0.0 && q.probability < 1.0);
            for p in q.control_points.iter().flatten() {
                assert!((0.0..=1.0).contains(p));
            }
        }
        assert_eq!(out, toy_query_decoder(&seq, 5, 4, 42).unwrap());
        assert_ne!(out, toy_query_decoder(&seq, 5, 4, 43).unwrap());
        let empty = TokenSequence {
            feature_dim: 8,
            tokens: vec![],
            provenance: vec![],
        };
        assert!(toy_query_decoder(&empty, 1, 4, 0).is_err());
        assert!(toy_query_decoder(&seq, 0, 4, 0).is_err());
    }
}
