//! SMOTE oversampling of the malicious class over frequency vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Label, LabeledSample};
use crate::seed::stream_rng;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("need more than {k} minority samples for {k} neighbors, have {available}")]
    TooFewSamples { k: usize, available: usize },
    #[error("k_neighbors must be positive")]
    ZeroNeighbors,
}

/// How many synthetic samples to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoteAmount {
    /// N synthetic samples per minority sample.
    SamplingRate(usize),
    /// Grow the minority class to this many samples in total.
    TargetCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub amount: SmoteAmount,
    pub seed: u64,
}

impl SmoteConfig {
    pub const DEFAULT_K: usize = 5;
}

/// A synthetic point with its provenance: `parent + t * (neighbor - parent)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub features: Vec<f64>,
    pub parent: usize,
    pub neighbor: usize,
    pub t: f64,
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, SamplingError> {
    if a.len() != b.len() {
        return Err(SamplingError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Indices of the `k` points nearest to `points[query]`, excluding `query`
/// itself. Equal distances keep index order.
pub fn nearest_neighbors(points: &[Vec<f64>], query: usize, k: usize) -> Result<Vec<usize>, SamplingError> {
    if k == 0 {
        return Err(SamplingError::ZeroNeighbors);
    }
    if points.len() <= k {
        return Err(SamplingError::TooFewSamples { k, available: points.len() });
    }
    let x = &points[query];
    let mut dist = Vec::with_capacity(points.len() - 1);
    for (i, p) in points.iter().enumerate() {
        if i != query {
            dist.push((euclidean_distance(x, p)?, i));
        }
    }
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(dist.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Generates synthetic minority samples. Each parent draws from its own RNG
/// substream `(seed, parent index)`.
pub fn smote(minority: &[Vec<f64>], cfg: &SmoteConfig) -> Result<Vec<SyntheticSample>, SamplingError> {
    let m = minority.len();
    if cfg.k_neighbors == 0 {
        return Err(SamplingError::ZeroNeighbors);
    }
    if m <= cfg.k_neighbors {
        return Err(SamplingError::TooFewSamples { k: cfg.k_neighbors, available: m });
    }
    let per_parent = |i: usize| match cfg.amount {
        SmoteAmount::SamplingRate(n) => n,
        SmoteAmount::TargetCount(target) => {
            let needed = target.saturating_sub(m);
            needed / m + usize::from(i < needed % m)
        }
    };

    let mut out = Vec::new();
    for (i, x) in minority.iter().enumerate() {
        let draws = per_parent(i);
        if draws == 0 {
            continue;
        }
        let neighbors = nearest_neighbors(minority, i, cfg.k_neighbors)?;
        let mut rng = stream_rng(cfg.seed, i as u64);
        for _ in 0..draws {
            let j = neighbors[rng.random_range(0..neighbors.len())];
            let t: f64 = rng.random();
            let y = &minority[j];
            let features = x.iter().zip(y).map(|(a, b)| a + t * (b - a)).collect();
            out.push(SyntheticSample { features, parent: i, neighbor: j, t });
        }
    }
    Ok(out)
}

/// Returns `ds` with synthetic malicious samples (ids `smote<N>`) appended.
pub fn oversample(ds: &Dataset, cfg: &SmoteConfig) -> Result<Dataset, SamplingError> {
    let minority: Vec<Vec<f64>> =
        ds.samples().iter().filter(|s| s.label.is_malicious()).map(|s| s.features.clone()).collect();
    let synthetic = smote(&minority, cfg)?;
    let mut out = ds.clone();
    for (n, s) in synthetic.into_iter().enumerate() {
        out.push(LabeledSample { id: format!("smote{n}"), features: s.features, label: Label::Malicious });
    }
    Ok(out)
}
