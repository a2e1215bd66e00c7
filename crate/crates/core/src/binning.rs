//! Entropy-based supervised binning.
//!
//! Each feature gets one split point `S` chosen to maximize information gain
//! over the training labels; a frequency `O` then binarizes to `1` iff
//! `O >= S`. The same `>=` rule defines bin membership while searching for
//! splits. Constant features get the `+inf` sentinel and always map to `0`.

use std::fmt;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, LabeledSample};
use crate::disasm::FrequencyVector;

#[derive(Debug, Error, PartialEq)]
pub enum BinningError {
    #[error("empty input")]
    EmptyInput,
    #[error("values and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("training data contains a single class")]
    SingleClassDataset,
    #[error("feature {0:?} missing from input")]
    MissingFeature(String),
}

/// Gains closer than this are treated as equal; the smaller candidate wins.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

/// Shannon entropy (bits) of a class histogram; `0 log 0 = 0`.
pub fn entropy_from_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn histogram(labels: &[u8]) -> Vec<usize> {
    let k = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut counts = vec![0; k];
    for &l in labels {
        counts[l as usize] += 1;
    }
    counts
}

/// Entropy of a multiset of class ids.
pub fn entropy(labels: &[u8]) -> Result<f64, BinningError> {
    if labels.is_empty() {
        return Err(BinningError::EmptyInput);
    }
    Ok(entropy_from_counts(&histogram(labels)))
}

/// Gain of the two-way partition `{< split}` / `{>= split}` given the parent
/// and the `>= split` histograms. Clamped to `[0, H(parent)]`.
fn gain(parent: &[usize], upper: &[usize]) -> f64 {
    let n: usize = parent.iter().sum();
    let n_upper: usize = upper.iter().sum();
    let lower: Vec<usize> = parent.iter().zip(upper).map(|(p, u)| p - u).collect();
    let h = entropy_from_counts(parent);
    let w_upper = n_upper as f64 / n as f64;
    let w_lower = (n - n_upper) as f64 / n as f64;
    let g = h - w_lower * entropy_from_counts(&lower) - w_upper * entropy_from_counts(upper);
    g.clamp(0.0, h)
}

fn check_lengths(values: &[f64], labels: &[u8]) -> Result<(), BinningError> {
    if values.len() != labels.len() {
        return Err(BinningError::LengthMismatch(values.len(), labels.len()));
    }
    if values.is_empty() {
        return Err(BinningError::EmptyInput);
    }
    Ok(())
}

pub fn information_gain(values: &[f64], labels: &[u8], split: f64) -> Result<f64, BinningError> {
    check_lengths(values, labels)?;
    let parent = histogram(labels);
    let mut upper = vec![0; parent.len()];
    for (&v, &l) in values.iter().zip(labels) {
        if v >= split {
            upper[l as usize] += 1;
        }
    }
    Ok(gain(&parent, &upper))
}

/// Split point with maximal information gain among every distinct value and
/// every midpoint between consecutive distinct values. Ties go to the smallest
/// candidate; a constant feature yields `f64::INFINITY`.
pub fn best_split(values: &[f64], labels: &[u8]) -> Result<f64, BinningError> {
    check_lengths(values, labels)?;
    let parent = histogram(labels);
    let k = parent.len();

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    // distinct values with the class histogram of each group
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in order {
        let v = values[i];
        match groups.last_mut() {
            Some((last, counts)) if *last == v => counts[labels[i] as usize] += 1,
            _ => {
                let mut counts = vec![0; k];
                counts[labels[i] as usize] += 1;
                groups.push((v, counts));
            }
        }
    }
    if groups.len() == 1 {
        return Ok(f64::INFINITY);
    }

    // `upper` holds the histogram of values >= the current candidate.
    let mut upper = parent.clone();
    let mut best = (groups[0].0, gain(&parent, &upper));
    for w in 1..groups.len() {
        for (u, c) in upper.iter_mut().zip(&groups[w - 1].1) {
            *u -= c;
        }
        let g = gain(&parent, &upper);
        // the midpoint induces the same partition as groups[w].0 and is smaller
        if g > best.1 + GAIN_TIE_TOLERANCE {
            let (lo, hi) = (groups[w - 1].0, groups[w].0);
            best = (lo + (hi - lo) / 2.0, g);
        }
    }
    Ok(best.0)
}

/// Learned split points, one per feature, in feature order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningModel {
    feature_names: Vec<String>,
    split_points: Vec<f64>,
}

/// Binarized features, one bit per model feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryFeatureVector(pub Vec<u8>);

impl BinaryFeatureVector {
    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[inline]
pub fn binarize(value: f64, split: f64) -> u8 {
    u8::from(value >= split)
}

impl BinningModel {
    /// Panics if the two lists differ in length.
    pub fn new(feature_names: Vec<String>, split_points: Vec<f64>) -> Self {
        assert_eq!(feature_names.len(), split_points.len());
        Self { feature_names, split_points }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn split_points(&self) -> &[f64] {
        &self.split_points
    }

    pub fn split_point(&self, feature: &str) -> Option<f64> {
        self.feature_names.iter().position(|f| f == feature).map(|i| self.split_points[i])
    }

    /// Fits a split per feature on `train`, features in parallel.
    pub fn fit(train: &Dataset) -> Result<Self, BinningError> {
        if train.is_empty() {
            return Err(BinningError::EmptyInput);
        }
        if !train.has_both_classes() {
            return Err(BinningError::SingleClassDataset);
        }
        let labels: Vec<u8> = train.labels().into_iter().map(|l| l.as_u8()).collect();
        let split_points = (0..train.n_features())
            .into_par_iter()
            .map(|j| best_split(&train.column(j), &labels))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { feature_names: train.feature_names().to_vec(), split_points })
    }

    /// Binarizes an opcode frequency vector. Every model feature must be a
    /// vocabulary opcode.
    pub fn transform(&self, freq: &FrequencyVector) -> Result<BinaryFeatureVector, BinningError> {
        self.feature_names
            .iter()
            .zip(&self.split_points)
            .map(|(name, &split)| {
                freq.get_by_name(name)
                    .map(|count| binarize(count as f64, split))
                    .ok_or_else(|| BinningError::MissingFeature(name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BinaryFeatureVector)
    }

    /// Binarizes a row laid out as `names`.
    pub fn transform_row(&self, names: &[String], row: &[f64]) -> Result<BinaryFeatureVector, BinningError> {
        let idx = self.column_map(names)?;
        Ok(BinaryFeatureVector(idx.iter().zip(&self.split_points).map(|(&j, &s)| binarize(row[j], s)).collect()))
    }

    /// Binarizes a whole dataset; the result is laid out in model feature order.
    pub fn transform_dataset(&self, ds: &Dataset) -> Result<Dataset, BinningError> {
        let idx = self.column_map(ds.feature_names())?;
        let samples = ds
            .samples()
            .iter()
            .map(|s| LabeledSample {
                id: s.id.clone(),
                features: idx
                    .iter()
                    .zip(&self.split_points)
                    .map(|(&j, &split)| f64::from(binarize(s.features[j], split)))
                    .collect(),
                label: s.label,
            })
            .collect();
        Ok(Dataset::from_samples(self.feature_names.clone(), samples))
    }

    fn column_map(&self, names: &[String]) -> Result<Vec<usize>, BinningError> {
        self.feature_names
            .iter()
            .map(|f| names.iter().position(|n| n == f).ok_or_else(|| BinningError::MissingFeature(f.clone())))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("binning model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl Serialize for BinningModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.feature_names.len()))?;
        for (name, &split) in self.feature_names.iter().zip(&self.split_points) {
            if split == f64::INFINITY {
                map.serialize_entry(name, "inf")?;
            } else {
                map.serialize_entry(name, &split)?;
            }
        }
        map.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SplitRepr {
    Number(f64),
    Text(String),
}

impl<'de> Deserialize<'de> for BinningModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = IndexMap::<String, SplitRepr>::deserialize(deserializer)?;
        let mut feature_names = Vec::with_capacity(map.len());
        let mut split_points = Vec::with_capacity(map.len());
        for (name, repr) in map {
            let split = match repr {
                SplitRepr::Number(v) => v,
                SplitRepr::Text(t) if t == "inf" => f64::INFINITY,
                SplitRepr::Text(t) => {
                    return Err(de::Error::custom(format!("split for {name:?} must be a number or \"inf\", got {t:?}")))
                }
            };
            feature_names.push(name);
            split_points.push(split);
        }
        Ok(Self { feature_names, split_points })
    }
}

impl fmt::Display for BinningModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, split) in self.feature_names.iter().zip(&self.split_points) {
            writeln!(f, "{name}\t{split}")?;
        }
        Ok(())
    }
}
