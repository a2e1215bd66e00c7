//! Classifiers over binary opcode features and extra-trees feature ranking.
//!
//! Malicious (label 1) is the positive class. Every model produces a score in
//! `[0, 1]` read as the probability of the malicious class; the label is
//! malicious iff the score is strictly above 0.5, so an exact tie resolves to
//! legitimate.

mod extra_trees;
mod knn;
mod logistic;
mod naive_bayes;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Label};

pub use extra_trees::{rank_features, select_top, FeatureRanking};
pub use knn::Knn;
pub use logistic::LogisticRegression;
pub use naive_bayes::NaiveBayes;
pub use tree::{DecisionTree, TreeNode};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("training data contains a single class")]
    SingleClassDataset,
    #[error("sample {sample}: feature {feature:?} is {value}, expected 0 or 1")]
    NonBinaryFeature { sample: String, feature: String, value: f64 },
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("k = {k} exceeds the {available} training samples")]
    TooFewSamples { k: usize, available: usize },
    #[error("unknown algorithm {0:?} (expected nb, lr, dt or knn)")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NaiveBayes,
    LogisticRegression,
    DecisionTree,
    Knn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::NaiveBayes, Algorithm::LogisticRegression, Algorithm::DecisionTree, Algorithm::Knn];

    pub fn short_name(self) -> &'static str {
        match self {
            Algorithm::NaiveBayes => "nb",
            Algorithm::LogisticRegression => "lr",
            Algorithm::DecisionTree => "dt",
            Algorithm::Knn => "knn",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::NaiveBayes => "Naive Bayes",
            Algorithm::LogisticRegression => "LR",
            Algorithm::DecisionTree => "DT",
            Algorithm::Knn => "KNN",
        })
    }
}

impl FromStr for Algorithm {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nb" | "naive_bayes" => Ok(Algorithm::NaiveBayes),
            "lr" | "logistic_regression" => Ok(Algorithm::LogisticRegression),
            "dt" | "decision_tree" => Ok(Algorithm::DecisionTree),
            "knn" => Ok(Algorithm::Knn),
            _ => Err(ClassifyError::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// Training knobs for all four algorithms; each model reads its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub nb_alpha: f64,
    pub lr_learning_rate: f64,
    pub lr_epochs: usize,
    pub lr_l2: f64,
    /// `None` grows the tree until leaves are pure or unsplittable.
    pub dt_max_depth: Option<usize>,
    pub dt_min_samples_leaf: usize,
    pub knn_k: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            nb_alpha: 1.0,
            lr_learning_rate: 0.1,
            lr_epochs: 500,
            lr_l2: 0.0,
            dt_max_depth: Some(16),
            dt_min_samples_leaf: 1,
            knn_k: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        let label = if score > 0.5 { Label::Malicious } else { Label::Legitimate };
        Self { label, score }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", content = "parameters", rename_all = "snake_case")]
pub enum Model {
    NaiveBayes(NaiveBayes),
    LogisticRegression(LogisticRegression),
    DecisionTree(DecisionTree),
    Knn(Knn),
}

/// A fitted model plus the feature layout it expects and the per-feature
/// frequency of bit 1 in its training data (used for LIME sampling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub feature_names: Vec<String>,
    pub bit_marginals: Vec<f64>,
    #[serde(flatten)]
    pub model: Model,
}

/// Training matrix as bits, validated.
pub(crate) struct BitMatrix {
    pub rows: Vec<Vec<u8>>,
    pub labels: Vec<Label>,
}

impl BitMatrix {
    pub fn from_dataset(ds: &Dataset) -> Result<Self, ClassifyError> {
        let mut rows = Vec::with_capacity(ds.len());
        for s in ds.samples() {
            let row = s
                .features
                .iter()
                .zip(ds.feature_names())
                .map(|(&v, name)| {
                    if v == 0.0 {
                        Ok(0)
                    } else if v == 1.0 {
                        Ok(1)
                    } else {
                        Err(ClassifyError::NonBinaryFeature { sample: s.id.clone(), feature: name.clone(), value: v })
                    }
                })
                .collect::<Result<Vec<u8>, _>>()?;
            rows.push(row);
        }
        Ok(Self { rows, labels: ds.labels() })
    }

    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn marginals(&self, d: usize) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..d).map(|j| self.rows.iter().map(|r| f64::from(r[j])).sum::<f64>() / n).collect()
    }
}

pub fn train(algorithm: Algorithm, ds: &Dataset, hp: &Hyperparams) -> Result<TrainedClassifier, ClassifyError> {
    if !ds.has_both_classes() {
        return Err(ClassifyError::SingleClassDataset);
    }
    let data = BitMatrix::from_dataset(ds)?;
    let model = match algorithm {
        Algorithm::NaiveBayes => Model::NaiveBayes(NaiveBayes::fit(&data, hp.nb_alpha)?),
        Algorithm::LogisticRegression => Model::LogisticRegression(LogisticRegression::fit(&data, hp)?.0),
        Algorithm::DecisionTree => Model::DecisionTree(DecisionTree::fit(&data, hp)?),
        Algorithm::Knn => Model::Knn(Knn::fit(&data, hp.knn_k)?),
    };
    Ok(TrainedClassifier {
        feature_names: ds.feature_names().to_vec(),
        bit_marginals: data.marginals(ds.n_features()),
        model,
    })
}

impl TrainedClassifier {
    pub fn algorithm(&self) -> Algorithm {
        match self.model {
            Model::NaiveBayes(_) => Algorithm::NaiveBayes,
            Model::LogisticRegression(_) => Algorithm::LogisticRegression,
            Model::DecisionTree(_) => Algorithm::DecisionTree,
            Model::Knn(_) => Algorithm::Knn,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Score of the malicious class without dimension checks.
    pub(crate) fn raw_score(&self, bits: &[u8]) -> f64 {
        match &self.model {
            Model::NaiveBayes(m) => m.score(bits),
            Model::LogisticRegression(m) => m.score(bits),
            Model::DecisionTree(m) => m.score(bits),
            Model::Knn(m) => m.score(bits),
        }
    }

    pub fn predict(&self, bits: &[u8]) -> Result<Prediction, ClassifyError> {
        if bits.len() != self.n_features() {
            return Err(ClassifyError::DimensionMismatch { expected: self.n_features(), found: bits.len() });
        }
        Ok(Prediction::from_score(self.raw_score(bits)))
    }

    /// Predicts every row of a binary dataset laid out like the model.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<Prediction>, ClassifyError> {
        if ds.feature_names() != self.feature_names.as_slice() {
            return Err(ClassifyError::DimensionMismatch { expected: self.n_features(), found: ds.n_features() });
        }
        let data = BitMatrix::from_dataset(ds)?;
        Ok(data.rows.iter().map(|r| Prediction::from_score(self.raw_score(r))).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
