//! LIME explanations for single predictions.
//!
//! Perturbations are drawn feature-wise from the training marginals (the
//! first one is the instance itself), weighted by the exponential kernel
//! `exp(-D(x, z)^2 / sigma^2)`, and a linear surrogate `g(z) = b + w . z` is
//! fitted to the black box's malicious-class score by weighted least squares.
//! Binary features are their own interpretable representation.
//!
//! For feature `j` the signed term `w_j * (2 x_j - 1)` says how the instance's
//! actual bit pushes the surrogate: positive supports the malicious class,
//! otherwise legitimate. Its magnitude is the reported contribution.

use std::io;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{Prediction, TrainedClassifier};
use crate::dataset::Label;
use crate::seed::stream_rng;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weighted least-squares system is singular; use more or more varied perturbations")]
    SingularSystem,
    #[error("invalid LIME configuration: {0}")]
    InvalidConfig(String),
}

/// Anything that scores a bit vector with a malicious-class probability.
pub trait ScoreModel {
    fn n_features(&self) -> usize;
    fn score(&self, bits: &[u8]) -> f64;
}

impl ScoreModel for TrainedClassifier {
    fn n_features(&self) -> usize {
        TrainedClassifier::n_features(self)
    }

    fn score(&self, bits: &[u8]) -> f64 {
        self.raw_score(bits)
    }
}

/// Adapts a closure into a [`ScoreModel`].
pub struct FnModel<F> {
    pub n_features: usize,
    pub f: F,
}

impl<F: Fn(&[u8]) -> f64> ScoreModel for FnModel<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score(&self, bits: &[u8]) -> f64 {
        (self.f)(bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_perturbations: usize,
    /// `None` means `0.75 * sqrt(d)`.
    pub kernel_width: Option<f64>,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self { n_perturbations: 5000, kernel_width: None, seed: 0 }
    }
}

impl LimeConfig {
    pub fn kernel_width_for(&self, d: usize) -> f64 {
        self.kernel_width.unwrap_or_else(|| default_kernel_width(d))
    }

    fn validate(&self, d: usize) -> Result<f64, ExplainError> {
        if self.n_perturbations < d + 1 {
            return Err(ExplainError::InvalidConfig(format!(
                "n_perturbations must be at least {} for {d} features, got {}",
                d + 1,
                self.n_perturbations
            )));
        }
        let sigma = self.kernel_width_for(d);
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ExplainError::InvalidConfig(format!("kernel width must be positive, got {sigma}")));
        }
        Ok(sigma)
    }
}

pub fn default_kernel_width(d: usize) -> f64 {
    0.75 * (d as f64).sqrt()
}

/// `n` binary vectors; the first is `x`, the rest draw bit `j` with
/// probability `marginals[j]`.
pub fn perturb(x: &[u8], n: usize, marginals: &[f64], seed: u64) -> Vec<Vec<u8>> {
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(x.to_vec());
    }
    for _ in 1..n {
        out.push(marginals.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect());
    }
    out
}

/// Kernel weight `exp(-D^2 / sigma^2)` with `D` Euclidean over the bits.
pub fn proximity(x: &[u8], z: &[u8], sigma: f64) -> Result<f64, ExplainError> {
    if x.len() != z.len() {
        return Err(ExplainError::DimensionMismatch { expected: x.len(), found: z.len() });
    }
    let d2: f64 = x.iter().zip(z).map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2)).sum();
    Ok((-d2 / (sigma * sigma)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEntry {
    pub feature: String,
    pub actual_bit: u8,
    #[serde(with = "crate::dataset::label_name")]
    pub supported_class: Label,
    pub contribution: f64,
    /// Surrogate coefficient of this feature's bit.
    pub weight: f64,
}

impl ExplanationEntry {
    /// `+contribution` when supporting malicious, `-contribution` otherwise.
    pub fn signed_contribution(&self) -> f64 {
        match self.supported_class {
            Label::Malicious => self.contribution,
            Label::Legitimate => -self.contribution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance_id: String,
    #[serde(with = "crate::dataset::label_name")]
    pub predicted_label: Label,
    pub predicted_score: f64,
    /// Surrogate intercept `b`.
    pub intercept: f64,
    /// Surrogate value `b + w . x` at the instance.
    pub local_prediction: f64,
    pub kernel_width: f64,
    /// Sorted by descending contribution; ties keep feature order.
    pub entries: Vec<ExplanationEntry>,
}

/// Fits the weighted linear surrogate around `x` and reports per-feature
/// contributions.
pub fn fit_surrogate<M: ScoreModel + ?Sized>(
    model: &M,
    instance_id: &str,
    x: &[u8],
    feature_names: &[String],
    marginals: &[f64],
    cfg: &LimeConfig,
) -> Result<Explanation, ExplainError> {
    let d = model.n_features();
    for len in [x.len(), feature_names.len(), marginals.len()] {
        if len != d {
            return Err(ExplainError::DimensionMismatch { expected: d, found: len });
        }
    }
    if let Some(&b) = x.iter().find(|&&b| b > 1) {
        return Err(ExplainError::InvalidConfig(format!("instance bit {b} is not binary")));
    }
    let sigma = cfg.validate(d)?;
    let samples = perturb(x, cfg.n_perturbations, marginals, cfg.seed);

    // normal equations (A^T W A + jitter) beta = A^T W y, intercept in column 0
    let p = d + 1;
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut aty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for z in &samples {
        let w = proximity(x, z, sigma)?;
        let y = model.score(z);
        if !y.is_finite() {
            return Err(ExplainError::SingularSystem);
        }
        row[0] = 1.0;
        for (r, &b) in row[1..].iter_mut().zip(z) {
            *r = f64::from(b);
        }
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            aty[a] += w * row[a] * y;
            for b in a..p {
                ata[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            ata[(a, b)] = ata[(b, a)];
        }
    }
    for j in 1..p {
        ata[(j, j)] += 1e-8;
    }
    let beta = ata.cholesky().ok_or(ExplainError::SingularSystem)?.solve(&aty);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(ExplainError::SingularSystem);
    }

    let intercept = beta[0];
    let mut entries: Vec<ExplanationEntry> = (0..d)
        .map(|j| {
            let weight = beta[j + 1];
            let signed = weight * (2.0 * f64::from(x[j]) - 1.0);
            ExplanationEntry {
                feature: feature_names[j].clone(),
                actual_bit: x[j],
                supported_class: if signed > 0.0 { Label::Malicious } else { Label::Legitimate },
                contribution: signed.abs(),
                weight,
            }
        })
        .collect();
    let local_prediction = intercept + entries.iter().map(|e| e.weight * f64::from(e.actual_bit)).sum::<f64>();
    entries.sort_by(|a, b| b.contribution.total_cmp(&a.contribution));

    let prediction = Prediction::from_score(model.score(x));
    Ok(Explanation {
        instance_id: instance_id.to_string(),
        predicted_label: prediction.label,
        predicted_score: prediction.score,
        intercept,
        local_prediction,
        kernel_width: sigma,
        entries,
    })
}

/// Explains one prediction of a trained classifier using its stored marginals.
pub fn explain(
    model: &TrainedClassifier,
    instance_id: &str,
    x: &[u8],
    cfg: &LimeConfig,
) -> Result<Explanation, ExplainError> {
    fit_surrogate(model, instance_id, x, &model.feature_names, &model.bit_marginals, cfg)
}

/// Class whose supporting contributions sum higher; ties fall back to the
/// classifier's own label.
pub fn aggregate_verdict(e: &Explanation) -> Label {
    let (mal, legit) = e.entries.iter().fold((0.0, 0.0), |(m, l), entry| match entry.supported_class {
        Label::Malicious => (m + entry.contribution, l),
        Label::Legitimate => (m, l + entry.contribution),
    });
    if mal > legit {
        Label::Malicious
    } else if legit > mal {
        Label::Legitimate
    } else {
        e.predicted_label
    }
}

impl Explanation {
    /// `feature,actual_bit,supported_class,contribution` rows.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "actual_bit", "supported_class", "contribution"])?;
        for e in &self.entries {
            w.write_record([
                e.feature.clone(),
                e.actual_bit.to_string(),
                e.supported_class.to_string(),
                e.contribution.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `feature,signed_contribution` rows feeding the bar chart.
    pub fn write_plot_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "signed_contribution"])?;
        for e in &self.entries {
            w.write_record([e.feature.clone(), e.signed_contribution().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable contribution table.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16} {:>6}  {:<11} {:>12}\n", "Feature", "Bit", "Supports", "Contribution");
        for e in &self.entries {
            out.push_str(&format!(
                "{:<16} {:>6}  {:<11} {:>12.4}\n",
                e.feature, e.actual_bit, e.supported_class, e.contribution
            ));
        }
        out
    }
}
