//! Bernoulli naive Bayes with additive (Laplace) smoothing.

use serde::{Deserialize, Serialize};

use super::{BitMatrix, ClassifyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    /// `ln P(y = c)` for c = legitimate, malicious.
    pub log_prior: [f64; 2],
    /// `ln P(x_j = 1 | y = c)`, indexed `[c][j]`.
    pub log_p_one: [Vec<f64>; 2],
    /// `ln P(x_j = 0 | y = c)`.
    pub log_p_zero: [Vec<f64>; 2],
}

impl NaiveBayes {
    pub(crate) fn fit(data: &BitMatrix, alpha: f64) -> Result<Self, ClassifyError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ClassifyError::InvalidHyperparameter(format!("nb_alpha must be positive, got {alpha}")));
        }
        let d = data.n_features();
        let n = data.rows.len() as f64;
        let mut class_n = [0usize; 2];
        let mut ones = [vec![0usize; d], vec![0usize; d]];
        for (row, label) in data.rows.iter().zip(&data.labels) {
            let c = label.as_u8() as usize;
            class_n[c] += 1;
            for (acc, &b) in ones[c].iter_mut().zip(row) {
                *acc += b as usize;
            }
        }
        let log_prior = [(class_n[0] as f64 / n).ln(), (class_n[1] as f64 / n).ln()];
        let p = |c: usize, j: usize| (ones[c][j] as f64 + alpha) / (class_n[c] as f64 + 2.0 * alpha);
        let log_p_one = [0, 1].map(|c| (0..d).map(|j| p(c, j).ln()).collect());
        let log_p_zero = [0, 1].map(|c| (0..d).map(|j| (1.0 - p(c, j)).ln()).collect());
        Ok(Self { log_prior, log_p_one, log_p_zero })
    }

    fn log_joint(&self, c: usize, bits: &[u8]) -> f64 {
        self.log_prior[c]
            + bits
                .iter()
                .enumerate()
                .map(|(j, &b)| if b == 1 { self.log_p_one[c][j] } else { self.log_p_zero[c][j] })
                .sum::<f64>()
    }

    /// Posterior `P(y = malicious | bits)`.
    pub fn score(&self, bits: &[u8]) -> f64 {
        let diff = self.log_joint(0, bits) - self.log_joint(1, bits);
        1.0 / (1.0 + diff.exp())
    }
}
