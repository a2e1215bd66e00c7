//! k-nearest neighbours under Hamming distance.

use serde::{Deserialize, Serialize};

use super::{BitMatrix, ClassifyError};
use crate::dataset::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub rows: Vec<Vec<u8>>,
    pub labels: Vec<Label>,
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

impl Knn {
    pub(crate) fn fit(data: &BitMatrix, k: usize) -> Result<Self, ClassifyError> {
        if k == 0 || k % 2 == 0 {
            return Err(ClassifyError::InvalidHyperparameter(format!("knn_k must be odd, got {k}")));
        }
        if k > data.rows.len() {
            return Err(ClassifyError::TooFewSamples { k, available: data.rows.len() });
        }
        Ok(Self { k, rows: data.rows.clone(), labels: data.labels.clone() })
    }

    /// Training indices of the `k` nearest rows; distance ties keep index order.
    pub fn neighbors(&self, bits: &[u8]) -> Vec<usize> {
        let mut dist: Vec<(usize, usize)> = self.rows.iter().enumerate().map(|(i, r)| (hamming(r, bits), i)).collect();
        // (distance, index) pairs are unique, so an unstable partial select is deterministic
        if self.k < dist.len() {
            dist.select_nth_unstable(self.k - 1);
            dist.truncate(self.k);
        }
        dist.sort_unstable();
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of malicious labels among the neighbours.
    pub fn score(&self, bits: &[u8]) -> f64 {
        let nn = self.neighbors(bits);
        let mal = nn.iter().filter(|&&i| self.labels[i].is_malicious()).count();
        mal as f64 / nn.len() as f64
    }
}
