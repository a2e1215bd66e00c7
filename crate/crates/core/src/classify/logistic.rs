//! Logistic regression trained by full-batch gradient descent on the mean
//! log-loss, with optional L2 shrinkage of the weights (bias unpenalized).

use serde::{Deserialize, Serialize};

use super::{BitMatrix, ClassifyError, Hyperparams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticRegression {
    fn logit(&self, bits: &[u8]) -> f64 {
        self.bias + self.weights.iter().zip(bits).filter(|(_, &b)| b == 1).map(|(w, _)| w).sum::<f64>()
    }

    pub fn score(&self, bits: &[u8]) -> f64 {
        sigmoid(self.logit(bits))
    }

    fn loss(&self, data: &BitMatrix, l2: f64) -> f64 {
        let n = data.rows.len() as f64;
        let nll: f64 = data
            .rows
            .iter()
            .zip(&data.labels)
            .map(|(row, label)| {
                let z = self.logit(row);
                if label.is_malicious() {
                    softplus(-z)
                } else {
                    softplus(z)
                }
            })
            .sum();
        nll / n + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Fits from zero initialization. Also returns the objective before the
    /// first step and after every epoch (`epochs + 1` values).
    pub(crate) fn fit(data: &BitMatrix, hp: &Hyperparams) -> Result<(Self, Vec<f64>), ClassifyError> {
        let lr = hp.lr_learning_rate;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(ClassifyError::InvalidHyperparameter(format!("lr_learning_rate must be positive, got {lr}")));
        }
        if !(hp.lr_l2 >= 0.0 && hp.lr_l2.is_finite()) {
            return Err(ClassifyError::InvalidHyperparameter(format!("lr_l2 must be non-negative, got {}", hp.lr_l2)));
        }
        let d = data.n_features();
        let n = data.rows.len() as f64;
        let mut model = Self { weights: vec![0.0; d], bias: 0.0 };
        let mut history = Vec::with_capacity(hp.lr_epochs + 1);
        history.push(model.loss(data, hp.lr_l2));

        let mut grad_w = vec![0.0; d];
        for _ in 0..hp.lr_epochs {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (row, label) in data.rows.iter().zip(&data.labels) {
                let residual = model.score(row) - f64::from(label.as_u8());
                grad_b += residual;
                for (g, &b) in grad_w.iter_mut().zip(row) {
                    if b == 1 {
                        *g += residual;
                    }
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= lr * (g / n + hp.lr_l2 * *w);
            }
            model.bias -= lr * grad_b / n;
            history.push(model.loss(data, hp.lr_l2));
        }
        Ok((model, history))
    }
}
