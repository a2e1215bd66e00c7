//! LIME behavior on logistic-regression black boxes.

use opscan_core::classify::{LogisticRegression, Model, TrainedClassifier};
use opscan_core::explain::{self, LimeConfig, ScoreModel};
use proptest::prelude::*;

fn lr_model(weights: Vec<f64>, bias: f64, marginals: Vec<f64>) -> TrainedClassifier {
    TrainedClassifier {
        feature_names: (0..weights.len()).map(|j| format!("op{j}")).collect(),
        bit_marginals: marginals,
        model: Model::LogisticRegression(LogisticRegression { weights, bias }),
    }
}

fn case(w_max: f64) -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>, Vec<u8>, u64)> {
    (3usize..=10).prop_flat_map(move |d| {
        (
            proptest::collection::vec(-w_max..w_max, d),
            -1.0f64..1.0,
            proptest::collection::vec(0.1f64..0.9, d),
            proptest::collection::vec(0u8..2, d),
            any::<u64>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Holds while the sigmoid stays close to linear over the sampled
    // neighborhood; see `saturated_lr_exceeds_fidelity_bound`.
    #[test]
    fn surrogate_is_locally_faithful((w, b, m, x, seed) in case(0.5)) {
        let model = lr_model(w, b, m);
        let e = explain::explain(&model, "x", &x, &LimeConfig { seed, ..LimeConfig::default() }).unwrap();
        let gap = (e.local_prediction - model.score(&x)).abs();
        prop_assert!(gap <= 0.1, "surrogate {} vs model {}", e.local_prediction, model.score(&x));
    }

    #[test]
    fn coefficient_signs_follow_lr_weights((w, b, m, x, seed) in case(1.5)) {
        let model = lr_model(w.clone(), b, m);
        let e = explain::explain(&model, "x", &x, &LimeConfig { seed, ..LimeConfig::default() }).unwrap();
        for entry in &e.entries {
            let j: usize = entry.feature[2..].parse().unwrap();
            if w[j].abs() > 0.1 {
                prop_assert_eq!(entry.weight.signum(), w[j].signum(), "feature {} weight {}", j, w[j]);
            }
        }
    }

    #[test]
    fn explanations_are_deterministic((w, b, m, x, seed) in case(1.5)) {
        let model = lr_model(w, b, m);
        let cfg = LimeConfig { n_perturbations: 300, seed, ..LimeConfig::default() };
        prop_assert_eq!(explain::explain(&model, "x", &x, &cfg).unwrap(), explain::explain(&model, "x", &x, &cfg).unwrap());
    }
}

/// Large LR weights push the score to the corners of the cube while most
/// marginal-drawn perturbations sit far from `x`, so the linear fit
/// overshoots at `x`. Signs stay right; the level does not.
#[test]
fn saturated_lr_exceeds_fidelity_bound() {
    let w = vec![1.37, 0.0, -0.28, 1.23, 0.0, 1.06];
    let model = lr_model(w.clone(), 0.0, vec![0.1; 6]);
    let x = [1, 0, 0, 1, 0, 1];
    let e = explain::explain(&model, "x", &x, &LimeConfig { seed: 3, ..LimeConfig::default() }).unwrap();
    let gap = (e.local_prediction - model.score(&x)).abs();
    assert!(gap > 0.1, "gap {gap}");
    for entry in &e.entries {
        let j: usize = entry.feature[2..].parse().unwrap();
        if w[j].abs() > 0.1 {
            assert_eq!(entry.weight.signum(), w[j].signum());
        }
    }
}
