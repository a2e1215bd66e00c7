//! Decision tree over binary features, grown greedily by information gain.

use serde::{Deserialize, Serialize};

use super::{BitMatrix, ClassifyError, Hyperparams};
use crate::binning::entropy_from_counts;

/// Nodes live in a flat arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { legitimate: usize, malicious: usize },
    Split { feature: usize, zero: usize, one: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub depth: usize,
}

struct Grower<'a> {
    data: &'a BitMatrix,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
    depth: usize,
}

fn class_counts(data: &BitMatrix, idx: &[usize]) -> [usize; 2] {
    let mal = idx.iter().filter(|&&i| data.labels[i].is_malicious()).count();
    [idx.len() - mal, mal]
}

impl Grower<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        self.depth = self.depth.max(depth);
        let counts = class_counts(self.data, &idx);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { legitimate: counts[0], malicious: counts[1] });

        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.max_depth {
            return slot;
        }
        let Some(feature) = self.best_feature(&idx, counts) else {
            return slot;
        };
        let (one, zero): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.data.rows[i][feature] == 1);
        let zero = self.grow(zero, depth + 1);
        let one = self.grow(one, depth + 1);
        self.nodes[slot] = TreeNode::Split { feature, zero, one };
        slot
    }

    /// Highest-gain feature whose split leaves at least `min_leaf` samples on
    /// each side. Zero-gain splits are allowed so XOR-like patterns still
    /// separate; ties go to the lowest feature index.
    fn best_feature(&self, idx: &[usize], parent: [usize; 2]) -> Option<usize> {
        let n = idx.len() as f64;
        let h = entropy_from_counts(&parent);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.data.n_features() {
            let mut one = [0usize; 2];
            for &i in idx {
                if self.data.rows[i][j] == 1 {
                    one[self.data.labels[i].as_u8() as usize] += 1;
                }
            }
            let n_one = one[0] + one[1];
            let n_zero = idx.len() - n_one;
            if n_one < self.min_leaf || n_zero < self.min_leaf {
                continue;
            }
            let zero = [parent[0] - one[0], parent[1] - one[1]];
            let gain =
                h - (n_one as f64 / n) * entropy_from_counts(&one) - (n_zero as f64 / n) * entropy_from_counts(&zero);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best.map(|(j, _)| j)
    }
}

impl DecisionTree {
    pub(crate) fn fit(data: &BitMatrix, hp: &Hyperparams) -> Result<Self, ClassifyError> {
        if hp.dt_min_samples_leaf == 0 {
            return Err(ClassifyError::InvalidHyperparameter("dt_min_samples_leaf must be at least 1".into()));
        }
        let mut grower = Grower {
            data,
            max_depth: hp.dt_max_depth.unwrap_or(usize::MAX),
            min_leaf: hp.dt_min_samples_leaf,
            nodes: Vec::new(),
            depth: 0,
        };
        grower.grow((0..data.rows.len()).collect(), 0);
        Ok(Self { nodes: grower.nodes, depth: grower.depth })
    }

    fn leaf(&self, bits: &[u8]) -> (usize, usize) {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { legitimate, malicious } => return (legitimate, malicious),
                TreeNode::Split { feature, zero, one } => at = if bits[feature] == 1 { one } else { zero },
            }
        }
    }

    /// Fraction of malicious training samples in the reached leaf.
    pub fn score(&self, bits: &[u8]) -> f64 {
        let (legit, mal) = self.leaf(bits);
        mal as f64 / (legit + mal) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::bits_dataset;
    use super::super::{train, Algorithm, Hyperparams, Model};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separable_single_feature_is_a_stump() {
        let ds = bits_dataset(&[(&[1], 1), (&[1], 1), (&[0], 0), (&[0], 0)]);
        let m = train(Algorithm::DecisionTree, &ds, &Hyperparams::default()).unwrap();
        let Model::DecisionTree(t) = &m.model else { panic!() };
        assert_eq!(t.depth, 1);
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, .. }));
        assert_eq!(m.predict(&[1]).unwrap().score, 1.0);
        assert_eq!(m.predict(&[0]).unwrap().score, 0.0);
    }

    #[test]
    fn xor_is_learned() {
        let ds = bits_dataset(&[(&[0, 0], 0), (&[0, 1], 1), (&[1, 0], 1), (&[1, 1], 0)]);
        let m = train(Algorithm::DecisionTree, &ds, &Hyperparams::default()).unwrap();
        for s in ds.samples() {
            let bits: Vec<u8> = s.features.iter().map(|&v| v as u8).collect();
            assert_eq!(m.predict(&bits).unwrap().label, s.label);
        }
    }

    #[test]
    fn depth_is_capped() {
        let ds = bits_dataset(&[(&[0, 0], 0), (&[0, 1], 1), (&[1, 0], 1), (&[1, 1], 0)]);
        let hp = Hyperparams { dt_max_depth: Some(1), ..Hyperparams::default() };
        let m = train(Algorithm::DecisionTree, &ds, &hp).unwrap();
        let Model::DecisionTree(t) = &m.model else { panic!() };
        assert!(t.depth <= 1);
    }

    proptest! {
        #[test]
        fn unlimited_tree_fits_consistent_labels(
            rows in proptest::collection::btree_map(proptest::collection::vec(0u8..2, 5), 0u8..2, 2..32)
        ) {
            let rows: Vec<(Vec<u8>, u8)> = rows.into_iter().collect();
            prop_assume!(rows.iter().any(|r| r.1 == 0) && rows.iter().any(|r| r.1 == 1));
            let refs: Vec<(&[u8], u8)> = rows.iter().map(|(b, y)| (b.as_slice(), *y)).collect();
            let ds = bits_dataset(&refs);
            let hp = Hyperparams { dt_max_depth: None, ..Hyperparams::default() };
            let m = train(Algorithm::DecisionTree, &ds, &hp).unwrap();
            for (bits, y) in &rows {
                prop_assert_eq!(m.predict(bits).unwrap().label.as_u8(), *y);
            }
        }
    }
}
