//! Extremely randomized trees used only to rank features.
//!
//! Each node draws a random subset of `ceil(sqrt(d))` features that are not
//! constant within the node, gives each a uniform random threshold in
//! `(min, max]` and keeps the one with the highest information gain. A
//! feature's importance is the sample-weighted gain it contributes across all
//! trees, normalized to sum to one.

use std::io;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::binning::entropy_from_counts;
use crate::dataset::Dataset;
use crate::seed::stream_rng;

/// Features in descending importance; ties keep the original column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<(String, f64)>,
}

impl FeatureRanking {
    pub fn importance(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|(f, _)| f == feature).map(|(_, v)| *v)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "importance"])?;
        for (f, v) in &self.entries {
            w.write_record([f.as_str(), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, csv::Error> {
        let mut r = csv::Reader::from_reader(reader);
        let entries = r.deserialize().collect::<Result<Vec<(String, f64)>, _>>()?;
        Ok(Self { entries })
    }
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u8],
    n_root: f64,
    subset: usize,
    rng: ChaCha8Rng,
    importance: Vec<f64>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: Vec<usize>) {
        let mut stack = vec![idx];
        while let Some(idx) = stack.pop() {
            let mut parent = [0usize; 2];
            for &i in &idx {
                parent[self.labels[i] as usize] += 1;
            }
            if parent[0] == 0 || parent[1] == 0 {
                continue;
            }
            let Some((feature, threshold, gain)) = self.draw_split(&idx, parent) else {
                continue;
            };
            self.importance[feature] += idx.len() as f64 / self.n_root * gain;
            let col = &self.columns[feature];
            let (upper, lower): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| col[i] >= threshold);
            stack.push(upper);
            stack.push(lower);
        }
    }

    fn draw_split(&mut self, idx: &[usize], parent: [usize; 2]) -> Option<(usize, f64, f64)> {
        let mut order: Vec<usize> = (0..self.columns.len()).collect();
        order.shuffle(&mut self.rng);
        let n = idx.len() as f64;
        let h = entropy_from_counts(&parent);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut tried = 0;
        for j in order {
            if tried == self.subset {
                break;
            }
            let col = &self.columns[j];
            let (lo, hi) =
                idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(col[i]), hi.max(col[i])));
            if lo == hi {
                continue;
            }
            tried += 1;
            // u in (0, 1] so the threshold lands in (lo, hi]
            let u = 1.0 - self.rng.random::<f64>();
            let threshold = lo + u * (hi - lo);
            let mut upper = [0usize; 2];
            for &i in idx {
                if col[i] >= threshold {
                    upper[self.labels[i] as usize] += 1;
                }
            }
            let lower = [parent[0] - upper[0], parent[1] - upper[1]];
            let n_upper = (upper[0] + upper[1]) as f64;
            let gain =
                (h - n_upper / n * entropy_from_counts(&upper) - (n - n_upper) / n * entropy_from_counts(&lower))
                    .max(0.0);
            if best.is_none_or(|(_, _, g)| gain > g) {
                best = Some((j, threshold, gain));
            }
        }
        best
    }
}

/// Ranks features of `train` with `n_trees` randomized trees. Tree `t` uses RNG
/// substream `(seed, t)`; importances are summed in tree order.
pub fn rank_features(train: &Dataset, n_trees: usize, seed: u64) -> Result<FeatureRanking, ClassifyError> {
    if !train.has_both_classes() {
        return Err(ClassifyError::SingleClassDataset);
    }
    if n_trees == 0 {
        return Err(ClassifyError::InvalidHyperparameter("n_trees must be positive".into()));
    }
    let d = train.n_features();
    let columns: Vec<Vec<f64>> = (0..d).map(|j| train.column(j)).collect();
    let labels: Vec<u8> = train.labels().into_iter().map(|l| l.as_u8()).collect();
    let subset = (d as f64).sqrt().ceil() as usize;

    let per_tree: Vec<Vec<f64>> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut builder = TreeBuilder {
                columns: &columns,
                labels: &labels,
                n_root: labels.len() as f64,
                subset: subset.max(1),
                rng: stream_rng(seed, t as u64),
                importance: vec![0.0; d],
            };
            builder.grow((0..labels.len()).collect());
            builder.importance
        })
        .collect();

    let mut total = vec![0.0; d];
    for imp in &per_tree {
        for (acc, v) in total.iter_mut().zip(imp) {
            *acc += v;
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    } else {
        total.iter_mut().for_each(|v| *v = 1.0 / d as f64);
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| total[b].total_cmp(&total[a]).then(a.cmp(&b)));
    Ok(FeatureRanking { entries: order.into_iter().map(|j| (train.feature_names()[j].clone(), total[j])).collect() })
}

/// The `m` most important feature names (all of them if `m` exceeds the count).
pub fn select_top(ranking: &FeatureRanking, m: usize) -> Vec<String> {
    ranking.entries.iter().take(m).map(|(f, _)| f.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, LabeledSample};
    use rand::SeedableRng;

    fn planted(n: usize, d: usize, signal: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = (0..d).map(|j| format!("f{j}")).collect();
        let samples = (0..n)
            .map(|i| {
                let mal = i % 2 == 0;
                let features = (0..d)
                    .map(|j| {
                        if j == signal {
                            // agrees with the label 90% of the time
                            f64::from(u8::from(mal ^ (rng.random::<f64>() < 0.1)))
                        } else {
                            f64::from(rng.random::<bool>() as u8)
                        }
                    })
                    .collect();
                LabeledSample {
                    id: i.to_string(),
                    features,
                    label: if mal { Label::Malicious } else { Label::Legitimate },
                }
            })
            .collect();
        Dataset::from_samples(names, samples)
    }

    #[test]
    fn planted_signal_ranks_first() {
        let ds = planted(300, 12, 7, 4);
        let ranking = rank_features(&ds, 200, 1).unwrap();
        assert_eq!(ranking.entries[0].0, "f7");
        let sum: f64 = ranking.entries.iter().map(|e| e.1).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(ranking.entries.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(select_top(&ranking, 1), vec!["f7".to_string()]);
        assert_eq!(rank_features(&ds, 200, 1).unwrap(), ranking);
    }

    #[test]
    fn identical_copies_share_importance() {
        let base = planted(200, 1, 0, 9);
        let names = (0..4).map(|j| format!("c{j}")).collect();
        let samples =
            base.samples().iter().map(|s| LabeledSample { features: vec![s.features[0]; 4], ..s.clone() }).collect();
        let ds = Dataset::from_samples(names, samples);
        let ranking = rank_features(&ds, 200, 5).unwrap();
        let max = ranking.entries.first().unwrap().1;
        let min = ranking.entries.last().unwrap().1;
        assert!(max <= 2.0 * min, "{ranking:?}");
    }

    #[test]
    fn zero_gain_falls_back_to_uniform() {
        // every feature constant: no split anywhere
        let names = vec!["a".to_string(), "b".to_string()];
        let samples = (0..6)
            .map(|i| LabeledSample {
                id: i.to_string(),
                features: vec![1.0, 0.0],
                label: if i < 3 { Label::Malicious } else { Label::Legitimate },
            })
            .collect();
        let ds = Dataset::from_samples(names, samples);
        let ranking = rank_features(&ds, 10, 0).unwrap();
        assert_eq!(ranking.entries, vec![("a".to_string(), 0.5), ("b".to_string(), 0.5)]);
        assert_eq!(select_top(&ranking, 0), Vec::<String>::new());
        assert_eq!(select_top(&ranking, 2).len(), 2);
    }

    #[test]
    fn ranking_csv_round_trip() {
        let r = FeatureRanking { entries: vec![("SUB".into(), 0.75), ("EQ".into(), 0.25)] };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "feature,importance\nSUB,0.75\nEQ,0.25\n");
        assert_eq!(FeatureRanking::read_csv(buf.as_slice()).unwrap(), r);
    }
}
