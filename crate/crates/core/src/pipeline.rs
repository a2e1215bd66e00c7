//! End-to-end run: featurize, split, oversample, bin, rank, train, evaluate
//! and explain, writing every intermediate artifact to one directory.

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::binning::{binarize, BinningModel};
use crate::classify::{self, Algorithm, FeatureRanking, Hyperparams, Prediction, TrainedClassifier};
use crate::dataset::{self, Dataset, Label, LabeledSample, SplitSpec};
use crate::disasm::{self, FrequencyVector};
use crate::eval::{self, BaselineRow, Metrics};
use crate::explain::{self, ExplainError, Explanation, LimeConfig};
use crate::sampling::{self, SmoteAmount, SmoteConfig};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Featurize,
    Split,
    Smote,
    Bin,
    Rank,
    Train,
    Eval,
    Explain,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Featurize => "featurize",
            Stage::Split => "split",
            Stage::Smote => "smote",
            Stage::Bin => "bin",
            Stage::Rank => "rank",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Explain => "explain",
            Stage::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or missing input data; the caller can fix it.
    Data,
    /// A numerical or logic failure inside a stage.
    Internal,
}

#[derive(Debug, Error)]
#[error("{stage} stage failed")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
    #[source]
    pub source: Box<dyn StdError + Send + Sync>,
}

impl PipelineError {
    pub fn data<E: Into<Box<dyn StdError + Send + Sync>>>(stage: Stage, source: E) -> Self {
        Self { stage, kind: ErrorKind::Data, source: source.into() }
    }

    pub fn internal<E: Into<Box<dyn StdError + Send + Sync>>>(stage: Stage, source: E) -> Self {
        Self { stage, kind: ErrorKind::Internal, source: source.into() }
    }
}

fn at<E: Into<Box<dyn StdError + Send + Sync>>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::data(stage, e)
}

fn explain_err(e: ExplainError) -> PipelineError {
    match e {
        ExplainError::SingularSystem => PipelineError::internal(Stage::Explain, e),
        other => PipelineError::data(Stage::Explain, other),
    }
}

/// Stage labels fed to [`derive_seed`].
pub const SPLIT_STAGE: &str = "split";
pub const SMOTE_STAGE: &str = "smote";
pub const RANK_STAGE: &str = "rank";
pub const LIME_STAGE: &str = "lime";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub split: u64,
    pub smote: u64,
    pub rank: u64,
    pub lime: u64,
}

impl StageSeeds {
    pub fn derive(root: u64) -> Self {
        Self {
            split: derive_seed(root, SPLIT_STAGE),
            smote: derive_seed(root, SMOTE_STAGE),
            rank: derive_seed(root, RANK_STAGE),
            lime: derive_seed(root, LIME_STAGE),
        }
    }
}

/// Whether SMOTE interpolates frequencies (before binning) or bits (after
/// binning, rounded back to 0/1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    SmoteThenBin,
    BinThenSmote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Directory of hex bytecode files, used with `manifest`.
    pub bytecode_dir: Option<PathBuf>,
    /// JSON `{file name: 0|1}`.
    pub manifest: Option<PathBuf>,
    /// Precomputed frequency CSV; used instead of the bytecode directory.
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub malicious: f64,
    pub legitimate: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { malicious: SplitSpec::DEFAULT_MALICIOUS_FRACTION, legitimate: SplitSpec::DEFAULT_LEGITIMATE_FRACTION }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSettings {
    pub k_neighbors: usize,
    /// Total malicious count after oversampling; `None` matches the
    /// legitimate training count.
    pub target_count: Option<usize>,
}

impl Default for SmoteSettings {
    fn default() -> Self {
        Self { k_neighbors: SmoteConfig::DEFAULT_K, target_count: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeSettings {
    pub n_perturbations: usize,
    pub kernel_width: Option<f64>,
}

impl Default for LimeSettings {
    fn default() -> Self {
        let d = LimeConfig::default();
        Self { n_perturbations: d.n_perturbations, kernel_width: d.kernel_width }
    }
}

impl LimeSettings {
    pub fn config(&self, seed: u64) -> LimeConfig {
        LimeConfig { n_perturbations: self.n_perturbations, kernel_width: self.kernel_width, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub split: SplitFractions,
    pub smote: SmoteSettings,
    pub order: StageOrder,
    pub n_trees: usize,
    pub top_m: usize,
    pub algorithm: Algorithm,
    pub hyperparams: Hyperparams,
    pub lime: LimeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            split: SplitFractions::default(),
            smote: SmoteSettings::default(),
            order: StageOrder::default(),
            n_trees: 200,
            top_m: 10,
            algorithm: Algorithm::LogisticRegression,
            hyperparams: Hyperparams::default(),
            lime: LimeSettings::default(),
        }
    }
}

impl RunConfig {
    /// Hex SHA-256 of the config's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            malicious_train_fraction: self.split.malicious,
            legitimate_train_fraction: self.split.legitimate,
            seed: StageSeeds::derive(self.seed).split,
        }
    }

    /// SMOTE settings for a training set with `legitimate` legitimate samples.
    pub fn smote_config(&self, legitimate: usize) -> SmoteConfig {
        SmoteConfig {
            k_neighbors: self.smote.k_neighbors,
            amount: SmoteAmount::TargetCount(self.smote.target_count.unwrap_or(legitimate)),
            seed: StageSeeds::derive(self.seed).smote,
        }
    }

    pub fn lime_config(&self) -> LimeConfig {
        self.lime.config(StageSeeds::derive(self.seed).lime)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub legitimate: usize,
    pub malicious: usize,
}

impl From<(usize, usize)> for ClassCounts {
    fn from((legitimate, malicious): (usize, usize)) -> Self {
        Self { legitimate, malicious }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub all: ClassCounts,
    pub train: ClassCounts,
    pub test: ClassCounts,
    pub balanced_train: ClassCounts,
    pub synthetic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSummary {
    pub instance_id: String,
    #[serde(with = "crate::dataset::label_name")]
    pub true_label: Label,
    #[serde(with = "crate::dataset::label_name")]
    pub predicted_label: Label,
    pub predicted_score: f64,
    #[serde(with = "crate::dataset::label_name")]
    pub explanation_verdict: Label,
    /// `(feature, signed contribution)`, strongest first.
    pub contributions: Vec<(String, f64)>,
}

/// Everything needed to reproduce and audit one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub stage_seeds: StageSeeds,
    pub config: RunConfig,
    pub counts: SampleCounts,
    pub selected_features: Vec<String>,
    pub metrics: Metrics,
    pub accuracy_note: String,
    pub explanations: Vec<ExplanationSummary>,
    /// Artifact file name to SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

pub const SUMMARY_FILE: &str = "summary.json";

/// Loads the labeled frequency dataset named by `input`.
pub fn featurize(input: &InputConfig) -> Result<Dataset, PipelineError> {
    let err = at::<dataset::DatasetError>(Stage::Featurize);
    match (&input.features, &input.bytecode_dir, &input.manifest) {
        (Some(path), _, _) => dataset::load_csv(path).map_err(err),
        (None, Some(dir), Some(manifest)) => {
            let labels = dataset::read_manifest(manifest).map_err(at(Stage::Featurize))?;
            dataset::build_from_bytecode_dir(dir, &labels).map_err(err)
        }
        _ => Err(PipelineError::data(
            Stage::Config,
            "input needs either `features` or both `bytecode_dir` and `manifest`",
        )),
    }
}

/// Binary features after SMOTE; only meaningful for [`StageOrder::BinThenSmote`].
fn smote_bits(bits: &Dataset, cfg: &SmoteConfig) -> Result<Dataset, PipelineError> {
    let balanced = sampling::oversample(bits, cfg).map_err(at(Stage::Smote))?;
    let samples = balanced
        .samples()
        .iter()
        .map(|s| LabeledSample {
            id: s.id.clone(),
            features: s.features.iter().map(|&v| f64::from(binarize(v, 0.5))).collect(),
            label: s.label,
        })
        .collect();
    Ok(Dataset::from_samples(balanced.feature_names().to_vec(), samples))
}

struct ArtifactWriter<'a> {
    dir: &'a Path,
    hashes: BTreeMap<String, String>,
}

impl ArtifactWriter<'_> {
    fn write(&mut self, stage: Stage, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| PipelineError::data(stage, format!("writing {}: {e}", path.display())))?;
        self.hashes.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn write_dataset(&mut self, stage: Stage, name: &str, ds: &Dataset) -> Result<(), PipelineError> {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).map_err(at(stage))?;
        self.write(stage, name, &buf)
    }

    fn record(&mut self, stage: Stage, name: &str) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        let bytes =
            fs::read(&path).map_err(|e| PipelineError::data(stage, format!("reading {}: {e}", path.display())))?;
        self.hashes.insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }
}

pub fn predictions_csv(ds: &Dataset, predictions: &[Prediction]) -> String {
    let mut out = String::from("id,label,predicted,score\n");
    for (s, p) in ds.samples().iter().zip(predictions) {
        out.push_str(&format!("{},{},{},{}\n", s.id, s.label.as_u8(), p.label.as_u8(), p.score));
    }
    out
}

/// Runs every stage and writes artifacts plus `summary.json` to `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    let seeds = StageSeeds::derive(cfg.seed);
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| PipelineError::data(Stage::Config, format!("creating {}: {e}", cfg.out_dir.display())))?;
    let mut out = ArtifactWriter { dir: &cfg.out_dir, hashes: BTreeMap::new() };

    let all = featurize(&cfg.input)?;
    all.require_both_classes().map_err(at(Stage::Featurize))?;
    out.write_dataset(Stage::Featurize, "features.csv", &all)?;

    let (train, test) = dataset::stratified_split(&all, &cfg.split_spec()).map_err(at(Stage::Split))?;
    out.write_dataset(Stage::Split, "train.csv", &train)?;
    out.write_dataset(Stage::Split, "test.csv", &test)?;

    let smote_cfg = cfg.smote_config(train.class_counts().0);
    let (binning, balanced_bits) = match cfg.order {
        StageOrder::SmoteThenBin => {
            let balanced = sampling::oversample(&train, &smote_cfg).map_err(at(Stage::Smote))?;
            out.write_dataset(Stage::Smote, "balanced.csv", &balanced)?;
            let binning = BinningModel::fit(&balanced).map_err(at(Stage::Bin))?;
            let bits = binning.transform_dataset(&balanced).map_err(at(Stage::Bin))?;
            (binning, bits)
        }
        StageOrder::BinThenSmote => {
            let binning = BinningModel::fit(&train).map_err(at(Stage::Bin))?;
            let bits = binning.transform_dataset(&train).map_err(at(Stage::Bin))?;
            let balanced = smote_bits(&bits, &smote_cfg)?;
            (binning, balanced)
        }
    };
    out.write(Stage::Bin, "binning.json", binning.to_json().as_bytes())?;
    let test_bits = binning.transform_dataset(&test).map_err(at(Stage::Bin))?;
    out.write_dataset(Stage::Bin, "train_bits.csv", &balanced_bits)?;
    out.write_dataset(Stage::Bin, "test_bits.csv", &test_bits)?;

    let ranking = classify::rank_features(&balanced_bits, cfg.n_trees, seeds.rank).map_err(at(Stage::Rank))?;
    let mut buf = Vec::new();
    ranking.write_csv(&mut buf).map_err(at(Stage::Rank))?;
    out.write(Stage::Rank, "ranking.csv", &buf)?;
    let selected = classify::select_top(&ranking, cfg.top_m);
    let train_sel = balanced_bits.select_features(&selected).map_err(at(Stage::Rank))?;
    let test_sel = test_bits.select_features(&selected).map_err(at(Stage::Rank))?;

    let model = classify::train(cfg.algorithm, &train_sel, &cfg.hyperparams).map_err(at(Stage::Train))?;
    out.write(Stage::Train, "model.json", model.to_json().as_bytes())?;

    let predictions = model.predict_dataset(&test_sel).map_err(at(Stage::Eval))?;
    let predicted: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    let metrics = eval::score(&predicted, &test_sel.labels()).map_err(at(Stage::Eval))?;
    out.write(Stage::Eval, "predictions.csv", predictions_csv(&test_sel, &predictions).as_bytes())?;
    out.write(Stage::Eval, "metrics.csv", metrics.to_csv().as_bytes())?;
    let comparison = eval::compare_report(&metrics, &[BaselineRow::forta()]);
    out.write(Stage::Eval, "comparison.csv", comparison.as_bytes())?;

    let lime = cfg.lime_config();
    let mut explanations = Vec::new();
    for class in [Label::Malicious, Label::Legitimate] {
        let Some(sample) = test_sel.samples().iter().find(|s| s.label == class) else {
            continue;
        };
        let bits: Vec<u8> = sample.features.iter().map(|&v| v as u8).collect();
        let e = explain::explain(&model, &sample.id, &bits, &lime).map_err(explain_err)?;
        let stem = format!("explanation_{}", class.to_string().to_lowercase());
        out.write(
            Stage::Explain,
            &format!("{stem}.json"),
            serde_json::to_string_pretty(&e).map_err(at(Stage::Explain))?.as_bytes(),
        )?;
        let mut buf = Vec::new();
        e.write_csv(&mut buf).map_err(at(Stage::Explain))?;
        out.write(Stage::Explain, &format!("{stem}.csv"), &buf)?;
        let chart = format!("chart_{}", class.to_string().to_lowercase());
        eval::emit_contribution_chart(&e, &cfg.out_dir.join(format!("{chart}.svg"))).map_err(at(Stage::Report))?;
        out.record(Stage::Report, &format!("{chart}.svg"))?;
        out.record(Stage::Report, &format!("{chart}.csv"))?;
        explanations.push(ExplanationSummary {
            instance_id: e.instance_id.clone(),
            true_label: class,
            predicted_label: e.predicted_label,
            predicted_score: e.predicted_score,
            explanation_verdict: explain::aggregate_verdict(&e),
            contributions: e.entries.iter().map(|x| (x.feature.clone(), x.signed_contribution())).collect(),
        });
    }

    let synthetic = balanced_bits.len() - train.len();
    let summary = RunSummary {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        stage_seeds: seeds,
        config: cfg.clone(),
        counts: SampleCounts {
            all: all.class_counts().into(),
            train: train.class_counts().into(),
            test: test.class_counts().into(),
            balanced_train: balanced_bits.class_counts().into(),
            synthetic,
        },
        selected_features: selected,
        metrics,
        accuracy_note: eval::ACCURACY_FOOTNOTE.to_string(),
        explanations,
        artifacts: out.hashes.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(at(Stage::Report))?;
    out.write(Stage::Report, SUMMARY_FILE, format!("{json}\n").as_bytes())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub frequencies: FrequencyVector,
    pub bits: Vec<u8>,
    pub prediction: Prediction,
    pub explanation: Explanation,
}

impl ScanResult {
    pub fn verdict(&self) -> Label {
        self.prediction.label
    }
}

/// Picks `model`'s features, in its order, out of a binarized vector laid out
/// as `binning`.
pub fn model_bits(model: &TrainedClassifier, binning: &BinningModel, full: &[u8]) -> Result<Vec<u8>, PipelineError> {
    model
        .feature_names
        .iter()
        .map(|name| {
            binning
                .feature_names()
                .iter()
                .position(|f| f == name)
                .map(|j| full[j])
                .ok_or_else(|| PipelineError::data(Stage::Bin, format!("binning model has no feature {name}")))
        })
        .collect()
}

/// Classifies and explains a single contract given as hex bytecode.
pub fn scan(
    model: &TrainedClassifier,
    binning: &BinningModel,
    bytecode_hex: &str,
    lime: &LimeConfig,
) -> Result<ScanResult, PipelineError> {
    let frequencies = disasm::featurize_hex(bytecode_hex).map_err(at(Stage::Featurize))?;
    let full = binning.transform(&frequencies).map_err(at(Stage::Bin))?;
    let bits = model_bits(model, binning, full.bits())?;
    let prediction = model.predict(&bits).map_err(at(Stage::Eval))?;
    let explanation = explain::explain(model, "input", &bits, lime).map_err(explain_err)?;
    Ok(ScanResult { frequencies, bits, prediction, explanation })
}

/// Ranking artifact reader shared with the CLI.
pub fn read_ranking(path: &Path) -> Result<FeatureRanking, PipelineError> {
    let file = fs::File::open(path)
        .map_err(|e| PipelineError::data(Stage::Rank, format!("reading {}: {e}", path.display())))?;
    FeatureRanking::read_csv(file).map_err(at(Stage::Rank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disasm::VOCABULARY;

    /// Frequency dataset where SSTORE and CALL counts separate the classes.
    fn planted() -> Dataset {
        let mut ds = Dataset::with_vocabulary();
        let sstore = ds.feature_index("SSTORE").unwrap();
        let call = ds.feature_index("CALL").unwrap();
        for i in 0..60 {
            let mal = i % 4 == 0;
            let mut f = vec![0.0; VOCABULARY.len()];
            for (j, v) in f.iter_mut().enumerate() {
                *v = ((i * 7 + j * 3) % 5) as f64;
            }
            f[sstore] = if mal { 10.0 + (i % 3) as f64 } else { (i % 4) as f64 };
            f[call] = if mal { 0.0 } else { 3.0 + (i % 2) as f64 };
            let label = if mal { Label::Malicious } else { Label::Legitimate };
            ds.push(LabeledSample { id: format!("c{i}"), features: f, label });
        }
        ds
    }

    fn config(dir: &Path, order: StageOrder) -> RunConfig {
        let features = dir.join("in.csv");
        planted().save_csv(&features).unwrap();
        RunConfig {
            input: InputConfig { features: Some(features), ..Default::default() },
            out_dir: dir.join("out"),
            seed: 11,
            split: SplitFractions { malicious: 0.7, legitimate: 0.7 },
            order,
            n_trees: 20,
            top_m: 5,
            lime: LimeSettings { n_perturbations: 500, kernel_width: None },
            ..Default::default()
        }
    }

    #[test]
    fn runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), StageOrder::SmoteThenBin);
        let summary = run_pipeline(&cfg).unwrap();
        assert_eq!(summary.counts.balanced_train.malicious, summary.counts.balanced_train.legitimate);
        assert_eq!(summary.selected_features.len(), 5);
        assert!(summary.selected_features.iter().any(|f| f == "SSTORE" || f == "CALL"));
        assert_eq!(summary.metrics.tpr, eval::Ratio::Value(1.0));
        assert_eq!(summary.explanations.len(), 2);
        for name in ["model.json", "binning.json", "chart_malicious.svg", "comparison.csv"] {
            assert!(summary.artifacts.contains_key(name), "{name}");
        }
        let on_disk = fs::read_to_string(cfg.out_dir.join(SUMMARY_FILE)).unwrap();
        let parsed: RunSummary = serde_json::from_str(&on_disk).unwrap();
        assert_eq!(parsed.config_hash, cfg.hash());

        let model = TrainedClassifier::from_json(&fs::read_to_string(cfg.out_dir.join("model.json")).unwrap()).unwrap();
        let binning = BinningModel::from_json(&fs::read_to_string(cfg.out_dir.join("binning.json")).unwrap()).unwrap();
        let r = scan(&model, &binning, "0x00", &cfg.lime_config()).unwrap();
        assert_eq!(r.explanation.entries.len(), 5);
        // many SSTOREs and no CALL looks malicious
        let r = scan(&model, &binning, &"55".repeat(12), &cfg.lime_config()).unwrap();
        assert_eq!(r.verdict(), Label::Malicious);
        let bad = scan(&model, &binning, "0xzz", &cfg.lime_config()).unwrap_err();
        assert_eq!(bad.stage, Stage::Featurize);
    }

    #[test]
    fn bits_first_order_still_binary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), StageOrder::BinThenSmote);
        let summary = run_pipeline(&cfg).unwrap();
        let bits = dataset::load_csv(&cfg.out_dir.join("train_bits.csv")).unwrap();
        assert!(bits.rows().flatten().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(summary.counts.balanced_train.malicious, summary.counts.balanced_train.legitimate);
    }

    #[test]
    fn errors_name_their_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path(), StageOrder::SmoteThenBin);
        cfg.input.features = Some(dir.path().join("missing.csv"));
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.stage, Stage::Featurize);
        assert!(err.to_string().starts_with("featurize stage failed"));

        cfg.input = InputConfig::default();
        assert_eq!(run_pipeline(&cfg).unwrap_err().stage, Stage::Config);

        let mut cfg = config(dir.path(), StageOrder::SmoteThenBin);
        cfg.smote.k_neighbors = 500;
        assert_eq!(run_pipeline(&cfg).unwrap_err().stage, Stage::Smote);
    }

    #[test]
    fn stage_seeds_are_independent() {
        let a = StageSeeds::derive(1);
        assert_ne!(a.split, a.smote);
        assert_ne!(a.rank, a.lime);
        assert_eq!(a, StageSeeds::derive(1));
        let mut cfg = RunConfig::default();
        let before = cfg.smote_config(10);
        cfg.lime.n_perturbations = 10;
        assert_eq!(before, cfg.smote_config(10));
    }
}
