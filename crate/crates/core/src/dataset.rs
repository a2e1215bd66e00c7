//! Labeled feature matrices: CSV persistence, bytecode ingestion and the
//! per-class train/test split.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::disasm::{self, DisasmError, VOCABULARY};
use crate::seed::stream_rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset file is empty")]
    EmptyDataset,
    #[error("header has no final `label` column")]
    MissingLabelColumn,
    #[error("row {row}: cell {column:?} is not a number: {value:?}")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}: label must be 0 or 1, found {value:?}")]
    InvalidLabel { row: usize, value: String },
    #[error("dataset contains a single class; both legitimate and malicious samples are required")]
    SingleClassDataset,
    #[error("train fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("manifest entry {0} has no file")]
    MissingFile(PathBuf),
    #[error("{file}: {source}")]
    Decode { file: String, source: DisasmError },
    #[error("manifest is not a JSON object of file name to 0/1 label: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("feature layouts differ")]
    FeatureMismatch,
    #[error("feature {0:?} not present in dataset")]
    UnknownFeature(String),
}

/// Class label. Malicious is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Legitimate,
    Malicious,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Legitimate => 0,
            Label::Malicious => 1,
        }
    }

    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(Label::Legitimate),
            1 => Some(Label::Malicious),
            _ => None,
        }
    }

    pub fn is_malicious(self) -> bool {
        self == Label::Malicious
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Legitimate => "Legitimate",
            Label::Malicious => "Malicious",
        })
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(deserializer)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label {v} is not 0 or 1")))
    }
}

/// Serializes a [`Label`] by name (`"Malicious"` / `"Legitimate"`) instead of 0/1.
pub mod label_name {
    use super::Label;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &Label, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(label)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Label, D::Error> {
        match String::deserialize(deserializer)?.as_str() {
            "Malicious" => Ok(Label::Malicious),
            "Legitimate" => Ok(Label::Legitimate),
            other => Err(serde::de::Error::custom(format!("unknown class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Label,
}

/// Samples sharing one feature ordering.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    feature_names: Vec<String>,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self { feature_names, samples: Vec::new() }
    }

    /// Panics if a sample's width differs from the feature list.
    pub fn from_samples(feature_names: Vec<String>, samples: Vec<LabeledSample>) -> Self {
        let mut ds = Self::new(feature_names);
        for s in samples {
            ds.push(s);
        }
        ds
    }

    /// Empty dataset over the full opcode vocabulary.
    pub fn with_vocabulary() -> Self {
        Self::new(VOCABULARY.iter().map(|s| s.to_string()).collect())
    }

    pub fn push(&mut self, sample: LabeledSample) {
        assert_eq!(sample.features.len(), self.feature_names.len(), "sample {} has the wrong width", sample.id);
        self.samples.push(sample);
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// `(legitimate, malicious)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let malicious = self.samples.iter().filter(|s| s.label.is_malicious()).count();
        (self.samples.len() - malicious, malicious)
    }

    pub fn has_both_classes(&self) -> bool {
        let (legit, mal) = self.class_counts();
        legit > 0 && mal > 0
    }

    pub fn require_both_classes(&self) -> Result<(), DatasetError> {
        if self.has_both_classes() {
            Ok(())
        } else {
            Err(DatasetError::SingleClassDataset)
        }
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.features[j]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.features.as_slice())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn filter_label(&self, label: Label) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            samples: self.samples.iter().filter(|s| s.label == label).cloned().collect(),
        }
    }

    /// Projects onto `names`, in that order.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset, DatasetError> {
        let idx = names
            .iter()
            .map(|n| self.feature_index(n).ok_or_else(|| DatasetError::UnknownFeature(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let samples = self
            .samples
            .iter()
            .map(|s| LabeledSample {
                id: s.id.clone(),
                features: idx.iter().map(|&j| s.features[j]).collect(),
                label: s.label,
            })
            .collect();
        Ok(Dataset { feature_names: names.to_vec(), samples })
    }

    /// Appends `other`'s samples; feature layouts must match exactly.
    pub fn extend(&mut self, other: Dataset) -> Result<(), DatasetError> {
        if other.feature_names != self.feature_names {
            return Err(DatasetError::FeatureMismatch);
        }
        self.samples.extend(other.samples);
        Ok(())
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.feature_names.len() + 2);
        header.push("id");
        header.extend(self.feature_names.iter().map(String::as_str));
        header.push("label");
        w.write_record(&header)?;
        for s in &self.samples {
            let mut record = Vec::with_capacity(header.len());
            record.push(s.id.clone());
            record.extend(s.features.iter().map(|v| v.to_string()));
            record.push(s.label.as_u8().to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| DatasetError::Csv(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let file = fs::File::create(path).map_err(|source| io_err(path, source))?;
        self.write_csv(io::BufWriter::new(file))
    }

    /// Parses CSV text. The header names the feature columns and ends with
    /// `label`; an optional leading `id` column carries sample identifiers.
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Dataset, DatasetError> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
        let mut records = r.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(DatasetError::EmptyDataset),
        };
        let cols: Vec<String> = header.iter().map(|c| c.trim().to_string()).collect();
        if cols.last().map(String::as_str) != Some("label") {
            return Err(DatasetError::MissingLabelColumn);
        }
        let has_id = cols.first().map(String::as_str) == Some("id");
        let start = usize::from(has_id);
        let feature_names = cols[start..cols.len() - 1].to_vec();
        let mut ds = Dataset::new(feature_names);

        for (i, record) in records.enumerate() {
            let record = record?;
            let row = i + 1;
            if record.len() != cols.len() {
                return Err(DatasetError::RaggedRow { row, expected: cols.len(), found: record.len() });
            }
            let features = (start..cols.len() - 1)
                .map(|j| {
                    let cell = record[j].trim();
                    cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DatasetError::NonNumericCell {
                        row,
                        column: cols[j].clone(),
                        value: cell.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let raw_label = record[cols.len() - 1].trim();
            let label = raw_label
                .parse::<u8>()
                .ok()
                .and_then(Label::from_u8)
                .ok_or_else(|| DatasetError::InvalidLabel { row, value: raw_label.to_string() })?;
            let id = if has_id { record[0].trim().to_string() } else { format!("row{row}") };
            ds.samples.push(LabeledSample { id, features, label });
        }
        Ok(ds)
    }
}

fn io_err(path: &Path, source: io::Error) -> DatasetError {
    DatasetError::Io { path: path.to_path_buf(), source }
}

pub fn load_csv(path: &Path) -> Result<Dataset, DatasetError> {
    let file = fs::File::open(path).map_err(|source| io_err(path, source))?;
    Dataset::read_csv(io::BufReader::new(file))
}

/// Per-class train fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub malicious_train_fraction: f64,
    pub legitimate_train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub const DEFAULT_MALICIOUS_FRACTION: f64 = 0.7;
    /// 138247 of 139451 legitimate contracts go to training in the reference protocol.
    pub const DEFAULT_LEGITIMATE_FRACTION: f64 = 0.9914;

    pub fn new(seed: u64) -> Self {
        Self {
            malicious_train_fraction: Self::DEFAULT_MALICIOUS_FRACTION,
            legitimate_train_fraction: Self::DEFAULT_LEGITIMATE_FRACTION,
            seed,
        }
    }

    fn fraction(&self, label: Label) -> f64 {
        match label {
            Label::Legitimate => self.legitimate_train_fraction,
            Label::Malicious => self.malicious_train_fraction,
        }
    }
}

/// floor(fraction * count), tolerant of representation error (0.29 * 100 is
/// 28.999999999999996 in binary floating point).
pub fn train_count(fraction: f64, count: usize) -> usize {
    ((fraction * count as f64) + 1e-9).floor() as usize
}

/// Splits each class independently: `train_count(fraction, n)` shuffled
/// members go to train, the rest to test. Both halves keep input order.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), DatasetError> {
    for f in [spec.malicious_train_fraction, spec.legitimate_train_fraction] {
        if !(f > 0.0 && f < 1.0) {
            return Err(DatasetError::InvalidFraction(f));
        }
    }
    ds.require_both_classes()?;

    let mut in_train = vec![false; ds.len()];
    for label in [Label::Legitimate, Label::Malicious] {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == label).collect();
        let mut rng = stream_rng(spec.seed, label.as_u8() as u64);
        members.shuffle(&mut rng);
        for &i in &members[..train_count(spec.fraction(label), members.len())] {
            in_train[i] = true;
        }
    }

    let mut train = Dataset::new(ds.feature_names.clone());
    let mut test = Dataset::new(ds.feature_names.clone());
    for (sample, to_train) in ds.samples.iter().zip(in_train) {
        if to_train {
            train.samples.push(sample.clone());
        } else {
            test.samples.push(sample.clone());
        }
    }
    Ok((train, test))
}

/// JSON manifest `{ "file name": 0 | 1 }`; iteration is sorted by file name.
pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, Label>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| io_err(path, source))?;
    Ok(serde_json::from_str(&text)?)
}

/// Disassembles every manifest file under `dir` into a frequency dataset.
/// Sample ids are the file names.
pub fn build_from_bytecode_dir(dir: &Path, manifest: &BTreeMap<String, Label>) -> Result<Dataset, DatasetError> {
    let mut ds = Dataset::with_vocabulary();
    for (name, &label) in manifest {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(DatasetError::MissingFile(path));
        }
        let text = fs::read_to_string(&path).map_err(|source| io_err(&path, source))?;
        let freq =
            disasm::featurize_hex(&text).map_err(|source| DatasetError::Decode { file: name.clone(), source })?;
        ds.push(LabeledSample { id: name.clone(), features: freq.to_features(), label });
    }
    Ok(ds)
}

/// Featurizes newline-delimited hex strings (blank lines skipped), all under one label.
/// Ids are `line<N>` with 1-based line numbers.
pub fn build_from_hex_lines(text: &str, label: Label) -> Result<Dataset, DatasetError> {
    let mut ds = Dataset::with_vocabulary();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let id = format!("line{}", i + 1);
        let freq = disasm::featurize_hex(line).map_err(|source| DatasetError::Decode { file: id.clone(), source })?;
        ds.push(LabeledSample { id, features: freq.to_features(), label });
    }
    Ok(ds)
}
