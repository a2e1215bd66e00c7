//! Malicious smart-contract detection from EVM bytecode.
//!
//! Bytecode is disassembled into canonical opcode frequencies, the minority
//! class is oversampled with SMOTE, frequencies are binarized with
//! entropy-based split points, and a classical classifier is trained on the
//! bits. Individual verdicts are explained with a LIME surrogate.

pub mod binning;
pub mod classify;
pub mod dataset;
pub mod disasm;
pub mod eval;
pub mod explain;
pub mod pipeline;
pub mod sampling;
pub mod seed;

pub use binning::{BinaryFeatureVector, BinningModel};
pub use classify::{Algorithm, FeatureRanking, Hyperparams, Prediction, TrainedClassifier};
pub use dataset::{Dataset, Label, LabeledSample, SplitSpec};
pub use disasm::{CanonicalOpcode, FrequencyVector, RawBytecode};
pub use eval::{Metrics, Ratio};
pub use explain::{Explanation, ExplanationEntry, LimeConfig};
pub use pipeline::{run_pipeline, scan, RunConfig, RunSummary};
pub use sampling::{SmoteAmount, SmoteConfig};
