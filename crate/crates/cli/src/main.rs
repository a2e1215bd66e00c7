//! `opscan`: run the detection pipeline end to end or one stage at a time.
//!
//! Every stage that draws random numbers takes the run's root `--seed` and
//! derives its own substream, so stages run separately reproduce `run`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use opscan_core::binning::BinningModel;
use opscan_core::classify::{self, Algorithm, Hyperparams, TrainedClassifier};
use opscan_core::dataset::{self, Dataset, Label, SplitSpec};
use opscan_core::disasm;
use opscan_core::eval::{self, BaselineRow};
use opscan_core::explain::{self, LimeConfig};
use opscan_core::pipeline::{self, ErrorKind, PipelineError, RunConfig, Stage, StageOrder, StageSeeds};
use opscan_core::sampling::{self, SmoteAmount, SmoteConfig};

#[derive(Parser)]
#[command(name = "opscan", version, about = "Detect malicious EVM contracts from opcode frequencies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the instruction listing of one bytecode string.
    Disasm(HexInput),
    /// Build a frequency CSV from bytecode files.
    Featurize(FeaturizeArgs),
    /// Stratified train/test split of a frequency CSV.
    Split(SplitArgs),
    /// Oversample the malicious class of a training CSV.
    Smote(SmoteArgs),
    /// Fit split points and binarize datasets.
    Bin(BinArgs),
    /// Rank binary features with randomized trees.
    Rank(RankArgs),
    /// Train a classifier on binary features.
    Train(TrainArgs),
    /// Score a model on a labeled binary CSV.
    Eval(EvalArgs),
    /// Explain one sample's prediction.
    Explain(ExplainArgs),
    /// Classify and explain a single contract.
    Scan(ScanArgs),
    /// Run the whole pipeline from a config file plus flag overrides.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct HexInput {
    /// Hex bytecode, with or without 0x.
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    hex: Option<String>,
    /// File holding hex bytecode.
    #[arg(long)]
    file: Option<PathBuf>,
}

impl HexInput {
    fn read(&self) -> Result<String> {
        match (&self.hex, &self.file) {
            (Some(h), _) => Ok(h.clone()),
            (None, Some(p)) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
            (None, None) => bail!("either --hex or --file is required"),
        }
    }
}

#[derive(clap::Args)]
struct FeaturizeArgs {
    #[arg(long, requires = "manifest", conflicts_with = "hex_lines")]
    bytecode_dir: Option<PathBuf>,
    /// JSON {file name: 0|1}.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Newline-delimited hex strings, all with `--label`.
    #[arg(long, requires = "label", required_unless_present = "bytecode_dir")]
    hex_lines: Option<PathBuf>,
    /// 0 legitimate, 1 malicious.
    #[arg(long)]
    label: Option<u8>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SplitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SplitSpec::DEFAULT_MALICIOUS_FRACTION)]
    malicious_fraction: f64,
    #[arg(long, default_value_t = SplitSpec::DEFAULT_LEGITIMATE_FRACTION)]
    legitimate_fraction: f64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(clap::Args)]
struct SmoteArgs {
    #[arg(long, default_value_t = SmoteConfig::DEFAULT_K)]
    k: usize,
    /// Malicious total after oversampling; defaults to the legitimate count.
    #[arg(long)]
    target_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct BinArgs {
    /// Frequency CSV to fit split points on.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    /// Binarized copy of `--in`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Another frequency CSV to binarize with the fitted model.
    #[arg(long, requires = "apply_out")]
    apply: Option<PathBuf>,
    #[arg(long)]
    apply_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RankArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    n_trees: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Nb,
    Lr,
    Dt,
    Knn,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Nb => Algorithm::NaiveBayes,
            AlgoArg::Lr => Algorithm::LogisticRegression,
            AlgoArg::Dt => Algorithm::DecisionTree,
            AlgoArg::Knn => Algorithm::Knn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    SmoteThenBin,
    BinThenSmote,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "lr")]
    algo: AlgoArg,
    /// Accepted for a uniform interface; training itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only the top `--top-m` features of this ranking.
    #[arg(long)]
    ranking: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_m: usize,
    /// TOML file of hyperparameters.
    #[arg(long)]
    hyperparams: Option<PathBuf>,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Binary CSV laid out with at least the model's features.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    comparison_out: Option<PathBuf>,
    #[arg(long)]
    predictions_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct LimeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = LimeConfig::default().n_perturbations)]
    n_perturbations: usize,
    /// Defaults to 0.75 * sqrt(number of features).
    #[arg(long)]
    kernel_width: Option<f64>,
}

impl LimeArgs {
    fn config(&self) -> LimeConfig {
        LimeConfig {
            n_perturbations: self.n_perturbations,
            kernel_width: self.kernel_width,
            seed: StageSeeds::derive(self.seed).lime,
        }
    }
}

#[derive(clap::Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Sample id to explain.
    #[arg(long)]
    id: String,
    #[command(flatten)]
    lime: LimeArgs,
    /// Explanation JSON; printed as a table when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG bar chart (a CSV of the plotted values is written beside it).
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ScanArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    binning: PathBuf,
    #[command(flatten)]
    bytecode: HexInput,
    #[command(flatten)]
    lime: LimeArgs,
    /// Print the explanation as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    bytecode_dir: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    #[arg(long, value_enum)]
    order: Option<OrderArg>,
    #[arg(long)]
    smote_k: Option<usize>,
    #[arg(long)]
    target_count: Option<usize>,
    #[arg(long)]
    malicious_fraction: Option<f64>,
    #[arg(long)]
    legitimate_fraction: Option<f64>,
    #[arg(long)]
    top_m: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    lime_perturbations: Option<usize>,
}

fn stage<E>(stage: Stage) -> impl FnOnce(E) -> PipelineError
where
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    move |e| PipelineError::data(stage, e)
}

fn load(path: &Path, s: Stage) -> Result<Dataset, PipelineError> {
    dataset::load_csv(path).map_err(stage(s))
}

fn save(ds: &Dataset, path: &Path, s: Stage) -> Result<(), PipelineError> {
    ds.save_csv(path).map_err(stage(s))
}

fn read_text(path: &Path, s: Stage) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::data(s, format!("reading {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str, s: Stage) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| PipelineError::data(s, format!("writing {}: {e}", path.display())))
}

fn load_model(path: &Path, s: Stage) -> Result<TrainedClassifier, PipelineError> {
    TrainedClassifier::from_json(&read_text(path, s)?).map_err(stage(s))
}

fn disasm_cmd(args: HexInput) -> Result<()> {
    let code = disasm::decode_hex(&args.read()?).map_err(stage(Stage::Featurize))?;
    let mut out = io::stdout().lock();
    for ins in disasm::instructions(code.as_bytes()) {
        let mnemonic = ins.mnemonic();
        if ins.immediate.is_empty() {
            writeln!(out, "{:06x}  {mnemonic}", ins.offset)?;
        } else {
            writeln!(out, "{:06x}  {mnemonic} 0x{}", ins.offset, hex_string(ins.immediate))?;
        }
    }
    Ok(())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn featurize_cmd(args: FeaturizeArgs) -> Result<()> {
    let ds = match (&args.bytecode_dir, &args.hex_lines) {
        (Some(dir), _) => pipeline::featurize(&pipeline::InputConfig {
            bytecode_dir: Some(dir.clone()),
            manifest: args.manifest.clone(),
            features: None,
        })?,
        (None, Some(path)) => {
            let label = args
                .label
                .and_then(Label::from_u8)
                .ok_or_else(|| PipelineError::data(Stage::Featurize, "--label must be 0 or 1"))?;
            dataset::build_from_hex_lines(&read_text(path, Stage::Featurize)?, label)
                .map_err(stage(Stage::Featurize))?
        }
        (None, None) => bail!("either --bytecode-dir or --hex-lines is required"),
    };
    save(&ds, &args.out, Stage::Featurize)?;
    let (legit, mal) = ds.class_counts();
    eprintln!("featurized {} contracts ({mal} malicious, {legit} legitimate)", ds.len());
    Ok(())
}

fn split_cmd(args: SplitArgs) -> Result<()> {
    let ds = load(&args.input, Stage::Split)?;
    let spec = SplitSpec {
        malicious_train_fraction: args.malicious_fraction,
        legitimate_train_fraction: args.legitimate_fraction,
        seed: StageSeeds::derive(args.seed).split,
    };
    let (train, test) = dataset::stratified_split(&ds, &spec).map_err(stage(Stage::Split))?;
    save(&train, &args.train_out, Stage::Split)?;
    save(&test, &args.test_out, Stage::Split)?;
    eprintln!("train {} / test {}", train.len(), test.len());
    Ok(())
}

fn smote_cmd(args: SmoteArgs) -> Result<()> {
    let train = load(&args.input, Stage::Smote)?;
    let cfg = SmoteConfig {
        k_neighbors: args.k,
        amount: SmoteAmount::TargetCount(args.target_count.unwrap_or(train.class_counts().0)),
        seed: StageSeeds::derive(args.seed).smote,
    };
    let balanced = sampling::oversample(&train, &cfg).map_err(stage(Stage::Smote))?;
    save(&balanced, &args.out, Stage::Smote)?;
    eprintln!("added {} synthetic malicious samples", balanced.len() - train.len());
    Ok(())
}

fn bin_cmd(args: BinArgs) -> Result<()> {
    let train = load(&args.input, Stage::Bin)?;
    let model = BinningModel::fit(&train).map_err(stage(Stage::Bin))?;
    write_text(&args.model_out, &model.to_json(), Stage::Bin)?;
    if let Some(out) = &args.out {
        save(&model.transform_dataset(&train).map_err(stage(Stage::Bin))?, out, Stage::Bin)?;
    }
    if let (Some(apply), Some(apply_out)) = (&args.apply, &args.apply_out) {
        let other = load(apply, Stage::Bin)?;
        save(&model.transform_dataset(&other).map_err(stage(Stage::Bin))?, apply_out, Stage::Bin)?;
    }
    Ok(())
}

fn rank_cmd(args: RankArgs) -> Result<()> {
    let bits = load(&args.input, Stage::Rank)?;
    let ranking =
        classify::rank_features(&bits, args.n_trees, StageSeeds::derive(args.seed).rank).map_err(stage(Stage::Rank))?;
    let mut buf = Vec::new();
    ranking.write_csv(&mut buf).map_err(stage(Stage::Rank))?;
    fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut bits = load(&args.input, Stage::Train)?;
    if let Some(path) = &args.ranking {
        let ranking = pipeline::read_ranking(path)?;
        bits = bits.select_features(&classify::select_top(&ranking, args.top_m)).map_err(stage(Stage::Train))?;
    }
    let hp: Hyperparams = match &args.hyperparams {
        Some(path) => toml::from_str(&read_text(path, Stage::Config)?).map_err(stage(Stage::Config))?,
        None => Hyperparams::default(),
    };
    let model = classify::train(args.algo.into(), &bits, &hp).map_err(stage(Stage::Train))?;
    write_text(&args.model_out, &model.to_json(), Stage::Train)?;
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.model, Stage::Eval)?;
    let ds = load(&args.input, Stage::Eval)?.select_features(&model.feature_names).map_err(stage(Stage::Eval))?;
    let predictions = model.predict_dataset(&ds).map_err(stage(Stage::Eval))?;
    let predicted: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    let metrics = eval::score(&predicted, &ds.labels()).map_err(stage(Stage::Eval))?;
    let comparison = eval::compare_report(&metrics, &[BaselineRow::forta()]);
    if let Some(p) = &args.metrics_out {
        write_text(p, &metrics.to_csv(), Stage::Eval)?;
    }
    if let Some(p) = &args.comparison_out {
        write_text(p, &comparison, Stage::Eval)?;
    }
    if let Some(p) = &args.predictions_out {
        write_text(p, &pipeline::predictions_csv(&ds, &predictions), Stage::Eval)?;
    }
    print!("{comparison}");
    println!("note: {}", eval::ACCURACY_FOOTNOTE);
    Ok(())
}

fn explain_cmd(args: ExplainArgs) -> Result<()> {
    let model = load_model(&args.model, Stage::Explain)?;
    let ds = load(&args.input, Stage::Explain)?.select_features(&model.feature_names).map_err(stage(Stage::Explain))?;
    let sample = ds
        .samples()
        .iter()
        .find(|s| s.id == args.id)
        .ok_or_else(|| PipelineError::data(Stage::Explain, format!("no sample with id {:?}", args.id)))?;
    let bits: Vec<u8> = sample.features.iter().map(|&v| v as u8).collect();
    let e = explain::explain(&model, &sample.id, &bits, &args.lime.config())
        .map_err(|err| PipelineError::internal(Stage::Explain, err))?;
    match &args.out {
        Some(p) => write_text(p, &serde_json::to_string_pretty(&e)?, Stage::Explain)?,
        None => print!("{}", e.to_table()),
    }
    if let Some(chart) = &args.chart {
        eval::emit_contribution_chart(&e, chart).map_err(stage(Stage::Report))?;
    }
    Ok(())
}

fn scan_cmd(args: ScanArgs) -> Result<()> {
    let model = load_model(&args.model, Stage::Config)?;
    let binning = BinningModel::from_json(&read_text(&args.binning, Stage::Config)?).map_err(stage(Stage::Config))?;
    let result = pipeline::scan(&model, &binning, &args.bytecode.read()?, &args.lime.config())?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result.explanation)?);
    } else {
        println!("verdict: {} (score {:.4})", result.verdict(), result.prediction.score);
        print!("{}", result.explanation.to_table());
    }
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let mut cfg: RunConfig = match &args.config {
        Some(path) => toml::from_str(&read_text(path, Stage::Config)?).map_err(stage(Stage::Config))?,
        None => RunConfig::default(),
    };
    if args.features.is_some() {
        cfg.input.features = args.features;
    }
    if args.bytecode_dir.is_some() {
        cfg.input.bytecode_dir = args.bytecode_dir;
    }
    if args.manifest.is_some() {
        cfg.input.manifest = args.manifest;
    }
    if let Some(v) = args.out_dir {
        cfg.out_dir = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.algo {
        cfg.algorithm = v.into();
    }
    if let Some(v) = args.order {
        cfg.order = match v {
            OrderArg::SmoteThenBin => StageOrder::SmoteThenBin,
            OrderArg::BinThenSmote => StageOrder::BinThenSmote,
        };
    }
    if let Some(v) = args.smote_k {
        cfg.smote.k_neighbors = v;
    }
    if args.target_count.is_some() {
        cfg.smote.target_count = args.target_count;
    }
    if let Some(v) = args.malicious_fraction {
        cfg.split.malicious = v;
    }
    if let Some(v) = args.legitimate_fraction {
        cfg.split.legitimate = v;
    }
    if let Some(v) = args.top_m {
        cfg.top_m = v;
    }
    if let Some(v) = args.n_trees {
        cfg.n_trees = v;
    }
    if let Some(v) = args.lime_perturbations {
        cfg.lime.n_perturbations = v;
    }
    let summary = pipeline::run_pipeline(&cfg)?;
    let m = &summary.metrics;
    println!(
        "{}: TPR {} FPR {} Precision {} Accuracy {} F1 {}",
        cfg.algorithm,
        m.tpr.short(),
        m.fpr.short(),
        m.precision.short(),
        m.accuracy.short(),
        m.f1.short()
    );
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<PipelineError>() {
        Some(PipelineError { kind: ErrorKind::Internal, .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Disasm(a) => disasm_cmd(a),
        Command::Featurize(a) => featurize_cmd(a),
        Command::Split(a) => split_cmd(a),
        Command::Smote(a) => smote_cmd(a),
        Command::Bin(a) => bin_cmd(a),
        Command::Rank(a) => rank_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Scan(a) => scan_cmd(a),
        Command::Run(a) => run_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
