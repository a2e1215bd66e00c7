//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.
//!
//! `cargo test -p opscan-cli --test acceptance -- --nocapture`

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use opscan_core::binning::{best_split, BinningModel, GAIN_TIE_TOLERANCE};
use opscan_core::classify::{self, Algorithm, Hyperparams};
use opscan_core::dataset::{self, Dataset, Label, LabeledSample};
use opscan_core::disasm::{self, RawBytecode};
use opscan_core::eval::{self, Ratio};
use opscan_core::explain::{self, FnModel, LimeConfig};
use opscan_core::pipeline::{self, InputConfig, RunConfig, SplitFractions};
use opscan_core::sampling::{self, SmoteAmount, SmoteConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// 1 ---------------------------------------------------------------------------

fn oracle_entropy(pos: usize, neg: usize) -> f64 {
    let n = (pos + neg) as f64;
    [pos, neg]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Every distinct value and midpoint, in ascending order, scored by direct
/// recount; the first strictly better candidate is kept.
fn oracle_split(values: &[f64], labels: &[u8]) -> f64 {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() == 1 {
        return f64::INFINITY;
    }
    let mut candidates = distinct.clone();
    for w in distinct.windows(2) {
        candidates.push(w[0] + (w[1] - w[0]) / 2.0);
    }
    candidates.sort_by(f64::total_cmp);

    let n = values.len();
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let h = oracle_entropy(pos, n - pos);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &c in &candidates {
        let (mut up_pos, mut up_n) = (0, 0);
        for (&v, &l) in values.iter().zip(labels) {
            if v >= c {
                up_n += 1;
                up_pos += usize::from(l == 1);
            }
        }
        let (lo_pos, lo_n) = (pos - up_pos, n - up_n);
        let mut g = h;
        if up_n > 0 {
            g -= up_n as f64 / n as f64 * oracle_entropy(up_pos, up_n - up_pos);
        }
        if lo_n > 0 {
            g -= lo_n as f64 / n as f64 * oracle_entropy(lo_pos, lo_n - lo_pos);
        }
        let g = g.clamp(0.0, h);
        if g > best.1 + GAIN_TIE_TOLERANCE {
            best = (c, g);
        }
    }
    best.0
}

fn binning_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let n = rng.random_range(2..=50);
        let n_distinct = rng.random_range(1..=5);
        let pool: Vec<f64> = (0..n_distinct).map(|_| f64::from(rng.random_range(0..40u32))).collect();
        let values: Vec<f64> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let got = best_split(&values, &labels).map_err(|e| e.to_string())?;
        let want = oracle_split(&values, &labels);
        check(got == want, || format!("case {case}: best_split {got}, oracle {want} on {values:?} / {labels:?}"))?;
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("100/100 datasets match exhaustive enumeration in {:?}", start.elapsed()))
}

// 2 ---------------------------------------------------------------------------

fn reference_rows() -> Outcome {
    // (opcode, frequency, split point, published bit)
    let rows: [(&str, usize, f64, u8); 10] = [
        ("SSTORE", 10, 17.0, 0),
        ("RETURNDATACOPY", 1, 17.0, 0),
        ("SLT", 0, 0.0, 0),
        ("EQ", 16, 32.0, 0),
        ("OR", 129, 163.0, 0),
        ("RETURN", 17, 75.0, 0),
        ("DELEGATECALL", 1, 4.0, 0),
        ("LOG", 3, 5.0, 0),
        ("SUB", 57, 37.0, 1),
        ("SLOAD", 21, 63.0, 0),
    ];
    let model = BinningModel::new(rows.iter().map(|r| r.0.to_string()).collect(), rows.iter().map(|r| r.2).collect());
    let mut code = Vec::new();
    for &(name, count, _, _) in &rows {
        let byte = (0..=255u8).find(|&b| disasm::canonical(b).name() == name).ok_or(format!("no byte for {name}"))?;
        code.extend(std::iter::repeat_n(byte, count));
    }
    let freq = disasm::count_frequencies(disasm::disassemble(&RawBytecode::new(code)));
    let bits = model.transform(&freq).map_err(|e| e.to_string())?;
    let mut exact = 0;
    let mut flagged = Vec::new();
    for (i, &(name, _, _, published)) in rows.iter().enumerate() {
        if bits.bits()[i] == published {
            exact += 1;
        } else {
            flagged.push(format!("{name}: computed {} vs published {published}", bits.bits()[i]));
        }
    }
    check(exact >= 9, || format!("only {exact}/10 rows match: {flagged:?}"))?;
    check(flagged.len() <= 1 && flagged.iter().all(|f| f.starts_with("SLT")), || {
        format!("unexpected mismatches {flagged:?}")
    })?;
    Ok(format!("{exact}/10 rows exact; flagged boundary row {}", flagged.join(", ")))
}

// 3 ---------------------------------------------------------------------------

fn smote_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let minority: Vec<Vec<f64>> =
        (0..50).map(|_| (0..72).map(|_| f64::from(rng.random_range(0..100u32))).collect()).collect();
    let cfg = SmoteConfig { k_neighbors: 5, amount: SmoteAmount::SamplingRate(20), seed: 17 };
    let synthetic = sampling::smote(&minority, &cfg).map_err(|e| e.to_string())?;
    check(synthetic.len() == 1000, || format!("{} synthetic samples", synthetic.len()))?;
    for (n, s) in synthetic.iter().enumerate() {
        let (x, y) = (&minority[s.parent], &minority[s.neighbor]);
        for d in 0..72 {
            let v = s.features[d];
            check(v >= x[d].min(y[d]) && v <= x[d].max(y[d]), || format!("sample {n} leaves its segment at {d}"))?;
        }
    }
    check(sampling::smote(&minority, &cfg).map_err(|e| e.to_string())? == synthetic, || {
        "same seed gave different output".into()
    })?;

    let mut ds = Dataset::new((0..72).map(|j| format!("f{j}")).collect());
    for (i, f) in minority.iter().enumerate() {
        ds.push(LabeledSample { id: format!("m{i}"), features: f.clone(), label: Label::Malicious });
    }
    for i in 0..400 {
        let f = (0..72).map(|_| f64::from(rng.random_range(0..100u32))).collect();
        ds.push(LabeledSample { id: format!("l{i}"), features: f, label: Label::Legitimate });
    }
    let balance = SmoteConfig { amount: SmoteAmount::TargetCount(400), ..cfg };
    let balanced = sampling::oversample(&ds, &balance).map_err(|e| e.to_string())?;
    check(balanced.class_counts() == (400, 400), || format!("class counts {:?}", balanced.class_counts()))?;
    within(start.elapsed(), Duration::from_secs(2))?;
    Ok(format!("1000 samples on segments, balanced 400/400, deterministic, {:?}", start.elapsed()))
}

// 4 ---------------------------------------------------------------------------

fn naive_bayes_closed_form() -> Outcome {
    // four malicious, two legitimate
    let rows: [([u8; 2], u8); 6] = [([1, 0], 1), ([1, 1], 1), ([0, 1], 1), ([1, 1], 1), ([0, 0], 0), ([0, 1], 0)];
    let mut ds = Dataset::new(vec!["a".into(), "b".into()]);
    for (i, (bits, label)) in rows.iter().enumerate() {
        ds.push(LabeledSample {
            id: format!("s{i}"),
            features: bits.iter().map(|&b| f64::from(b)).collect(),
            label: Label::from_u8(*label).unwrap(),
        });
    }
    let model = classify::train(Algorithm::NaiveBayes, &ds, &Hyperparams::default()).map_err(|e| e.to_string())?;

    // add-one smoothing: P(bit=1 | class) = (ones + 1) / (n_class + 2)
    // malicious: a has 3/4 ones -> 4/6, b has 3/4 ones -> 4/6; prior 4/6
    // legitimate: a has 0/2 ones -> 1/4, b has 1/2 ones -> 2/4; prior 2/6
    let p = |bit: u8, p1: f64| if bit == 1 { p1 } else { 1.0 - p1 };
    let mut worst = 0.0f64;
    for q in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
        let mal = 4.0 / 6.0 * p(q[0], 4.0 / 6.0) * p(q[1], 4.0 / 6.0);
        let legit = 2.0 / 6.0 * p(q[0], 1.0 / 4.0) * p(q[1], 2.0 / 4.0);
        let want = mal / (mal + legit);
        let got = model.predict(&q).map_err(|e| e.to_string())?.score;
        worst = worst.max((got - want).abs());
        check((got - want).abs() <= 1e-12, || format!("query {q:?}: {got} vs {want}"))?;
    }
    Ok(format!("4 queries, max |error| {worst:e}"))
}

// 5 ---------------------------------------------------------------------------

fn knn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 16;
    let mut ds = Dataset::new((0..d).map(|j| format!("f{j}")).collect());
    let mut rows = Vec::new();
    for i in 0..200 {
        let bits: Vec<u8> = (0..d).map(|_| rng.random_range(0..2u8)).collect();
        let label = if rng.random_bool(0.4) { Label::Malicious } else { Label::Legitimate };
        ds.push(LabeledSample { id: format!("s{i}"), features: bits.iter().map(|&b| f64::from(b)).collect(), label });
        rows.push((bits, label));
    }
    let hp = Hyperparams { knn_k: 5, ..Hyperparams::default() };
    let model = classify::train(Algorithm::Knn, &ds, &hp).map_err(|e| e.to_string())?;
    for q in 0..50 {
        let query: Vec<u8> = (0..d).map(|_| rng.random_range(0..2u8)).collect();
        let mut dist: Vec<(usize, usize)> = rows
            .iter()
            .enumerate()
            .map(|(i, (r, _))| (r.iter().zip(&query).filter(|(a, b)| a != b).count(), i))
            .collect();
        dist.sort();
        let votes = dist[..5].iter().filter(|&&(_, i)| rows[i].1 == Label::Malicious).count();
        let want = if votes >= 3 { Label::Malicious } else { Label::Legitimate };
        let got = model.predict(&query).map_err(|e| e.to_string())?;
        check(got.label == want && got.score == votes as f64 / 5.0, || {
            format!("query {q}: got {got:?}, brute force {want} with {votes}/5 votes")
        })?;
    }
    Ok("50/50 queries equal brute force over 200 samples".into())
}

// 6 ---------------------------------------------------------------------------

fn lime_linear_recovery() -> Outcome {
    let start = Instant::now();
    let d = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let coef: Vec<f64> = (0..d).map(|_| rng.random_range(-0.05..0.05)).collect();
    let intercept = 0.5;
    let f = |z: &[u8]| intercept + z.iter().zip(&coef).map(|(&b, c)| f64::from(b) * c).sum::<f64>();
    let model = FnModel { n_features: d, f };
    let x: Vec<u8> = (0..d).map(|j| (j % 2) as u8).collect();
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let cfg = LimeConfig { n_perturbations: 5000, kernel_width: None, seed: 66 };
    let e = explain::fit_surrogate(&model, "affine", &x, &names, &vec![0.5; d], &cfg).map_err(|e| e.to_string())?;
    check((e.kernel_width - 0.75 * (d as f64).sqrt()).abs() < 1e-12, || format!("kernel width {}", e.kernel_width))?;
    let mut worst = (e.intercept - intercept).abs();
    for entry in &e.entries {
        let j: usize = entry.feature[1..].parse().unwrap();
        worst = worst.max((entry.weight - coef[j]).abs());
    }
    check(worst <= 1e-2, || format!("max coefficient error {worst}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("max coefficient error {worst:e}, {:?}", start.elapsed()))
}

// 7 ---------------------------------------------------------------------------

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let label = |r: &mut ChaCha8Rng| if r.random_bool(0.3) { Label::Malicious } else { Label::Legitimate };
    for case in 0..1000 {
        let n = rng.random_range(1..100);
        let pred: Vec<Label> = (0..n).map(|_| label(&mut rng)).collect();
        let truth: Vec<Label> = (0..n).map(|_| label(&mut rng)).collect();
        let m = eval::score(&pred, &truth).map_err(|e| e.to_string())?;
        let count = |p: Label, t: Label| pred.iter().zip(&truth).filter(|&(&a, &b)| a == p && b == t).count();
        let (tp, fp) = (count(Label::Malicious, Label::Malicious), count(Label::Malicious, Label::Legitimate));
        let (tn, fn_) = (count(Label::Legitimate, Label::Legitimate), count(Label::Legitimate, Label::Malicious));
        let c = m.confusion;
        check((c.tp, c.fp, c.tn, c.r#fn) == (tp, fp, tn, fn_), || format!("case {case}: confusion {c:?}"))?;
        let ratio = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
        check(m.tpr.value() == ratio(tp, tp + fn_), || format!("case {case}: tpr"))?;
        check(m.fpr.value() == ratio(fp, fp + tn), || format!("case {case}: fpr"))?;
        check(m.precision.value() == ratio(tp, tp + fp), || format!("case {case}: precision"))?;
        check(m.accuracy.value() == ratio(tp + tn, n), || format!("case {case}: accuracy"))?;
        if let (Ratio::Value(p), Ratio::Value(r), Ratio::Value(f1)) = (m.precision, m.tpr, m.f1) {
            check((f1 * (p + r) - 2.0 * p * r).abs() <= 1e-12, || format!("case {case}: F1 identity"))?;
        }
    }
    Ok("1000 label-vector pairs match recount; F1 identity holds to 1e-12".into())
}

// 8 ---------------------------------------------------------------------------

fn disassembler_conformance() -> Outcome {
    let table = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/instructions.csv");
    let mut reader = csv::Reader::from_path(&table).map_err(|e| e.to_string())?;
    let mut rows = 0;
    for record in reader.records() {
        let r = record.map_err(|e| e.to_string())?;
        let byte = u8::from_str_radix(r[0].trim_start_matches("0x"), 16).map_err(|e| e.to_string())?;
        let imm: usize = r[2].parse().map_err(|_| format!("bad immediate count {}", &r[2]))?;
        let code = RawBytecode::new(vec![byte]);
        let ops = disasm::disassemble(&code);
        check(ops.len() == 1, || format!("0x{byte:02x} gave {} opcodes", ops.len()))?;
        check(ops[0].name() == &r[3], || format!("0x{byte:02x}: {} vs table {}", ops[0].name(), &r[3]))?;
        let single = [byte];
        let ins = disasm::instructions(&single).next().unwrap();
        check(ins.mnemonic() == &r[1], || format!("0x{byte:02x}: mnemonic {} vs {}", ins.mnemonic(), &r[1]))?;
        check(disasm::immediate_len(byte) == imm, || format!("0x{byte:02x}: immediate length"))?;
        rows += 1;
    }
    check(rows == 256, || format!("table has {rows} rows"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let len = rng.random_range(0..300);
        let code: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let mut consumed = 0;
        let mut count = 0;
        for ins in disasm::instructions(&code) {
            count += 1;
            consumed += ins.immediate.len();
        }
        check(count + consumed == len, || format!("case {case}: {count} + {consumed} != {len}"))?;
        check(count == disasm::disassemble(&RawBytecode::new(code.clone())).len(), || format!("case {case}"))?;
    }
    Ok("256/256 bytes match the table; 1000 random strings satisfy the immediate property".into())
}

// 9 ---------------------------------------------------------------------------

fn corpus_reproduction() -> Outcome {
    let start = Instant::now();
    let corpus = workspace_root().join("data/synthetic_corpus.csv");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for algorithm in [Algorithm::LogisticRegression, Algorithm::DecisionTree] {
        let cfg = RunConfig {
            input: InputConfig { features: Some(corpus.clone()), ..Default::default() },
            out_dir: dir.path().join(algorithm.short_name()),
            seed: 2024,
            // 100 malicious samples leave too few legitimate test samples at the
            // full-scale legitimate fraction for a meaningful FPR
            split: SplitFractions { malicious: 0.7, legitimate: 0.7 },
            algorithm,
            ..Default::default()
        };
        let summary = pipeline::run_pipeline(&cfg).map_err(|e| format!("{e:#}"))?;
        let (tpr, fpr) = (summary.metrics.tpr.value().unwrap_or(0.0), summary.metrics.fpr.value().unwrap_or(1.0));
        lines.push(format!("{algorithm} TPR {tpr:.3} FPR {fpr:.3}"));
        check(tpr >= 0.95 && fpr <= 0.05, || format!("{algorithm}: TPR {tpr} FPR {fpr}"))?;
    }
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!("synthetic corpus, {}, {:?}", lines.join("; "), start.elapsed()))
}

// 10 --------------------------------------------------------------------------

fn end_to_end_determinism() -> Outcome {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("run");
    let config = dir.path().join("run.toml");
    let toml = format!(
        "out_dir = {:?}\nseed = 99\nalgorithm = \"decision_tree\"\n\n[input]\nbytecode_dir = {:?}\nmanifest = {:?}\n\n[lime]\nn_perturbations = 1000\n",
        out.to_str().unwrap(),
        toy.to_str().unwrap(),
        toy.join("manifest.json").to_str().unwrap()
    );
    fs::write(&config, toml).map_err(|e| e.to_string())?;
    let mut summaries = Vec::new();
    for _ in 0..2 {
        let status = Command::new(env!("CARGO_BIN_EXE_opscan"))
            .args(["run", "--config"])
            .arg(&config)
            .output()
            .map_err(|e| e.to_string())?;
        check(status.status.success(), || format!("run failed: {}", String::from_utf8_lossy(&status.stderr)))?;
        summaries.push(fs::read(out.join(pipeline::SUMMARY_FILE)).map_err(|e| e.to_string())?);
    }
    check(summaries[0] == summaries[1], || "summary JSON differs between runs".into())?;
    Ok(format!("two runs, identical {}-byte summary JSON", summaries[0].len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("binning oracle equivalence", binning_oracle),
        ("reference split rows", reference_rows),
        ("SMOTE properties", smote_properties),
        ("naive Bayes closed form", naive_bayes_closed_form),
        ("KNN brute-force oracle", knn_oracle),
        ("LIME linear recovery", lime_linear_recovery),
        ("metric identities", metric_identities),
        ("disassembler conformance", disassembler_conformance),
        ("corpus TPR/FPR (LR, DT)", corpus_reproduction),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn dataset_fixture_is_the_checked_in_corpus() {
    let ds = dataset::load_csv(&workspace_root().join("data/synthetic_corpus.csv")).unwrap();
    assert_eq!(ds.class_counts(), (2000, 100));
    assert_eq!(ds.n_features(), disasm::VOCABULARY_SIZE);
}
