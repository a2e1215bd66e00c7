//! Regenerates the checked-in test data.
//!
//! `cargo run -p opscan-core --example make_fixtures -- <corpus.csv> <toy dir>`
//!
//! The corpus is a frequency CSV of 2000 legitimate and 100 malicious
//! contracts in which ten opcodes carry the class signal and the other 62
//! are class-independent noise. The toy directory gets 20 hex bytecode files
//! and a `manifest.json`.

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::path::Path;

use opscan_core::dataset::{Dataset, Label, LabeledSample};
use opscan_core::disasm::VOCABULARY;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// `(opcode, legitimate mean, malicious mean)`
const SIGNAL: [(&str, f64, f64); 10] = [
    ("SSTORE", 4.0, 16.0),
    ("RETURNDATACOPY", 1.0, 9.0),
    ("SLT", 0.5, 6.0),
    ("DELEGATECALL", 0.3, 5.0),
    ("SUB", 6.0, 20.0),
    ("SLOAD", 5.0, 18.0),
    ("EQ", 14.0, 2.0),
    ("OR", 6.0, 0.5),
    ("RETURN", 5.0, 0.8),
    ("LOG", 7.0, 1.0),
];

fn corpus(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let base: Vec<f64> = VOCABULARY
        .iter()
        .map(|&op| match op {
            "PUSH" => 120.0,
            "DUP" | "SWAP" => 60.0,
            "JUMPDEST" | "JUMPI" | "JUMP" | "POP" | "MSTORE" | "MLOAD" | "ADD" => 20.0,
            _ => rng.random_range(0.2..6.0),
        })
        .collect();
    let mut ds = Dataset::with_vocabulary();
    for i in 0..2100 {
        let label = if i % 21 == 20 { Label::Malicious } else { Label::Legitimate };
        let size: f64 = rng.random_range(0.6..1.6);
        let features = VOCABULARY
            .iter()
            .zip(&base)
            .map(|(&op, &mean)| {
                let mean = match SIGNAL.iter().find(|s| s.0 == op) {
                    Some(&(_, legit, mal)) => {
                        if label.is_malicious() {
                            mal
                        } else {
                            legit
                        }
                    }
                    None => mean,
                };
                Poisson::new(mean * size).unwrap().sample(&mut rng).round()
            })
            .collect();
        ds.push(LabeledSample { id: format!("c{i:04}"), features, label });
    }
    assert_eq!(ds.class_counts(), (2000, 100));
    ds.save_csv(path).unwrap();
}

fn toy(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    fs::create_dir_all(dir).unwrap();
    let common: &[&[u8]] =
        &[&[0x60, 0x80], &[0x60, 0x40], &[0x52], &[0x01], &[0x5b], &[0x80], &[0x90], &[0x57], &[0x61, 0x01, 0x00]];
    let malicious: &[&[u8]] = &[&[0x55], &[0xf4], &[0x3e], &[0x12], &[0x03], &[0x54]];
    let legitimate: &[&[u8]] = &[&[0x14], &[0x17], &[0xf3], &[0xa1], &[0x34]];
    let mut manifest = BTreeMap::new();
    for i in 0..20 {
        let label = if i % 2 == 0 { Label::Malicious } else { Label::Legitimate };
        let signal = if label.is_malicious() { malicious } else { legitimate };
        let mut code = vec![0x60, 0x80, 0x60, 0x40, 0x52];
        for _ in 0..rng.random_range(30..60) {
            let pool = if rng.random_bool(0.35) { signal } else { common };
            code.extend_from_slice(pool[rng.random_range(0..pool.len())]);
        }
        code.push(0x00);
        let name = format!("contract{i:02}.hex");
        fs::write(dir.join(&name), format!("0x{}\n", hex(&code))).unwrap();
        manifest.insert(name, label.as_u8());
    }
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap() + "\n").unwrap();
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn main() {
    let args: Vec<String> = env::args().skip(1).collect();
    let [corpus_path, toy_dir] = args.as_slice() else {
        eprintln!("usage: make_fixtures <corpus.csv> <toy dir>");
        std::process::exit(1);
    };
    corpus(Path::new(corpus_path));
    toy(Path::new(toy_dir));
}
