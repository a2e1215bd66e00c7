//! EVM bytecode decoding, linear-sweep disassembly and opcode frequency counting.
//!
//! Opcodes are canonicalized onto a fixed 72-name vocabulary: numbered families
//! collapse (`PUSH0..PUSH32` to `PUSH`, `DUP1..DUP16` to `DUP`, `SWAP1..SWAP16`
//! to `SWAP`, `LOG0..LOG4` to `LOG`) and every byte whose mnemonic is outside
//! the vocabulary maps to [`CanonicalOpcode::UNKNOWN`]. Unknown occurrences are
//! counted but never enter a feature vector.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DisasmError {
    #[error("non-hex character {character:?} at position {position}")]
    NonHexCharacter { character: char, position: usize },
    #[error("hex text has an odd number of nibbles ({0})")]
    OddNibbleCount(usize),
}

/// Feature vocabulary in its fixed column order.
#[rustfmt::skip]
pub const VOCABULARY: [&str; 72] = [
    "SELFBALANCE", "BASEFEE", "MLOAD", "MSTORE",
    "SLOAD", "SSTORE", "JUMP", "JUMPI",
    "PC", "MSIZE", "GAS", "RETURNDATACOPY",
    "EXTCODEHASH", "BLOCKHASH", "COINBASE", "TIMESTAMP",
    "NUMBER", "PREVRANDAO", "GASLIMIT", "CHAINID",
    "BALANCE", "ORIGIN", "CALLER", "CALLVALUE",
    "CALLDATALOAD", "CALLDATACOPY", "CODESIZE", "CODECOPY",
    "GASPRICE", "EXTCODESIZE", "EXTCODECOPY", "SLT",
    "SGT", "EQ", "ISZERO", "AND",
    "OR", "XOR", "NOT", "BYTE",
    "SHL", "SHR", "SAR", "KECCAK256",
    "ADDRESS", "CALLCODE", "RETURN", "DELEGATECALL",
    "CREATE", "STATICCALL", "REVERT", "SELFDESTRUCT",
    "LOG", "SWAP", "DUP", "PUSH",
    "POP", "STOP", "ADD", "MUL",
    "SUB", "CALL", "DIV", "SDIV",
    "MOD", "SMOD", "ADDMOD", "MULMOD",
    "EXP", "SIGNEXTEND", "LT", "GT",
];

pub const VOCABULARY_SIZE: usize = VOCABULARY.len();

const UNKNOWN_NAME: &str = "UNKNOWN";

/// Decoded contract bytecode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawBytecode(Vec<u8>);

impl RawBytecode {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Decodes hex text with an optional `0x`/`0X` prefix and surrounding whitespace.
pub fn decode_hex(text: &str) -> Result<RawBytecode, DisasmError> {
    let trimmed = text.trim();
    let (body, offset) = match trimmed.get(..2) {
        Some("0x") | Some("0X") => (&trimmed[2..], 2),
        _ => (trimmed, 0),
    };
    match hex::decode(body) {
        Ok(bytes) => Ok(RawBytecode(bytes)),
        Err(hex::FromHexError::InvalidHexCharacter { c, index }) => {
            Err(DisasmError::NonHexCharacter { character: c, position: index + offset })
        }
        Err(hex::FromHexError::OddLength) => Err(DisasmError::OddNibbleCount(body.len())),
        Err(hex::FromHexError::InvalidStringLength) => unreachable!("decode does not check length"),
    }
}

/// A canonical opcode: an index into [`VOCABULARY`], or `UNKNOWN`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalOpcode(u8);

impl CanonicalOpcode {
    pub const UNKNOWN: CanonicalOpcode = CanonicalOpcode(VOCABULARY_SIZE as u8);

    pub fn from_index(index: usize) -> Option<Self> {
        (index < VOCABULARY_SIZE).then_some(Self(index as u8))
    }

    /// Looks up a canonical name; `"UNKNOWN"` yields the reserved token.
    pub fn from_name(name: &str) -> Option<Self> {
        if name == UNKNOWN_NAME {
            return Some(Self::UNKNOWN);
        }
        VOCABULARY.iter().position(|v| *v == name).map(|i| Self(i as u8))
    }

    /// Vocabulary column, `None` for `UNKNOWN`.
    pub fn index(self) -> Option<usize> {
        let i = self.0 as usize;
        (i < VOCABULARY_SIZE).then_some(i)
    }

    pub fn is_unknown(self) -> bool {
        self == Self::UNKNOWN
    }

    pub fn name(self) -> &'static str {
        self.index().map_or(UNKNOWN_NAME, |i| VOCABULARY[i])
    }

    /// Maps a concrete mnemonic onto the vocabulary.
    pub fn canonicalize(mnemonic: &str) -> Self {
        let family = ["PUSH", "DUP", "SWAP", "LOG"].into_iter().find(|prefix| {
            mnemonic.strip_prefix(prefix).is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
        });
        match family {
            Some(prefix) => Self::from_name(prefix).expect("families are in the vocabulary"),
            None => Self::from_name(mnemonic).unwrap_or(Self::UNKNOWN),
        }
    }
}

impl fmt::Display for CanonicalOpcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for CanonicalOpcode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for CanonicalOpcode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Self::from_name(&name).ok_or_else(|| serde::de::Error::custom(format!("unknown opcode name {name:?}")))
    }
}

/// Concrete mnemonic for a byte (Cancun instruction set), `None` when unassigned.
///
/// Byte 0x44 is reported as `PREVRANDAO` for every contract vintage.
pub fn mnemonic(byte: u8) -> Option<&'static str> {
    const PUSH: [&str; 32] = [
        "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9", "PUSH10", "PUSH11", "PUSH12",
        "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18", "PUSH19", "PUSH20", "PUSH21", "PUSH22", "PUSH23",
        "PUSH24", "PUSH25", "PUSH26", "PUSH27", "PUSH28", "PUSH29", "PUSH30", "PUSH31", "PUSH32",
    ];
    const DUP: [&str; 16] = [
        "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11", "DUP12", "DUP13",
        "DUP14", "DUP15", "DUP16",
    ];
    const SWAP: [&str; 16] = [
        "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10", "SWAP11", "SWAP12",
        "SWAP13", "SWAP14", "SWAP15", "SWAP16",
    ];
    const LOG: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];

    let name = match byte {
        0x00 => "STOP",
        0x01 => "ADD",
        0x02 => "MUL",
        0x03 => "SUB",
        0x04 => "DIV",
        0x05 => "SDIV",
        0x06 => "MOD",
        0x07 => "SMOD",
        0x08 => "ADDMOD",
        0x09 => "MULMOD",
        0x0a => "EXP",
        0x0b => "SIGNEXTEND",
        0x10 => "LT",
        0x11 => "GT",
        0x12 => "SLT",
        0x13 => "SGT",
        0x14 => "EQ",
        0x15 => "ISZERO",
        0x16 => "AND",
        0x17 => "OR",
        0x18 => "XOR",
        0x19 => "NOT",
        0x1a => "BYTE",
        0x1b => "SHL",
        0x1c => "SHR",
        0x1d => "SAR",
        0x20 => "KECCAK256",
        0x30 => "ADDRESS",
        0x31 => "BALANCE",
        0x32 => "ORIGIN",
        0x33 => "CALLER",
        0x34 => "CALLVALUE",
        0x35 => "CALLDATALOAD",
        0x36 => "CALLDATASIZE",
        0x37 => "CALLDATACOPY",
        0x38 => "CODESIZE",
        0x39 => "CODECOPY",
        0x3a => "GASPRICE",
        0x3b => "EXTCODESIZE",
        0x3c => "EXTCODECOPY",
        0x3d => "RETURNDATASIZE",
        0x3e => "RETURNDATACOPY",
        0x3f => "EXTCODEHASH",
        0x40 => "BLOCKHASH",
        0x41 => "COINBASE",
        0x42 => "TIMESTAMP",
        0x43 => "NUMBER",
        0x44 => "PREVRANDAO",
        0x45 => "GASLIMIT",
        0x46 => "CHAINID",
        0x47 => "SELFBALANCE",
        0x48 => "BASEFEE",
        0x49 => "BLOBHASH",
        0x4a => "BLOBBASEFEE",
        0x50 => "POP",
        0x51 => "MLOAD",
        0x52 => "MSTORE",
        0x53 => "MSTORE8",
        0x54 => "SLOAD",
        0x55 => "SSTORE",
        0x56 => "JUMP",
        0x57 => "JUMPI",
        0x58 => "PC",
        0x59 => "MSIZE",
        0x5a => "GAS",
        0x5b => "JUMPDEST",
        0x5c => "TLOAD",
        0x5d => "TSTORE",
        0x5e => "MCOPY",
        0x5f => "PUSH0",
        0x60..=0x7f => PUSH[(byte - 0x60) as usize],
        0x80..=0x8f => DUP[(byte - 0x80) as usize],
        0x90..=0x9f => SWAP[(byte - 0x90) as usize],
        0xa0..=0xa4 => LOG[(byte - 0xa0) as usize],
        0xf0 => "CREATE",
        0xf1 => "CALL",
        0xf2 => "CALLCODE",
        0xf3 => "RETURN",
        0xf4 => "DELEGATECALL",
        0xf5 => "CREATE2",
        0xfa => "STATICCALL",
        0xfd => "REVERT",
        0xfe => "INVALID",
        0xff => "SELFDESTRUCT",
        _ => return None,
    };
    Some(name)
}

/// Number of immediate bytes following `byte` (non-zero only for `PUSH1..PUSH32`).
pub fn immediate_len(byte: u8) -> usize {
    match byte {
        0x60..=0x7f => (byte - 0x5f) as usize,
        _ => 0,
    }
}

/// Canonical token for a single byte.
pub fn canonical(byte: u8) -> CanonicalOpcode {
    mnemonic(byte).map_or(CanonicalOpcode::UNKNOWN, CanonicalOpcode::canonicalize)
}

/// One decoded instruction. `immediate` may be shorter than the PUSH width
/// when the code ends early.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction<'a> {
    pub offset: usize,
    pub byte: u8,
    pub immediate: &'a [u8],
}

impl Instruction<'_> {
    pub fn mnemonic(&self) -> &'static str {
        mnemonic(self.byte).unwrap_or(UNKNOWN_NAME)
    }

    pub fn canonical(&self) -> CanonicalOpcode {
        canonical(self.byte)
    }
}

/// Linear-sweep iterator over the instructions of a code blob.
#[derive(Debug, Clone)]
pub struct Instructions<'a> {
    code: &'a [u8],
    pos: usize,
}

impl<'a> Iterator for Instructions<'a> {
    type Item = Instruction<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        let byte = *self.code.get(self.pos)?;
        let offset = self.pos;
        let start = offset + 1;
        let end = (start + immediate_len(byte)).min(self.code.len());
        self.pos = end;
        Some(Instruction { offset, byte, immediate: &self.code[start..end] })
    }
}

pub fn instructions(code: &[u8]) -> Instructions<'_> {
    Instructions { code, pos: 0 }
}

/// Canonical opcode stream; PUSH immediates are consumed, never emitted.
pub fn disassemble(code: &RawBytecode) -> Vec<CanonicalOpcode> {
    instructions(code.as_bytes()).map(|ins| ins.canonical()).collect()
}

/// Per-contract opcode counts over [`VOCABULARY`]. `unknown` is kept aside
/// and is not part of the feature vector or of [`FrequencyVector::total`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyVector {
    counts: [u64; VOCABULARY_SIZE],
    unknown: u64,
}

impl Default for FrequencyVector {
    fn default() -> Self {
        Self { counts: [0; VOCABULARY_SIZE], unknown: 0 }
    }
}

impl FrequencyVector {
    pub fn get(&self, op: CanonicalOpcode) -> u64 {
        op.index().map_or(self.unknown, |i| self.counts[i])
    }

    /// Count by canonical name; `None` for names outside the vocabulary.
    pub fn get_by_name(&self, name: &str) -> Option<u64> {
        CanonicalOpcode::from_name(name).and_then(|op| op.index()).map(|i| self.counts[i])
    }

    pub fn counts(&self) -> &[u64; VOCABULARY_SIZE] {
        &self.counts
    }

    pub fn unknown(&self) -> u64 {
        self.unknown
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Feature row in vocabulary order.
    pub fn to_features(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, u64)> + '_ {
        VOCABULARY.iter().copied().zip(self.counts.iter().copied())
    }
}

pub fn count_frequencies<I>(stream: I) -> FrequencyVector
where
    I: IntoIterator<Item = CanonicalOpcode>,
{
    let mut freq = FrequencyVector::default();
    for op in stream {
        match op.index() {
            Some(i) => freq.counts[i] += 1,
            None => freq.unknown += 1,
        }
    }
    freq
}

/// Hex text straight to frequencies.
pub fn featurize_hex(text: &str) -> Result<FrequencyVector, DisasmError> {
    let code = decode_hex(text)?;
    Ok(count_frequencies(instructions(code.as_bytes()).map(|ins| ins.canonical())))
}
