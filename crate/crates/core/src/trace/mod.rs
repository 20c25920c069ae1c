//! Dynamic branch records, the text trace format and synthetic workloads.
//!
//! One record per line:
//!
//! ```text
//! <thread> <ctx> <u|k> <c|j|J|C|l|r> <0xPC> <0|1> <0xTARGET>
//! ```
//!
//! `c` conditional, `j` direct jump, `J` indirect jump, `l` direct call,
//! `C` indirect call, `r` return. `#` starts a comment line.

mod synth;

pub use synth::{bundled_suite, synth_trace, Scenario, SynthParams, GADGET_INDIRECT_PC, GADGET_SECRET_PC};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};

/// Virtual addresses are 48 bits wide.
pub const ADDR_BITS: u32 = 48;
pub const ADDR_MASK: u64 = (1 << ADDR_BITS) - 1;
/// Fixed instruction length used for fall-through addresses.
pub const INSN_LEN: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Privilege {
    User,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchType {
    Conditional,
    DirectJump,
    IndirectJump,
    IndirectCall,
    DirectCall,
    Return,
}

impl BranchType {
    pub const ALL: [BranchType; 6] = [
        BranchType::Conditional,
        BranchType::DirectJump,
        BranchType::IndirectJump,
        BranchType::IndirectCall,
        BranchType::DirectCall,
        BranchType::Return,
    ];

    pub fn tag(self) -> char {
        match self {
            BranchType::Conditional => 'c',
            BranchType::DirectJump => 'j',
            BranchType::IndirectJump => 'J',
            BranchType::IndirectCall => 'C',
            BranchType::DirectCall => 'l',
            BranchType::Return => 'r',
        }
    }

    pub fn from_tag(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.tag() == c)
    }

    pub fn is_call(self) -> bool {
        matches!(self, BranchType::DirectCall | BranchType::IndirectCall)
    }

    pub fn is_indirect(self) -> bool {
        matches!(self, BranchType::IndirectJump | BranchType::IndirectCall)
    }

    pub fn is_conditional(self) -> bool {
        self == BranchType::Conditional
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchRecord {
    pub thread_id: u8,
    pub context_id: u32,
    pub privilege: Privilege,
    pub branch_type: BranchType,
    pub pc: u64,
    pub taken: bool,
    pub target: u64,
}

impl BranchRecord {
    /// Address of the next sequential instruction.
    pub fn fall_through(&self) -> u64 {
        self.pc.wrapping_add(INSN_LEN) & ADDR_MASK
    }

    /// Where control actually went.
    pub fn next_pc(&self) -> u64 {
        if self.taken {
            self.target
        } else {
            self.fall_through()
        }
    }
}

impl fmt::Display for BranchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {:#x} {} {:#x}",
            self.thread_id,
            self.context_id,
            match self.privilege {
                Privilege::User => 'u',
                Privilege::Kernel => 'k',
            },
            self.branch_type.tag(),
            self.pc,
            self.taken as u8,
            self.target
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStream {
    pub source: String,
    pub records: Vec<BranchRecord>,
}

impl TraceStream {
    pub fn new(source: impl Into<String>, records: Vec<BranchRecord>) -> Self {
        Self { source: source.into(), records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BranchRecord> {
        self.records.iter()
    }
}

const SOURCE_PREFIX: &str = "# source:";

pub fn parse_trace(text: &str) -> Result<TraceStream> {
    let mut stream = TraceStream::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(src) = line.strip_prefix(SOURCE_PREFIX) {
            stream.source = src.trim().to_string();
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        stream.records.push(parse_line(line).map_err(|msg| Error::TraceParse { line: i + 1, msg })?);
    }
    Ok(stream)
}

fn parse_line(line: &str) -> std::result::Result<BranchRecord, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 7 {
        return Err(format!("expected 7 fields, found {}", f.len()));
    }
    let thread_id = f[0].parse::<u8>().map_err(|_| format!("bad thread id `{}`", f[0]))?;
    let context_id = f[1].parse::<u32>().map_err(|_| format!("bad context id `{}`", f[1]))?;
    let privilege = match f[2] {
        "u" => Privilege::User,
        "k" => Privilege::Kernel,
        p => return Err(format!("bad privilege `{p}`")),
    };
    let mut tag = f[3].chars();
    let branch_type = match (tag.next(), tag.next()) {
        (Some(c), None) => BranchType::from_tag(c),
        _ => None,
    }
    .ok_or_else(|| format!("unknown branch type `{}`", f[3]))?;
    let pc = parse_addr(f[4])?;
    let taken = match f[5] {
        "0" => false,
        "1" => true,
        t => return Err(format!("bad taken flag `{t}`")),
    };
    let target = parse_addr(f[6])?;
    Ok(BranchRecord { thread_id, context_id, privilege, branch_type, pc, taken, target })
}

fn parse_addr(s: &str) -> std::result::Result<u64, String> {
    let hex = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| format!("address `{s}` lacks 0x prefix"))?;
    let v = u64::from_str_radix(hex, 16).map_err(|_| {
        if !hex.is_empty() && hex.chars().all(|c| c.is_ascii_hexdigit()) {
            "address exceeds 48 bits".to_string()
        } else {
            format!("non-hex address `{s}`")
        }
    })?;
    if v > ADDR_MASK {
        return Err("address exceeds 48 bits".into());
    }
    Ok(v)
}

pub fn serialize_trace(stream: &TraceStream) -> String {
    let mut s = String::with_capacity(stream.len() * 32 + 64);
    if !stream.source.is_empty() {
        let _ = writeln!(s, "{SOURCE_PREFIX} {}", stream.source);
    }
    for r in &stream.records {
        let _ = writeln!(s, "{r}");
    }
    s
}
