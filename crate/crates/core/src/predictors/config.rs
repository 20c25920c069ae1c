use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Baseline,
    Stbpu,
    FlushIbpb,
    FlushIbrs,
    PartitionStibp,
    Conservative,
    TageLite,
    StTageLite,
    Perceptron,
    StPerceptron,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Baseline,
        ModelKind::Stbpu,
        ModelKind::FlushIbpb,
        ModelKind::FlushIbrs,
        ModelKind::PartitionStibp,
        ModelKind::Conservative,
        ModelKind::TageLite,
        ModelKind::StTageLite,
        ModelKind::Perceptron,
        ModelKind::StPerceptron,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Stbpu => "stbpu",
            ModelKind::FlushIbpb => "flush_ibpb",
            ModelKind::FlushIbrs => "flush_ibrs",
            ModelKind::PartitionStibp => "partition_stibp",
            ModelKind::Conservative => "conservative",
            ModelKind::TageLite => "tage_lite",
            ModelKind::StTageLite => "st_tage_lite",
            ModelKind::Perceptron => "perceptron",
            ModelKind::StPerceptron => "st_perceptron",
        }
    }

    /// Models that key their structures with secret tokens.
    pub fn uses_tokens(self) -> bool {
        matches!(self, ModelKind::Stbpu | ModelKind::StTageLite | ModelKind::StPerceptron)
    }

    pub fn direction(self) -> DirectionKind {
        match self {
            ModelKind::TageLite | ModelKind::StTageLite => DirectionKind::Tage,
            ModelKind::Perceptron | ModelKind::StPerceptron => DirectionKind::Perceptron,
            _ => DirectionKind::Gshare,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionKind {
    Gshare,
    Tage,
    Perceptron,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_").to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

/// BPU geometry and model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub btb_sets: u32,
    pub btb_ways: u32,
    pub btb_tag_bits: u32,
    pub btb_offset_bits: u32,
    pub btb_target_bits: u32,
    /// Highest pc bit (exclusive) folded into the baseline tag; 48 keeps
    /// full tags.
    pub btb_tag_source_bits: u32,
    pub pht_entries: u32,
    pub pht_counter_bits: u32,
    pub ghr_bits: u32,
    pub bhb_bits: u32,
    /// BHB shift per update.
    pub bhb_shift: u32,
    pub rsb_entries: u32,
    pub perceptron_rows: u32,
    pub perceptron_history: u32,
    pub model: ModelKind,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

impl PredictorConfig {
    pub const fn baseline() -> Self {
        Self {
            btb_sets: 512,
            btb_ways: 8,
            btb_tag_bits: 8,
            btb_offset_bits: 5,
            btb_target_bits: 32,
            btb_tag_source_bits: 30,
            pht_entries: 1 << 14,
            pht_counter_bits: 2,
            ghr_bits: 18,
            bhb_bits: 58,
            bhb_shift: 2,
            rsb_entries: 16,
            perceptron_rows: 1 << 10,
            perceptron_history: 24,
            model: ModelKind::Baseline,
        }
    }

    /// Full-size preset for `model`.
    pub fn for_model(model: ModelKind) -> Self {
        let mut c = Self { model, ..Self::baseline() };
        if model.uses_tokens() {
            c.ghr_bits = 16;
        }
        if model == ModelKind::Conservative {
            // same payload budget with full-address tags: 4096·45/80 → 2048
            c.btb_sets = 256;
            c.btb_tag_bits = 48 - 8 - 5;
            c.btb_tag_source_bits = 48;
        }
        c
    }

    /// Desk-scale rig: 64 sets × 4 ways, 6-bit tags, 4-bit offsets.
    pub fn scaled(model: ModelKind) -> Self {
        let mut c = Self::for_model(model);
        c.btb_sets = 64;
        c.btb_ways = 4;
        c.btb_tag_bits = 6;
        c.btb_offset_bits = 4;
        c.btb_tag_source_bits = 30;
        c.pht_entries = 1 << 10;
        c.ghr_bits = 10;
        c.perceptron_rows = 1 << 8;
        if model == ModelKind::Conservative {
            c.btb_sets = 32;
            c.btb_tag_bits = 48 - 5 - 4;
            c.btb_tag_source_bits = 48;
        }
        c
    }

    pub fn index_bits(&self) -> u32 {
        self.btb_sets.trailing_zeros()
    }

    pub fn pht_index_bits(&self) -> u32 {
        self.pht_entries.trailing_zeros()
    }

    /// Payload bits per BTB entry (tag, offset, target).
    pub fn entry_bits(&self) -> u32 {
        self.btb_tag_bits + self.btb_offset_bits + self.btb_target_bits
    }

    /// Conservative entry count for a payload budget: keep total payload
    /// bits, use full 48-bit tags, round down to a power of two.
    pub fn conservative_entries(budget_entries: u64, entry_bits: u32, target_bits: u32) -> u64 {
        let full = budget_entries * entry_bits as u64 / (48 + target_bits) as u64;
        if full == 0 {
            0
        } else {
            1 << (63 - full.leading_zeros())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !self.btb_sets.is_power_of_two() || !self.pht_entries.is_power_of_two() {
            return err("btb_sets and pht_entries must be powers of two".into());
        }
        if self.btb_ways == 0 || self.btb_ways > 64 {
            return err(format!("btb_ways must be in 1..=64, got {}", self.btb_ways));
        }
        if !(1..=8).contains(&self.pht_counter_bits) {
            return err("pht_counter_bits must be in 1..=8".into());
        }
        if self.ghr_bits > 64 || self.bhb_bits > 64 || self.bhb_bits == 0 {
            return err("ghr_bits ≤ 64 and bhb_bits in 1..=64".into());
        }
        if !(1..=48).contains(&self.btb_target_bits) {
            return err("btb_target_bits must be in 1..=48".into());
        }
        if self.index_bits() + self.btb_offset_bits > 48 || self.btb_tag_bits > 48 || self.btb_tag_source_bits > 48 {
            return err("index, offset and tag must fit in a 48-bit address".into());
        }
        if self.rsb_entries == 0 {
            return err("rsb_entries must be positive".into());
        }
        if !self.perceptron_rows.is_power_of_two() || self.perceptron_history == 0 || self.perceptron_history > 64 {
            return err("perceptron_rows must be a power of two, perceptron_history in 1..=64".into());
        }
        if self.model.uses_tokens() {
            // remapped fields are truncated, never widened
            if self.index_bits() > 9 || self.btb_tag_bits > 8 || self.btb_offset_bits > 5 || self.pht_index_bits() > 14 {
                return err(format!(
                    "{} needs ≤ 512 sets, ≤ 8 tag bits, ≤ 5 offset bits and ≤ 2^14 PHT entries",
                    self.model
                ));
            }
            if self.perceptron_rows > 1 << 10 {
                return err("perceptron rows exceed the remapped index width".into());
            }
        }
        if self.model == ModelKind::PartitionStibp && (self.index_bits() == 0 || self.pht_index_bits() == 0) {
            return err("partitioning needs at least two sets".into());
        }
        Ok(())
    }

    /// Sets one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = || -> Result<u32> {
            let t = value.trim();
            let parsed = if let Some(h) = t.strip_prefix("0x") { u32::from_str_radix(h, 16).ok() } else { t.parse().ok() };
            parsed.ok_or_else(|| Error::Config(format!("bad value `{value}` for `{key}`")))
        };
        match key.trim() {
            "btb_sets" => self.btb_sets = v()?,
            "btb_ways" => self.btb_ways = v()?,
            "btb_tag_bits" => self.btb_tag_bits = v()?,
            "btb_offset_bits" => self.btb_offset_bits = v()?,
            "btb_target_bits" => self.btb_target_bits = v()?,
            "btb_tag_source_bits" => self.btb_tag_source_bits = v()?,
            "pht_entries" => self.pht_entries = v()?,
            "pht_counter_bits" => self.pht_counter_bits = v()?,
            "ghr_bits" => self.ghr_bits = v()?,
            "bhb_bits" => self.bhb_bits = v()?,
            "bhb_shift" => self.bhb_shift = v()?,
            "rsb_entries" => self.rsb_entries = v()?,
            "perceptron_rows" => self.perceptron_rows = v()?,
            "perceptron_history" => self.perceptron_history = v()?,
            "model" => self.model = value.parse()?,
            k => return Err(Error::Config(format!("unknown config key `{k}`"))),
        }
        Ok(())
    }

    /// Parses a key-value file on top of `base`. `#` starts a comment.
    pub fn parse_kv(text: &str, base: Self) -> Result<Self> {
        let mut c = base;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "model = {}\nbtb_sets = {}\nbtb_ways = {}\nbtb_tag_bits = {}\nbtb_offset_bits = {}\nbtb_target_bits = {}\n\
             btb_tag_source_bits = {}\npht_entries = {}\npht_counter_bits = {}\nghr_bits = {}\nbhb_bits = {}\n\
             bhb_shift = {}\nrsb_entries = {}\nperceptron_rows = {}\nperceptron_history = {}\n",
            self.model,
            self.btb_sets,
            self.btb_ways,
            self.btb_tag_bits,
            self.btb_offset_bits,
            self.btb_target_bits,
            self.btb_tag_source_bits,
            self.pht_entries,
            self.pht_counter_bits,
            self.ghr_bits,
            self.bhb_bits,
            self.bhb_shift,
            self.rsb_entries,
            self.perceptron_rows,
            self.perceptron_history
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_geometry() {
        let c = PredictorConfig::baseline();
        assert_eq!(c.btb_sets * c.btb_ways, 4096);
        assert_eq!(c.index_bits(), 9);
        c.validate().unwrap();
        for m in ModelKind::ALL {
            PredictorConfig::for_model(m).validate().unwrap();
            PredictorConfig::scaled(m).validate().unwrap();
        }
    }

    #[test]
    fn conservative_budget() {
        assert_eq!(PredictorConfig::conservative_entries(4096, 45, 32), 2048);
        let c = PredictorConfig::for_model(ModelKind::Conservative);
        assert_eq!(c.btb_sets * c.btb_ways, 2048);
        assert_eq!(c.index_bits() + c.btb_offset_bits + c.btb_tag_bits, 48);
    }

    #[test]
    fn kv_round_trip_and_errors() {
        let c = PredictorConfig::scaled(ModelKind::StTageLite);
        assert_eq!(PredictorConfig::parse_kv(&c.to_kv(), PredictorConfig::baseline()).unwrap(), c);
        let c = PredictorConfig::parse_kv("# x\nbtb_ways = 4  # four\nmodel = flush-ibpb\n", PredictorConfig::baseline()).unwrap();
        assert_eq!(c.btb_ways, 4);
        assert_eq!(c.model, ModelKind::FlushIbpb);
        assert!(PredictorConfig::parse_kv("btb_sets = 100", PredictorConfig::baseline()).is_err());
        assert!(PredictorConfig::parse_kv("nope = 1", PredictorConfig::baseline()).is_err());
        assert!(PredictorConfig::parse_kv("btb_sets", PredictorConfig::baseline()).is_err());
        assert!(PredictorConfig::parse_kv("model = stbpu\nbtb_sets = 1024", PredictorConfig::baseline()).is_err());
    }
}
