use super::quality::{evaluate, score_candidate, QualityReport};
use crate::error::{Error, Result};
use crate::remap::{HardwareCost, LayeredFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Remapping roles and their I/O signatures. Inputs are laid out low bits
/// first: the 32-bit remap key, then the role's data inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// BTB index/tag/offset from the branch address.
    R1,
    /// BTB tag contribution of the branch history buffer.
    R2,
    /// One-level PHT index.
    R3,
    /// Two-level (global-history) PHT index.
    R4,
    /// Tagged-bank index/tag for the short-history TAGE banks.
    Rt10,
    /// Tagged-bank index/tag for the long-history TAGE banks.
    Rt13,
    /// Perceptron weight-row index.
    Rp,
}

impl Role {
    pub const ALL: [Role; 7] = [Role::R1, Role::R2, Role::R3, Role::R4, Role::Rt10, Role::Rt13, Role::Rp];

    pub fn input_width(self) -> u32 {
        match self {
            Role::R1 | Role::R3 | Role::Rp => 32 + 48,
            Role::R2 => 32 + 58,
            Role::R4 => 32 + 16 + 48,
            Role::Rt10 | Role::Rt13 => 32 + 48 + 16,
        }
    }

    /// Output fields, low bits first.
    pub fn fields(self) -> &'static [(&'static str, u32)] {
        match self {
            Role::R1 => &[("ind", 9), ("tag", 8), ("offs", 5)],
            Role::R2 => &[("tag", 8)],
            Role::R3 | Role::R4 => &[("ind", 14)],
            Role::Rt10 => &[("ind", 10), ("tag", 8)],
            Role::Rt13 => &[("ind", 13), ("tag", 12)],
            Role::Rp => &[("ind", 10)],
        }
    }

    pub fn field_widths(self) -> Vec<u32> {
        self.fields().iter().map(|f| f.1).collect()
    }

    pub fn output_width(self) -> u32 {
        self.fields().iter().map(|f| f.1).sum()
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::R1 => "R1",
            Role::R2 => "R2",
            Role::R3 => "R3",
            Role::R4 => "R4",
            Role::Rt10 => "Rt10",
            Role::Rt13 => "Rt13",
            Role::Rp => "Rp",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown role `{s}` (R1 R2 R3 R4 Rt10 Rt13 Rp)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub uniformity_samples: u64,
    pub avalanche_samples: u64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { uniformity_samples: 1_000_000, avalanche_samples: 100_000, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub index: usize,
    pub score: f64,
    pub quality: QualityReport,
    pub cost: HardwareCost,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub role: Role,
    pub index: usize,
    pub chosen: LayeredFunction,
    pub ledger: Vec<LedgerRow>,
}

/// Evaluates every candidate and returns the minimum-score one; ties go to
/// the shorter critical path, then to fewer transistors.
pub fn select_remaps(
    role: Role,
    candidates: &[LayeredFunction],
    weights: &[f64],
    settings: &EvalSettings,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    if candidates
        .iter()
        .any(|f| f.input_width() != role.input_width() || f.output_width() != role.output_width())
    {
        return Err(Error::RoleWidthMismatch { role: role.to_string() });
    }
    let fields = role.field_widths();
    let ledger: Vec<LedgerRow> = candidates
        .par_iter()
        .enumerate()
        .map(|(index, f)| {
            let quality = evaluate(
                f,
                &fields,
                settings.uniformity_samples,
                settings.avalanche_samples,
                settings.seed,
            )?;
            Ok(LedgerRow { index, score: score_candidate(&quality, weights)?, quality, cost: f.cost() })
        })
        .collect::<Result<_>>()?;

    let best = ledger
        .iter()
        .min_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(a.cost.critical_path_transistors.cmp(&b.cost.critical_path_transistors))
                .then(a.cost.total_transistors.cmp(&b.cost.total_transistors))
        })
        .expect("non-empty ledger")
        .index;
    let mut chosen = candidates[best].clone();
    chosen.set_name(role.name());
    Ok(Selection { role, index: best, chosen, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::remap_gen::{generate_candidates, GenConstraints, PrimitivePool, DEFAULT_WEIGHTS};

    fn quick() -> EvalSettings {
        EvalSettings { uniformity_samples: 20_000, avalanche_samples: 300, seed: 1 }
    }

    #[test]
    fn role_widths_match_table() {
        assert_eq!(Role::R1.input_width(), 80);
        assert_eq!(Role::R1.output_width(), 22);
        assert_eq!(Role::R2.input_width(), 90);
        assert_eq!(Role::R2.output_width(), 8);
        assert_eq!(Role::R3.output_width(), 14);
        assert_eq!(Role::R4.input_width(), 96);
        assert_eq!(Role::Rt13.output_width(), 25);
        assert_eq!(Role::Rp.output_width(), 10);
        assert_eq!("rt13".parse::<Role>().unwrap(), Role::Rt13);
        assert!("R9".parse::<Role>().is_err());
    }

    #[test]
    fn selects_argmin() {
        let c = GenConstraints::for_role(Role::R3, 3);
        let cands = generate_candidates(&c, &PrimitivePool::default(), 6).unwrap();
        let sel = select_remaps(Role::R3, &cands, &DEFAULT_WEIGHTS, &quick()).unwrap();
        assert_eq!(sel.ledger.len(), 6);
        let min = sel.ledger.iter().map(|r| r.score).fold(f64::MAX, f64::min);
        assert_eq!(sel.ledger[sel.index].score, min);
        assert_eq!(sel.chosen.name(), "R3");
        assert_eq!(sel.chosen.layers(), cands[sel.index].layers());
    }

    #[test]
    fn single_candidate_and_errors() {
        let c = GenConstraints::for_role(Role::R3, 4);
        let cands = generate_candidates(&c, &PrimitivePool::default(), 1).unwrap();
        let sel = select_remaps(Role::R3, &cands, &DEFAULT_WEIGHTS, &quick()).unwrap();
        assert_eq!(sel.index, 0);
        assert_eq!(
            select_remaps(Role::R1, &cands, &DEFAULT_WEIGHTS, &quick()).unwrap_err().to_string(),
            "width mismatch for role R1"
        );
        assert_eq!(select_remaps(Role::R3, &[], &DEFAULT_WEIGHTS, &quick()).unwrap_err(), Error::NoCandidates);
    }

    #[test]
    fn ties_break_on_cost() {
        let c = GenConstraints::for_role(Role::R3, 5);
        let mut cands = generate_candidates(&c, &PrimitivePool::default(), 2).unwrap();
        // duplicate candidate 0 behind a costlier twin: identical scores
        let twin = cands[0].clone();
        cands.insert(0, twin);
        let sel = select_remaps(Role::R3, &cands, &[0.0; 4], &quick()).unwrap();
        let best = &sel.ledger[sel.index];
        assert!(sel.ledger.iter().all(|r| r.cost.critical_path_transistors >= best.cost.critical_path_transistors));
    }
}
