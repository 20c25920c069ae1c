//! Simulated attackers for the collision-based attack surface.
//!
//! Attacker routines only ever see an [`Observation`] for branches they
//! execute themselves: did it mispredict, did it evict something. Success
//! predicates and eviction-set verification are computed by the harness
//! from ground truth, never fed back to the attacker.

mod rig;
mod scenario;
mod search;

pub use rig::Observation;
pub use scenario::{run_scenario, run_scenario_with, scenario_csv, DOS_SUCCESS_INFLATION, HOME_SUCCESS_ACCURACY};
pub use search::{
    build_reuse_set, collision_frequency, gem_find_eviction_sets, target_injection, CollisionEstimate, EvictionSet,
    GemResult, InjectOpts, ReuseGoal, ReuseSet,
};

use crate::analysis::StructGeom;
use crate::error::{Error, Result};
use crate::predictors::{ModelKind, PredictorConfig};
use crate::sim::thresholds_for;
use crate::st::ThresholdConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    ReuseHome,
    ReuseAway,
    EvictHome,
    EvictAway,
    TargetInject,
    SameAddressSpace,
    DosEvict,
    DosReuse,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::ReuseHome,
        Family::ReuseAway,
        Family::EvictHome,
        Family::EvictAway,
        Family::TargetInject,
        Family::SameAddressSpace,
        Family::DosEvict,
        Family::DosReuse,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Family::ReuseHome => "rb-he",
            Family::ReuseAway => "rb-ae",
            Family::EvictHome => "eb-he",
            Family::EvictAway => "eb-ae",
            Family::TargetInject => "inject",
            Family::SameAddressSpace => "same-as",
            Family::DosEvict => "dos-evict",
            Family::DosReuse => "dos-reuse",
        }
    }

    /// Side channels: the attacker learns a victim secret.
    pub fn is_home(self) -> bool {
        matches!(self, Family::ReuseHome | Family::EvictHome | Family::SameAddressSpace)
    }

    pub fn is_dos(self) -> bool {
        matches!(self, Family::DosEvict | Family::DosReuse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    Btb,
    Pht,
    Rsb,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Btb, Structure::Pht, Structure::Rsb];

    pub fn name(self) -> &'static str {
        match self {
            Structure::Btb => "btb",
            Structure::Pht => "pht",
            Structure::Rsb => "rsb",
        }
    }

    /// Whether the attack surface has a cell for `family` on this structure.
    pub fn allows(self, family: Family) -> bool {
        use Family::*;
        match self {
            Structure::Btb => true,
            // untagged counters are never evicted and hold no targets
            Structure::Pht => matches!(family, ReuseHome | ReuseAway | SameAddressSpace | DosReuse),
            Structure::Rsb => !matches!(family, SameAddressSpace | DosReuse),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One attack-surface cell plus the rig it runs on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub family: Family,
    pub structure: Structure,
    pub geometry: StructGeom,
    /// Collision-search candidates the attacker may try before measuring.
    pub budget: u64,
    /// Measured trials after the search.
    pub trials: u32,
    /// Difficulty factor for token models; `None` disables re-randomization.
    pub r: Option<f64>,
    pub seed: u64,
}

impl AttackScenario {
    pub fn new(structure: Structure, family: Family) -> Self {
        Self {
            family,
            structure,
            geometry: StructGeom::scaled(),
            budget: 4096,
            trials: 100,
            r: Some(0.05),
            seed: 0,
        }
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.structure, self.family)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.structure.allows(self.family) {
            let why = match self.structure {
                Structure::Pht if matches!(self.family, Family::TargetInject) => "PHT entries hold no targets",
                Structure::Pht => "PHT entries are not evicted",
                _ => "no such cell",
            };
            return Err(Error::InvalidScenario(format!("{}: {why}", self.name())));
        }
        if self.trials == 0 {
            return Err(Error::InvalidScenario("trials must be positive".into()));
        }
        Ok(())
    }

    /// Every valid cell, in table order.
    pub fn all() -> Vec<AttackScenario> {
        Structure::ALL
            .into_iter()
            .flat_map(|s| Family::ALL.into_iter().filter(move |f| s.allows(*f)).map(move |f| Self::new(s, f)))
            .collect()
    }
}

impl FromStr for AttackScenario {
    type Err = Error;
    /// `btb-rb-he`, `rsb-eb-ae`, `pht-dos-reuse`, ...
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let (st, fam) = s.split_once('-').ok_or_else(|| Error::InvalidScenario(s.clone()))?;
        let structure = Structure::ALL
            .into_iter()
            .find(|x| x.name() == st)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown structure `{st}`")))?;
        let family = Family::ALL
            .into_iter()
            .find(|x| x.code() == fam)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown attack family `{fam}`")))?;
        let sc = Self::new(structure, family);
        sc.validate()?;
        Ok(sc)
    }
}

/// What one attack run achieved and what it cost. Event counts are the
/// attacker context's own, except where noted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub success: bool,
    /// Distinguishing accuracy (home effects), redirection rate (away
    /// effects), misprediction-rate inflation (DoS) or trials to success
    /// (injection).
    pub score: f64,
    /// Attacker mispredictions; victim target mispredictions for injection.
    pub misp_triggered: u64,
    pub evict_triggered: u64,
    pub rerandomizations_observed: u64,
    pub wall_trials: u64,
    pub victim_misp: u64,
    pub victim_rerandomizations: u64,
}

/// A model instance under attack: configuration plus thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub config: PredictorConfig,
    pub thresholds: ThresholdConfig,
}

impl Target {
    /// `model` on `geom`, with thresholds Γ = ceil(r·C) computed for that
    /// geometry. Models without tokens never re-randomize.
    pub fn new(model: ModelKind, geom: &StructGeom, r: Option<f64>) -> Result<Self> {
        let config = config_for(model, geom);
        config.validate()?;
        let thresholds = match r {
            Some(r) if model.uses_tokens() => thresholds_for(&config, r)?,
            _ => ThresholdConfig::disabled(),
        };
        Ok(Self { config, thresholds })
    }

    pub fn with(config: PredictorConfig, thresholds: ThresholdConfig) -> Self {
        Self { config, thresholds }
    }
}

/// Predictor configuration whose BTB matches `geom`. The conservative model
/// keeps its own full-tag shape and only takes the target width.
pub fn config_for(model: ModelKind, geom: &StructGeom) -> PredictorConfig {
    let mut c = if *geom == StructGeom::scaled() {
        PredictorConfig::scaled(model)
    } else {
        PredictorConfig::for_model(model)
    };
    if model != ModelKind::Conservative {
        c.btb_sets = geom.sets as u32;
        c.btb_ways = geom.ways;
        c.btb_tag_bits = geom.tag_bits;
        c.btb_offset_bits = geom.offset_bits;
    }
    c.btb_target_bits = geom.target_bits;
    c
}
