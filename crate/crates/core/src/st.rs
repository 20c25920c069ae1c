//! Per-context secret tokens, event counters and the re-randomization
//! protocol. This plays the OS role: it saves and restores token state on
//! context and mode switches.

use crate::error::{Error, Result};
use crate::predictors::EventKind;
use crate::trace::Privilege;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// 64-bit token: ψ keys the remapping functions, φ encrypts stored targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SecretToken {
    pub psi: u32,
    pub phi: u32,
}

impl SecretToken {
    pub const ZERO: SecretToken = SecretToken { psi: 0, phi: 0 };

    /// Low half is ψ, high half is φ.
    pub fn from_u64(v: u64) -> Self {
        Self { psi: v as u32, phi: (v >> 32) as u32 }
    }

    pub fn to_u64(self) -> u64 {
        self.psi as u64 | (self.phi as u64) << 32
    }

    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self::from_u64(rng.next_u64())
    }
}

/// Re-randomization thresholds; `None` disables a counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub misp_threshold: Option<u64>,
    pub evict_threshold: Option<u64>,
    /// Optional separate budget for tagged-bank mispredictions.
    pub third_threshold: Option<u64>,
    pub r: f64,
}

impl ThresholdConfig {
    pub fn disabled() -> Self {
        Self { misp_threshold: None, evict_threshold: None, third_threshold: None, r: 1.0 }
    }

    pub fn fixed(misp: u64, evict: u64) -> Self {
        Self { misp_threshold: Some(misp.max(1)), evict_threshold: Some(evict.max(1)), third_threshold: None, r: 1.0 }
    }

    pub fn is_disabled(&self) -> bool {
        self.misp_threshold.is_none() && self.evict_threshold.is_none() && self.third_threshold.is_none()
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

/// A software entity: a process at one privilege level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContextKey {
    pub context_id: u32,
    pub privilege: Privilege,
}

impl ContextKey {
    pub fn user(context_id: u32) -> Self {
        Self { context_id, privilege: Privilege::User }
    }

    pub fn kernel(context_id: u32) -> Self {
        Self { context_id, privilege: Privilege::Kernel }
    }
}

impl fmt::Display for ContextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.privilege {
            Privilege::User => write!(f, "{}", self.context_id),
            Privilege::Kernel => write!(f, "{}k", self.context_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub key: ContextKey,
    pub token: SecretToken,
    pub misp_counter: u64,
    pub evict_counter: u64,
    pub third_counter: u64,
    pub rerandomization_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RerandomizedNotice {
    pub key: ContextKey,
    pub old: SecretToken,
    pub new: SecretToken,
}

/// Which counter an event decrements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counter {
    Misp,
    Evict,
    Third,
}

impl Counter {
    pub fn for_event(kind: EventKind) -> Option<Counter> {
        match kind {
            EventKind::DirectionMisp | EventKind::TargetMisp => Some(Counter::Misp),
            EventKind::BtbEviction => Some(Counter::Evict),
            EventKind::TaggedMisp => Some(Counter::Third),
            EventKind::RsbUnderflow | EventKind::StRerandomized => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StManager {
    thresholds: ThresholdConfig,
    rng: ChaCha8Rng,
    table: BTreeMap<ContextKey, ContextEntry>,
    active: Option<ContextKey>,
}

impl StManager {
    pub fn new(thresholds: ThresholdConfig, seed: u64) -> Self {
        Self { thresholds, rng: ChaCha8Rng::seed_from_u64(seed), table: BTreeMap::new(), active: None }
    }

    pub fn thresholds(&self) -> &ThresholdConfig {
        &self.thresholds
    }

    fn fresh_entry(&self, key: ContextKey, token: SecretToken) -> ContextEntry {
        ContextEntry {
            key,
            token,
            misp_counter: self.thresholds.misp_threshold.unwrap_or(0),
            evict_counter: self.thresholds.evict_threshold.unwrap_or(0),
            third_counter: self.thresholds.third_threshold.unwrap_or(0),
            rerandomization_count: 0,
        }
    }

    /// Registers `key` with a fresh token, or with a copy of `share_with`'s.
    pub fn assign_token(&mut self, key: ContextKey, share_with: Option<ContextKey>) -> Result<SecretToken> {
        if self.table.contains_key(&key) {
            return Err(Error::ContextExists(key.to_string()));
        }
        let token = match share_with {
            Some(other) => self.table.get(&other).ok_or_else(|| Error::UnknownContext(other.to_string()))?.token,
            None => SecretToken::draw(&mut self.rng),
        };
        let entry = self.fresh_entry(key, token);
        self.table.insert(key, entry);
        Ok(token)
    }

    /// Registers `key` on first sight and returns its token.
    pub fn ensure(&mut self, key: ContextKey) -> SecretToken {
        match self.table.get(&key) {
            Some(e) => e.token,
            None => self.assign_token(key, None).expect("not registered"),
        }
    }

    pub fn is_registered(&self, key: ContextKey) -> bool {
        self.table.contains_key(&key)
    }

    pub fn entry(&self, key: ContextKey) -> Result<&ContextEntry> {
        self.table.get(&key).ok_or_else(|| Error::UnknownContext(key.to_string()))
    }

    pub fn token(&self, key: ContextKey) -> Result<SecretToken> {
        Ok(self.entry(key)?.token)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ContextEntry> {
        self.table.values()
    }

    pub fn active(&self) -> Option<ContextKey> {
        self.active
    }

    /// Decrements the counter matching `kind`; at zero the context gets a
    /// new token and all of its counters restart.
    pub fn on_event(&mut self, key: ContextKey, kind: EventKind) -> Result<Option<RerandomizedNotice>> {
        let Some(counter) = Counter::for_event(kind) else {
            self.entry(key)?;
            return Ok(None);
        };
        let th = self.thresholds;
        let limit = match counter {
            Counter::Misp => th.misp_threshold,
            Counter::Evict => th.evict_threshold,
            Counter::Third => th.third_threshold,
        };
        let entry = self.table.get_mut(&key).ok_or_else(|| Error::UnknownContext(key.to_string()))?;
        if limit.is_none() {
            return Ok(None);
        }
        let c = match counter {
            Counter::Misp => &mut entry.misp_counter,
            Counter::Evict => &mut entry.evict_counter,
            Counter::Third => &mut entry.third_counter,
        };
        *c = c.saturating_sub(1);
        if *c > 0 {
            return Ok(None);
        }
        let old = entry.token;
        let new = SecretToken::draw(&mut self.rng);
        entry.token = new;
        entry.misp_counter = th.misp_threshold.unwrap_or(0);
        entry.evict_counter = th.evict_threshold.unwrap_or(0);
        entry.third_counter = th.third_threshold.unwrap_or(0);
        entry.rerandomization_count += 1;
        Ok(Some(RerandomizedNotice { key, old, new }))
    }

    /// Makes `to` the active context; `from` (if any) is left as saved.
    pub fn context_switch(&mut self, from: Option<ContextKey>, to: ContextKey) -> Result<SecretToken> {
        if let Some(f) = from {
            self.entry(f)?;
        }
        let token = self.token(to)?;
        self.active = Some(to);
        Ok(token)
    }

    pub fn total_rerandomizations(&self) -> u64 {
        self.table.values().map(|e| e.rerandomization_count).sum()
    }
}
