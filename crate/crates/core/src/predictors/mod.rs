//! Branch prediction unit models behind one predict/update contract.
//!
//! A [`Bpu`] holds a BTB, a direction predictor, and per-thread GHR, BHB
//! and RSB state. Token models compute every index and tag through the
//! keyed remaps and XOR stored targets with φ; the other models use fixed
//! bit slices of the pc.

mod btb;
mod config;
mod direction;
mod remaps;

pub use btb::{Btb, BtbEntry, BtbStats, Insert};
pub use config::{DirectionKind, ModelKind, PredictorConfig};
pub use direction::DirSource;
pub use remaps::RemapSet;

use crate::bits::{mask64, xor_fold};
use crate::st::SecretToken;
use crate::trace::{BranchRecord, BranchType, ADDR_MASK};
use direction::{DirLookup, Direction, Keying};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    DirectionMisp,
    TargetMisp,
    BtbEviction,
    RsbUnderflow,
    StRerandomized,
    /// A tagged TAGE bank provided a wrong direction.
    TaggedMisp,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::DirectionMisp => "direction_misp",
            EventKind::TargetMisp => "target_misp",
            EventKind::BtbEviction => "btb_eviction",
            EventKind::RsbUnderflow => "rsb_underflow",
            EventKind::StRerandomized => "st_rerandomized",
            EventKind::TaggedMisp => "tagged_misp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BpuEvent {
    pub kind: EventKind,
    pub context_id: u32,
    pub thread_id: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetSource {
    BtbMode1,
    BtbMode2,
    Rsb,
    /// No structure had a target; fall through.
    Static,
}

/// BTB coordinates of one lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BtbKey {
    pub set: usize,
    pub tag: u64,
    pub offset: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub direction: Option<bool>,
    pub target: Option<u64>,
    pub dir_source: Option<DirSource>,
    pub target_source: Option<TargetSource>,
    mode1: BtbKey,
    mode2: Option<BtbKey>,
    dir: Option<DirLookup>,
    rsb_underflow: bool,
}

impl Prediction {
    pub fn mode1_key(&self) -> BtbKey {
        self.mode1
    }

    pub fn mode2_key(&self) -> Option<BtbKey> {
        self.mode2
    }
}

/// Comparison-model triggers raised by the simulation driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hook {
    ContextSwitch,
    KernelEntry,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Rsb {
    slots: Vec<u64>,
    top: usize,
    depth: usize,
}

impl Rsb {
    fn new(n: usize) -> Self {
        Rsb { slots: vec![0; n], top: 0, depth: 0 }
    }

    /// Pushing onto a full stack overwrites the oldest entry.
    fn push(&mut self, v: u64) {
        let n = self.slots.len();
        self.slots[self.top] = v;
        self.top = (self.top + 1) % n;
        self.depth = (self.depth + 1).min(n);
    }

    fn peek(&self) -> Option<u64> {
        let n = self.slots.len();
        (self.depth > 0).then(|| self.slots[(self.top + n - 1) % n])
    }

    fn pop(&mut self) -> Option<u64> {
        let v = self.peek()?;
        let n = self.slots.len();
        self.top = (self.top + n - 1) % n;
        self.depth -= 1;
        Some(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ThreadState {
    ghr: u64,
    bhb: u64,
    /// Longer outcome history for TAGE and perceptron.
    long_hist: u64,
    rsb: Rsb,
}

#[derive(Debug, Clone)]
enum Keys {
    Baseline,
    Remapped(Arc<RemapSet>),
}

#[derive(Debug, Clone)]
pub struct Bpu {
    cfg: PredictorConfig,
    keys: Keys,
    btb: Btb,
    dir: Direction,
    threads: [ThreadState; 2],
}

impl Bpu {
    /// Token models use the shipped remaps.
    pub fn new(cfg: PredictorConfig) -> Self {
        let keys = if cfg.model.uses_tokens() { Keys::Remapped(RemapSet::shipped()) } else { Keys::Baseline };
        Self::build(cfg, keys)
    }

    pub fn with_remaps(cfg: PredictorConfig, remaps: Arc<RemapSet>) -> Self {
        Self::build(cfg, Keys::Remapped(remaps))
    }

    /// Token model whose remaps are replaced by the baseline bit slices.
    /// With a zero token it behaves exactly like the baseline.
    pub fn identity(cfg: PredictorConfig) -> Self {
        Self::build(cfg, Keys::Baseline)
    }

    fn build(cfg: PredictorConfig, keys: Keys) -> Self {
        let rsb = Rsb::new(cfg.rsb_entries as usize);
        let ts = ThreadState { rsb, ..Default::default() };
        Bpu {
            btb: Btb::new(cfg.btb_sets as usize, cfg.btb_ways as usize),
            dir: Direction::new(&cfg),
            threads: [ts.clone(), ts],
            cfg,
            keys,
        }
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn btb(&self) -> &Btb {
        &self.btb
    }

    pub fn rsb_depth(&self, thread: u8) -> usize {
        self.threads[thread as usize & 1].rsb.depth
    }

    pub fn bhb(&self, thread: u8) -> u64 {
        self.threads[thread as usize & 1].bhb
    }

    pub fn ghr(&self, thread: u8) -> u64 {
        self.threads[thread as usize & 1].ghr
    }

    pub fn counters_in_range(&self) -> bool {
        self.dir.counters_in_range()
    }

    /// Empties every structure and history. Statistics survive.
    pub fn flush(&mut self) {
        let stats = self.btb.stats;
        self.btb.flush();
        self.btb.stats = stats;
        self.dir.flush(&self.cfg);
        let rsb = Rsb::new(self.cfg.rsb_entries as usize);
        for t in &mut self.threads {
            *t = ThreadState { rsb: rsb.clone(), ..Default::default() };
        }
    }

    /// Applies the comparison-model reaction to a driver event.
    pub fn on_hook(&mut self, hook: Hook) {
        match (self.cfg.model, hook) {
            (ModelKind::FlushIbpb, Hook::ContextSwitch) | (ModelKind::FlushIbrs, Hook::KernelEntry) => self.flush(),
            _ => {}
        }
    }

    fn remaps(&self) -> Option<&RemapSet> {
        match &self.keys {
            Keys::Baseline => None,
            Keys::Remapped(r) => Some(r),
        }
    }

    fn uses_phi(&self) -> bool {
        self.cfg.model.uses_tokens()
    }

    fn keying(&self, thread: u8, psi: u32) -> Keying<'_> {
        Keying {
            remaps: self.remaps(),
            psi,
            partition: (self.cfg.model == ModelKind::PartitionStibp).then_some(thread as u64 & 1),
        }
    }

    /// Mode-one BTB coordinates of `pc`.
    pub fn btb_key(&self, pc: u64, thread: u8, token: SecretToken) -> BtbKey {
        let c = &self.cfg;
        let ib = c.index_bits();
        let (set, tag, offset) = match self.remaps() {
            Some(r) => {
                let (i, t, o) = r.r1(token.psi, pc);
                (i, t, o)
            }
            None => {
                let lo = c.btb_offset_bits + ib;
                let src = c.btb_tag_source_bits.saturating_sub(lo);
                (pc >> c.btb_offset_bits, xor_fold(pc >> lo, src, c.btb_tag_bits), pc)
            }
        };
        let set = self.keying(thread, token.psi).place(set, ib);
        BtbKey { set: set as usize, tag: tag & mask64(c.btb_tag_bits), offset: (offset & mask64(c.btb_offset_bits)) as u32 }
    }

    /// Mode-two coordinates: the mode-one tag mixed with the BHB.
    fn btb_key_mode2(&self, k1: BtbKey, thread: u8, token: SecretToken) -> BtbKey {
        let bhb = self.threads[thread as usize & 1].bhb;
        let t = self.cfg.btb_tag_bits;
        let mix = match self.remaps() {
            Some(r) => r.r2(token.psi, bhb),
            None => xor_fold(bhb, self.cfg.bhb_bits, t),
        };
        BtbKey { tag: (k1.tag ^ mix) & mask64(t), ..k1 }
    }

    fn phi(&self, token: SecretToken) -> u64 {
        if self.uses_phi() {
            token.phi as u64
        } else {
            0
        }
    }

    fn encode(&self, target: u64, token: SecretToken) -> u64 {
        (target ^ self.phi(token)) & mask64(self.cfg.btb_target_bits)
    }

    /// Rebuilds a full address: high bits from the branch pc, low bits
    /// from the decrypted stored value.
    fn decode(&self, pc: u64, stored: u64, token: SecretToken) -> u64 {
        let m = mask64(self.cfg.btb_target_bits);
        ((pc & !m) | ((stored ^ self.phi(token)) & m)) & ADDR_MASK
    }

    fn btb_target(&self, k: BtbKey, pc: u64, token: SecretToken) -> Option<u64> {
        self.btb.lookup(k.set, k.tag, k.offset).map(|w| self.decode(pc, self.btb.read(k.set, w).stored_target, token))
    }

    pub fn predict(&self, rec: &BranchRecord, token: SecretToken) -> Prediction {
        let th = &self.threads[rec.thread_id as usize & 1];
        let mode1 = self.btb_key(rec.pc, rec.thread_id, token);
        let mut p = Prediction {
            direction: None,
            target: None,
            dir_source: None,
            target_source: None,
            mode1,
            mode2: None,
            dir: None,
            rsb_underflow: false,
        };
        let indirect = |p: &mut Prediction| {
            let k2 = self.btb_key_mode2(mode1, rec.thread_id, token);
            p.mode2 = Some(k2);
            if let Some(t) = self.btb_target(k2, rec.pc, token) {
                p.target = Some(t);
                p.target_source = Some(TargetSource::BtbMode2);
            } else if let Some(t) = self.btb_target(mode1, rec.pc, token) {
                p.target = Some(t);
                p.target_source = Some(TargetSource::BtbMode1);
            } else {
                p.target_source = Some(TargetSource::Static);
            }
        };
        match rec.branch_type {
            BranchType::Conditional => {
                let l = self.dir.predict(&self.keying(rec.thread_id, token.psi), rec.pc, th.ghr, th.long_hist);
                p.direction = Some(l.taken);
                p.dir_source = Some(l.source);
                p.dir = Some(l);
                if l.taken {
                    p.target = self.btb_target(mode1, rec.pc, token);
                    p.target_source = Some(if p.target.is_some() { TargetSource::BtbMode1 } else { TargetSource::Static });
                }
            }
            BranchType::DirectJump | BranchType::DirectCall => {
                p.target = self.btb_target(mode1, rec.pc, token);
                p.target_source = Some(if p.target.is_some() { TargetSource::BtbMode1 } else { TargetSource::Static });
            }
            BranchType::IndirectJump | BranchType::IndirectCall => indirect(&mut p),
            BranchType::Return => match th.rsb.peek() {
                Some(v) => {
                    p.target = Some(self.decode(rec.pc, v, token));
                    p.target_source = Some(TargetSource::Rsb);
                }
                None => {
                    p.rsb_underflow = true;
                    indirect(&mut p);
                }
            },
        }
        p
    }

    /// Trains every structure on the resolved branch and appends the
    /// events it raised to `out`.
    pub fn update_into(&mut self, rec: &BranchRecord, p: &Prediction, token: SecretToken, out: &mut Vec<BpuEvent>) {
        let ev = |kind| BpuEvent { kind, context_id: rec.context_id, thread_id: rec.thread_id };
        let t = rec.thread_id as usize & 1;
        let bt = rec.branch_type;
        let taken = rec.taken || !bt.is_conditional();

        if let (Some(d), Some(l)) = (p.direction, p.dir.as_ref()) {
            if d != rec.taken {
                out.push(ev(EventKind::DirectionMisp));
            }
            let lh = self.threads[t].long_hist;
            if self.dir.update(l, rec.taken, lh) {
                out.push(ev(EventKind::TaggedMisp));
            }
        }
        if taken && p.target != Some(rec.target) {
            out.push(ev(EventKind::TargetMisp));
        }

        if taken {
            let stored = self.encode(rec.target, token);
            let mut insert = |btb: &mut Btb, k: BtbKey| {
                if btb.insert(k.set, k.tag, k.offset, stored) == Insert::Evicted {
                    out.push(ev(EventKind::BtbEviction));
                }
            };
            let via_indirect = bt.is_indirect() || (bt == BranchType::Return && p.rsb_underflow);
            if via_indirect {
                let k2 = p.mode2.expect("indirect lookups carry a mode-two key");
                insert(&mut self.btb, k2);
                let k1 = p.mode1;
                if self.btb.lookup(k1.set, k1.tag, k1.offset).is_none() {
                    insert(&mut self.btb, k1);
                }
            } else if bt != BranchType::Return {
                insert(&mut self.btb, p.mode1);
            }
        }

        if bt.is_call() {
            let v = self.encode(rec.fall_through(), token);
            self.threads[t].rsb.push(v);
        } else if bt == BranchType::Return && self.threads[t].rsb.pop().is_none() {
            out.push(ev(EventKind::RsbUnderflow));
        }

        let c = &self.cfg;
        let th = &mut self.threads[t];
        if bt.is_conditional() {
            th.ghr = ((th.ghr << 1) | rec.taken as u64) & mask64(c.ghr_bits);
            th.long_hist = (th.long_hist << 1) | rec.taken as u64;
        }
        let folds = match bt {
            BranchType::Conditional => rec.taken,
            BranchType::DirectJump | BranchType::DirectCall => true,
            _ => false,
        };
        if folds {
            th.bhb = ((th.bhb << c.bhb_shift) ^ xor_fold(rec.pc, 32, 16)) & mask64(c.bhb_bits);
        }
    }

    pub fn update(&mut self, rec: &BranchRecord, p: &Prediction, token: SecretToken) -> Vec<BpuEvent> {
        let mut out = Vec::new();
        self.update_into(rec, p, token, &mut out);
        out
    }

    /// Writes `target`, encrypted under `token`, straight into the BTB at
    /// `key`. Only the attack harness uses this, to grant a collision
    /// without searching for one.
    pub fn plant(&mut self, key: BtbKey, target: u64, token: SecretToken) -> Insert {
        let stored = self.encode(target, token);
        self.btb.insert(key.set, key.tag, key.offset, stored)
    }

    /// Predicts then updates one record.
    pub fn step(&mut self, rec: &BranchRecord, token: SecretToken) -> (Prediction, Vec<BpuEvent>) {
        let p = self.predict(rec, token);
        let ev = self.update(rec, &p, token);
        (p, ev)
    }
}

#[cfg(test)]
mod tests;
