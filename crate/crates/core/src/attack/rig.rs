//! Two contexts time-sharing one core: the victim (context 1) and the
//! attacker (context 2).

use super::{AttackOutcome, Target};
use crate::bits::mask64;
use crate::error::Result;
use crate::predictors::{Bpu, BpuEvent, BtbKey, EventKind, Hook, Prediction};
use crate::sim::EventCounts;
use crate::st::{ContextKey, SecretToken, StManager};
use crate::trace::{BranchRecord, BranchType, Privilege, ADDR_MASK};

pub(crate) fn victim() -> ContextKey {
    ContextKey::user(1)
}

pub(crate) fn attacker() -> ContextKey {
    ContextKey::user(2)
}

/// All an attacker learns from executing one of its branches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Observation {
    pub misp: bool,
    pub evicted: bool,
}

pub(crate) struct Rig {
    bpu: Bpu,
    st: StManager,
    tokens: bool,
    current: Option<ContextKey>,
    counts: [EventCounts; 2],
    buf: Vec<BpuEvent>,
}

fn slot(ctx: ContextKey) -> usize {
    (ctx != victim()) as usize
}

impl Rig {
    pub fn new(t: &Target, seed: u64) -> Result<Self> {
        Self::build(t, seed, false)
    }

    /// Misconfigured rig where the attacker shares the victim's token.
    pub fn shared(t: &Target, seed: u64) -> Result<Self> {
        Self::build(t, seed, true)
    }

    fn build(t: &Target, seed: u64, share: bool) -> Result<Self> {
        t.config.validate()?;
        let mut st = StManager::new(t.thresholds, seed);
        st.assign_token(victim(), None)?;
        st.assign_token(attacker(), share.then(victim))?;
        Ok(Rig {
            bpu: Bpu::new(t.config),
            st,
            tokens: t.config.model.uses_tokens(),
            current: None,
            counts: Default::default(),
            buf: Vec::new(),
        })
    }

    pub fn token(&self, ctx: ContextKey) -> SecretToken {
        if self.tokens {
            self.st.token(ctx).expect("both contexts are registered")
        } else {
            SecretToken::ZERO
        }
    }

    pub fn target_mask(&self) -> u64 {
        mask64(self.bpu.config().btb_target_bits)
    }

    fn switch_to(&mut self, ctx: ContextKey) {
        if self.current != Some(ctx) {
            if self.current.is_some() {
                self.bpu.on_hook(Hook::ContextSwitch);
            }
            self.st.context_switch(self.current, ctx).expect("registered");
            self.current = Some(ctx);
        }
    }

    /// Runs one branch in `ctx`; events go to that context's counters.
    pub fn exec(&mut self, ctx: ContextKey, bt: BranchType, pc: u64, taken: bool, target: u64) -> (Prediction, Observation) {
        self.switch_to(ctx);
        let rec = record(ctx, bt, pc, taken, target);
        let tok = self.token(ctx);
        let p = self.bpu.predict(&rec, tok);
        self.buf.clear();
        self.bpu.update_into(&rec, &p, tok, &mut self.buf);
        let mut obs = Observation::default();
        let c = &mut self.counts[slot(ctx)];
        for e in &self.buf {
            c.add(e.kind);
            match e.kind {
                EventKind::DirectionMisp | EventKind::TargetMisp => obs.misp = true,
                EventKind::BtbEviction => obs.evicted = true,
                _ => {}
            }
            if self.tokens && self.st.on_event(ctx, e.kind).expect("registered").is_some() {
                c.add(EventKind::StRerandomized);
            }
        }
        (p, obs)
    }

    /// Prediction without training: for harness-side measurements only.
    pub fn peek(&self, ctx: ContextKey, bt: BranchType, pc: u64, target: u64) -> Prediction {
        self.bpu.predict(&record(ctx, bt, pc, true, target), self.token(ctx))
    }

    /// Ground-truth BTB coordinates of `pc` in `ctx`.
    pub fn key_of(&self, ctx: ContextKey, pc: u64) -> BtbKey {
        self.bpu.btb_key(pc, 0, self.token(ctx))
    }

    pub fn plant(&mut self, key: BtbKey, target: u64, ctx: ContextKey) {
        let tok = self.token(ctx);
        self.bpu.plant(key, target, tok);
    }

    // Attacker-facing primitives. Targets stay inside the branch's own
    // 2^Ω-byte block so a correct prediction is representable.

    pub fn jump(&mut self, ctx: ContextKey, pc: u64) -> Observation {
        self.exec(ctx, BranchType::DirectJump, pc, true, pc ^ 0x40).1
    }

    pub fn cond(&mut self, ctx: ContextKey, pc: u64, taken: bool) -> Observation {
        self.exec(ctx, BranchType::Conditional, pc, taken, pc ^ 0x80).1
    }

    pub fn call(&mut self, ctx: ContextKey, pc: u64) -> Observation {
        self.exec(ctx, BranchType::DirectCall, pc, true, pc ^ 0x80).1
    }

    /// Return at `pc` to `to`.
    pub fn ret(&mut self, ctx: ContextKey, pc: u64, to: u64) -> (Prediction, Observation) {
        self.exec(ctx, BranchType::Return, pc, true, to)
    }

    pub fn counts(&self, ctx: ContextKey) -> EventCounts {
        self.counts[slot(ctx)]
    }

    pub fn misps(&self, ctx: ContextKey) -> u64 {
        let c = self.counts(ctx);
        c.direction_misp + c.target_misp
    }

    /// Outcome skeleton filled from the event counters.
    pub fn outcome(&self) -> AttackOutcome {
        let a = self.counts(attacker());
        let v = self.counts(victim());
        AttackOutcome {
            misp_triggered: a.direction_misp + a.target_misp,
            evict_triggered: a.btb_eviction,
            rerandomizations_observed: a.st_rerandomized,
            victim_misp: v.direction_misp + v.target_misp,
            victim_rerandomizations: v.st_rerandomized,
            ..Default::default()
        }
    }
}

fn record(ctx: ContextKey, bt: BranchType, pc: u64, taken: bool, target: u64) -> BranchRecord {
    BranchRecord {
        thread_id: 0,
        context_id: ctx.context_id,
        privilege: Privilege::User,
        branch_type: bt,
        pc: pc & ADDR_MASK,
        taken,
        target: target & ADDR_MASK,
    }
}

/// Address inside `pc`'s 2^Ω block with low bits `low`.
pub(crate) fn in_block(pc: u64, low: u64, mask: u64) -> u64 {
    ((pc & !mask) | (low & mask)) & ADDR_MASK
}

