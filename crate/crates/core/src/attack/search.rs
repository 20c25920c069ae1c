//! Collision searches: reuse sets, eviction sets by group elimination,
//! target injection sweeps and the collision-rate Monte Carlo.

use super::rig::{attacker, in_block, victim, Rig};
use super::{AttackOutcome, Target};
use crate::analysis::collision_prob;
use crate::error::{Error, Result};
use crate::predictors::{BtbKey, TargetSource};
use crate::sim::geometry;
use crate::trace::{BranchType, ADDR_MASK, GADGET_INDIRECT_PC};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Victim indirect branch used by target injection.
pub(crate) const INJECT_PC: u64 = GADGET_INDIRECT_PC;

fn random_pc(rng: &mut ChaCha8Rng) -> u64 {
    rng.gen::<u64>() & ADDR_MASK
}

/// k-th guess of an Ω-bit sweep starting at `first`: first ⊕ (k·mul mod 2^Ω).
/// With `mul` odd this visits every value exactly once.
pub(crate) fn sweep_value(k: u64, first: u64, mul: u64, mask: u64) -> u64 {
    (first ^ k.wrapping_mul(mul)) & mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseGoal {
    /// Stop once the set has this many members.
    pub size: usize,
    /// Also probe every candidate against this victim branch and stop on
    /// the first collision with it.
    pub victim: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseSet {
    pub members: Vec<u64>,
    /// Candidates rejected because they collided with a member.
    pub collisions: u64,
    /// Mispredictions seen on the re-executions that detect a clash.
    pub clash_misps: u64,
    /// Candidate number (1-based) that collided with the victim.
    pub victim_hit: Option<u64>,
    pub outcome: AttackOutcome,
}

/// Grows a set of pairwise non-colliding attacker branches. Each fresh
/// candidate is cross-executed against every member and admitted only if
/// neither side mispredicts. `budget` caps the number of candidates.
pub fn build_reuse_set(t: &Target, goal: ReuseGoal, budget: u64, seed: u64) -> Result<ReuseSet> {
    let mut rig = Rig::new(t, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e75);
    let a = attacker();
    let mut set = ReuseSet { members: Vec::new(), collisions: 0, clash_misps: 0, victim_hit: None, outcome: AttackOutcome::default() };
    let mut tried = 0;
    while tried < budget && set.members.len() < goal.size {
        // planting at the victim's own address is the free first guess
        let b = match (tried, goal.victim) {
            (0, Some(v)) => v,
            _ => random_pc(&mut rng),
        };
        tried += 1;
        if let Some(v) = goal.victim {
            rig.jump(a, b);
            rig.exec(victim(), BranchType::DirectJump, v, true, v ^ 0x80);
            if rig.jump(a, b).misp {
                set.victim_hit = Some(tried);
                break;
            }
        }
        // colliding branches agree in their low address bits, so the
        // candidate jumps elsewhere in its block to make a clash visible
        let cand = |rig: &mut Rig| rig.exec(a, BranchType::DirectJump, b, true, b ^ 0xc0).1;
        let mut clash = false;
        for &s in &set.members {
            rig.jump(a, s);
            cand(&mut rig);
            let back = rig.jump(a, s);
            let again = cand(&mut rig);
            if back.misp || again.misp {
                set.clash_misps += back.misp as u64 + again.misp as u64;
                clash = true;
                break;
            }
        }
        if clash {
            set.collisions += 1;
        } else {
            set.members.push(b);
        }
    }
    set.outcome = rig.outcome();
    set.outcome.wall_trials = tried;
    set.outcome.success = set.members.len() >= goal.size || set.victim_hit.is_some();
    set.outcome.score = set.members.len() as f64;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvictionSet {
    /// The line this set evicts.
    pub probe: u64,
    pub members: Vec<u64>,
    /// Ground truth agrees: probe and members share one set with distinct
    /// (tag, offset) pairs.
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemResult {
    pub sets: Vec<EvictionSet>,
    /// Number of sets the attacker aimed for: ceil(P·I).
    pub targets: usize,
    pub outcome: AttackOutcome,
}

impl GemResult {
    pub fn verified(&self) -> usize {
        self.sets.iter().filter(|s| s.verified).count()
    }
}

struct Gem<'a> {
    rig: &'a mut Rig,
    accesses: u64,
}

impl Gem<'_> {
    fn touch(&mut self, pc: u64) -> bool {
        self.accesses += 1;
        self.rig.jump(attacker(), pc).misp
    }

    /// Does running `lines` after `x` push `x` out?
    fn evicts(&mut self, x: u64, lines: &[u64]) -> bool {
        self.touch(x);
        for &l in lines {
            self.touch(l);
        }
        self.touch(x)
    }
}

/// Group elimination. The attacker keeps a resident pool in which no set
/// holds more than W lines, growing it one fresh line at a time. A fresh
/// line whose insertion evicts something landed in a full set and becomes
/// the probe x; the pool is then split into W+1 groups and any group whose
/// removal keeps x evicted is dropped, down to W lines. Only x's own set
/// thrashes during the tests. Covers ceil(P·I) distinct sets or stops after
/// `budget` attacker branch executions.
pub fn gem_find_eviction_sets(t: &Target, p: f64, budget: u64, seed: u64) -> Result<GemResult> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Probability(p));
    }
    let cfg = t.config;
    let (sets, w) = (cfg.btb_sets as usize, cfg.btb_ways as usize);
    let targets = (p * sets as f64).ceil() as usize;
    let mut rig = Rig::new(t, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6d);
    let mut pool: Vec<u64> = Vec::new();
    let mut found: Vec<EvictionSet> = Vec::new();
    let mut gem = Gem { rig: &mut rig, accesses: 0 };

    'targets: while found.len() < targets && gem.accesses < budget {
        let x = random_pc(&mut rng);
        gem.accesses += 1;
        if !gem.rig.jump(attacker(), x).evicted {
            // a pool this large means the mapping moved under us: start over
            if pool.len() >= 2 * sets * w {
                pool.clear();
            }
            pool.push(x);
            continue;
        }
        for f in &found {
            if gem.evicts(x, &f.members) {
                continue 'targets;
            }
        }
        if !gem.evicts(x, &pool) {
            continue;
        }
        let mut s = pool.clone();
        while s.len() > w {
            if gem.accesses >= budget {
                break 'targets;
            }
            // balanced split so none of the W+1 groups is empty
            let n = s.len();
            let mut reduced = None;
            for g in 0..=w {
                let (lo, hi) = (g * n / (w + 1), (g + 1) * n / (w + 1));
                if lo == hi || n - (hi - lo) < w {
                    continue;
                }
                let rest: Vec<u64> = s[..lo].iter().chain(&s[hi..]).copied().collect();
                if gem.evicts(x, &rest) {
                    reduced = Some(rest);
                    break;
                }
            }
            match reduced {
                Some(r) => s = r,
                None => break,
            }
        }
        if s.len() == w {
            pool.retain(|l| !s.contains(l));
            found.push(EvictionSet { probe: x, members: s, verified: false });
        }
    }
    let accesses = gem.accesses;

    // ground truth under the attacker's token at the end of the run
    for f in &mut found {
        let kx = rig.key_of(attacker(), f.probe);
        let keys: Vec<BtbKey> = f.members.iter().map(|&m| rig.key_of(attacker(), m)).collect();
        let distinct: HashSet<(u64, u32)> = keys.iter().chain([&kx]).map(|k| (k.tag, k.offset)).collect();
        f.verified = keys.iter().all(|k| k.set == kx.set) && distinct.len() == w + 1;
    }
    let mut outcome = rig.outcome();
    outcome.wall_trials = accesses;
    outcome.score = found.iter().filter(|f| f.verified).count() as f64;
    outcome.success = outcome.score as usize >= targets;
    Ok(GemResult { sets: found, targets, outcome })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectOpts {
    /// Misconfiguration: attacker and victim share one token.
    pub shared_token: bool,
    /// Maximum injection attempts.
    pub budget: u64,
}

impl Default for InjectOpts {
    fn default() -> Self {
        Self { shared_token: false, budget: 1 << 12 }
    }
}

/// Branch target injection with the index/tag collision granted: each
/// attempt writes τ_A (encrypted with the attacker's φ) into the entry the
/// victim's indirect branch reads next. The victim reconstructs
/// τ_A ⊕ φ_a ⊕ φ_v; success when that equals `gadget` (low Ω bits).
/// `misp_triggered` counts the victim's target mispredictions.
pub fn target_injection(t: &Target, gadget: u64, opts: InjectOpts, seed: u64) -> Result<AttackOutcome> {
    let mut rig = if opts.shared_token { Rig::shared(t, seed)? } else { Rig::new(t, seed)? };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e7);
    let m = rig.target_mask();
    let pc = INJECT_PC;
    let real = pc ^ 0x80;
    let mut goal = in_block(pc, gadget, m);
    if goal == in_block(pc, real, m) {
        goal = in_block(pc, gadget ^ 1, m);
    }
    // warm the victim's own entry first
    rig.exec(victim(), BranchType::IndirectJump, pc, true, real);
    let base = rig.counts(victim()).target_misp;
    let mul = rng.gen::<u64>() | 1;
    let mut done = None;
    for k in 0..opts.budget {
        let tau = sweep_value(k, goal, mul, m);
        let next = rig.peek(victim(), BranchType::IndirectJump, pc, real);
        let key = next.mode2_key().expect("indirect lookups carry a mode-two key");
        rig.plant(key, in_block(pc, tau, m), attacker());
        let (p, _) = rig.exec(victim(), BranchType::IndirectJump, pc, true, real);
        if p.target == Some(goal) && p.target_source == Some(TargetSource::BtbMode2) {
            done = Some(k + 1);
            break;
        }
    }
    let mut out = rig.outcome();
    out.misp_triggered = rig.counts(victim()).target_misp - base;
    out.success = done.is_some();
    out.wall_trials = done.unwrap_or(opts.budget);
    out.score = out.wall_trials as f64;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEstimate {
    pub trials: u64,
    pub hits: u64,
    pub rate: f64,
    /// Analytic P(A ⇒ V) for the rig's BTB.
    pub expected: f64,
    /// Binomial standard error at the analytic rate.
    pub std_err: f64,
}

impl CollisionEstimate {
    /// Distance from the analytic rate in standard errors.
    pub fn z(&self) -> f64 {
        (self.rate - self.expected) / self.std_err
    }
}

/// Victim installs one jump; each trial looks up a uniformly random
/// attacker address and counts hits on the victim's entry.
pub fn collision_frequency(t: &Target, trials: u64, seed: u64) -> Result<CollisionEstimate> {
    if trials == 0 {
        return Err(Error::InvalidScenario("need at least one trial".into()));
    }
    let mut rig = Rig::new(t, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc011);
    let v = INJECT_PC;
    rig.exec(victim(), BranchType::DirectJump, v, true, v ^ 0x80);
    let mut hits = 0;
    for _ in 0..trials {
        let pc = random_pc(&mut rng);
        if pc != v && rig.peek(attacker(), BranchType::DirectJump, pc, pc ^ 0x40).target_source == Some(TargetSource::BtbMode1) {
            hits += 1;
        }
    }
    let expected = collision_prob(&geometry(&t.config).0);
    let rate = hits as f64 / trials as f64;
    let std_err = (expected * (1.0 - expected) / trials as f64).sqrt();
    Ok(CollisionEstimate { trials, hits, rate, expected, std_err })
}
