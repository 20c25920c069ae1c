//! Deterministic synthetic workloads.

use super::{BranchRecord, BranchType, Privilege, TraceStream, INSN_LEN};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Loop,
    Alternating,
    ContextSwitchHeavy,
    GadgetVictim,
    SmtPair,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Loop,
        Scenario::Alternating,
        Scenario::ContextSwitchHeavy,
        Scenario::GadgetVictim,
        Scenario::SmtPair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Loop => "loop",
            Scenario::Alternating => "alternating",
            Scenario::ContextSwitchHeavy => "context_switch_heavy",
            Scenario::GadgetVictim => "gadget_victim",
            Scenario::SmtPair => "smt_pair",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == norm)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Parameters shared by all scenarios; each scenario reads the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// loop: taken iterations before the exit.
    pub iterations: usize,
    /// loop: how many times the loop runs.
    pub reps: usize,
    /// context_switch_heavy: number of contexts.
    pub contexts: usize,
    /// context_switch_heavy: records between switches.
    pub switch_every: usize,
    /// Record count for every scenario except loop.
    pub total: usize,
    /// smt_pair: records of thread 0 then thread 1 per round.
    pub schedule: (usize, usize),
    /// Static branch sites per generated program.
    pub sites: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            iterations: 7,
            reps: 1000,
            contexts: 2,
            switch_every: 100,
            total: 10_000,
            schedule: (1, 1),
            sites: 32,
        }
    }
}

pub fn synth_trace(scenario: Scenario, p: &SynthParams, seed: u64) -> Result<TraceStream> {
    let bad = |m: &str| Err(Error::InvalidParams(format!("{scenario}: {m}")));
    let records = match scenario {
        Scenario::Loop => {
            if p.iterations == 0 || p.reps == 0 {
                return bad("iterations and reps must be > 0");
            }
            loop_trace(p.iterations, p.reps)
        }
        Scenario::Alternating => {
            if p.total == 0 {
                return bad("total must be > 0");
            }
            alternating(p.total)
        }
        Scenario::ContextSwitchHeavy => {
            if p.contexts == 0 || p.switch_every == 0 || p.total == 0 || p.sites == 0 {
                return bad("contexts, switch_every, sites and total must be > 0");
            }
            context_switch_heavy(p, seed)
        }
        Scenario::GadgetVictim => {
            if p.total == 0 {
                return bad("total must be > 0");
            }
            gadget_victim(p.total, seed)
        }
        Scenario::SmtPair => {
            if p.total == 0 || p.schedule.0 + p.schedule.1 == 0 || p.sites == 0 {
                return bad("total, sites and schedule must be > 0");
            }
            smt_pair(p, seed)
        }
    };
    let source = format!("synth {scenario} seed={seed}");
    Ok(TraceStream::new(source, records))
}

/// The fixed synthetic suite used for model comparisons.
pub fn bundled_suite(seed: u64) -> Vec<TraceStream> {
    let d = SynthParams::default();
    let specs: [(Scenario, SynthParams); 7] = [
        (Scenario::Loop, SynthParams { iterations: 7, reps: 2500, ..d }),
        (Scenario::Alternating, SynthParams { total: 20_000, ..d }),
        (Scenario::ContextSwitchHeavy, SynthParams { contexts: 2, switch_every: 100, total: 40_000, ..d }),
        (Scenario::ContextSwitchHeavy, SynthParams { contexts: 4, switch_every: 1000, total: 40_000, sites: 96, ..d }),
        (Scenario::ContextSwitchHeavy, SynthParams { contexts: 1, switch_every: 1, total: 40_000, sites: 160, ..d }),
        (Scenario::SmtPair, SynthParams { total: 40_000, schedule: (3, 2), sites: 48, ..d }),
        (Scenario::GadgetVictim, SynthParams { total: 20_000, ..d }),
    ];
    specs
        .iter()
        .enumerate()
        .map(|(i, (sc, p))| synth_trace(*sc, p, seed.wrapping_add(i as u64)).expect("suite params are valid"))
        .collect()
}

fn rec(thread: u8, ctx: u32, ty: BranchType, pc: u64, taken: bool, target: u64) -> BranchRecord {
    BranchRecord {
        thread_id: thread,
        context_id: ctx,
        privilege: Privilege::User,
        branch_type: ty,
        pc,
        taken,
        target,
    }
}

fn loop_trace(n: usize, reps: usize) -> Vec<BranchRecord> {
    let pc = 0x40_1000;
    let back = 0x40_0f00;
    let mut out = Vec::with_capacity((n + 1) * reps);
    for _ in 0..reps {
        for _ in 0..n {
            out.push(rec(0, 0, BranchType::Conditional, pc, true, back));
        }
        out.push(rec(0, 0, BranchType::Conditional, pc, false, pc + INSN_LEN));
    }
    out
}

fn alternating(total: usize) -> Vec<BranchRecord> {
    let pc = 0x40_2000;
    (0..total)
        .map(|i| {
            let t = i % 2 == 0;
            rec(0, 0, BranchType::Conditional, pc, t, if t { 0x40_2100 } else { pc + INSN_LEN })
        })
        .collect()
}

fn context_switch_heavy(p: &SynthParams, seed: u64) -> Vec<BranchRecord> {
    let mut progs: Vec<Runner> = (0..p.contexts)
        .map(|k| Runner::new(Program::generate(p.sites, seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)), 0, k as u32 + 1))
        .collect();
    let mut out = Vec::with_capacity(p.total);
    let mut k = 0;
    while out.len() < p.total {
        let burst = p.switch_every.min(p.total - out.len());
        progs[k].emit(burst, &mut out);
        k = (k + 1) % p.contexts;
    }
    out
}

fn smt_pair(p: &SynthParams, seed: u64) -> Vec<BranchRecord> {
    let mut t0 = Runner::new(Program::generate(p.sites, seed.wrapping_mul(3).wrapping_add(1)), 0, 1);
    let mut t1 = Runner::new(Program::generate(p.sites, seed.wrapping_mul(3).wrapping_add(2)), 1, 2);
    let mut out = Vec::with_capacity(p.total);
    while out.len() < p.total {
        let a = p.schedule.0.min(p.total - out.len());
        t0.emit(a, &mut out);
        let b = p.schedule.1.min(p.total - out.len());
        t1.emit(b, &mut out);
    }
    out
}

/// Victim address of the secret-dependent branch in `gadget_victim`.
pub const GADGET_SECRET_PC: u64 = 0x7f00_1234;
/// Victim address of the indirect call in `gadget_victim`.
pub const GADGET_INDIRECT_PC: u64 = 0x7f00_2468;

/// Victim context 1 runs `if (secret) ...; (*fp)()` with a fresh secret bit
/// per round; attacker context 2 runs branches at the same addresses.
fn gadget_victim(total: usize, seed: u64) -> Vec<BranchRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let handlers = [0x7f10_0000u64, 0x7f10_0400, 0x7f10_0800];
    let mut out = Vec::with_capacity(total + 4);
    let mut round = 0usize;
    while out.len() < total {
        let secret: bool = rng.gen();
        let s_target = if secret { GADGET_SECRET_PC + 0x80 } else { GADGET_SECRET_PC + INSN_LEN };
        out.push(rec(0, 1, BranchType::Conditional, GADGET_SECRET_PC, secret, s_target));
        out.push(rec(0, 1, BranchType::IndirectCall, GADGET_INDIRECT_PC, true, handlers[round % handlers.len()]));
        out.push(rec(0, 1, BranchType::Return, handlers[round % handlers.len()] + 0x40, true, GADGET_INDIRECT_PC + INSN_LEN));
        // attacker probes the same addresses with its own behaviour
        out.push(rec(0, 2, BranchType::Conditional, GADGET_SECRET_PC, true, GADGET_SECRET_PC + 0x80));
        out.push(rec(0, 2, BranchType::IndirectJump, GADGET_INDIRECT_PC, true, 0x7f20_0000));
        round += 1;
    }
    out.truncate(total);
    out
}

#[derive(Debug, Clone)]
enum Pattern {
    /// Taken with the given probability, independently each time.
    Biased(f64),
    /// Repeats a fixed bit string.
    Periodic(Vec<bool>),
    /// Taken `n` times, then not taken once.
    Loop(usize),
}

#[derive(Debug, Clone)]
enum Site {
    Cond { pc: u64, target: u64, pattern: Pattern },
    Jump { pc: u64, target: u64 },
    Call { pc: u64, callee: usize, indirect: bool },
    IndJump { pc: u64, targets: Vec<u64> },
}

#[derive(Debug, Clone)]
struct Function {
    entry: u64,
    body: Vec<Site>,
    ret_pc: u64,
}

/// A small random program: a main loop of branch sites, some calling leaf
/// functions, all at addresses in a typical text segment.
#[derive(Debug, Clone)]
struct Program {
    main: Vec<Site>,
    funcs: Vec<Function>,
    rng_seed: u64,
}

impl Program {
    fn generate(sites: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pc = 0x40_0000 + rng.gen_range(0..0x400u64) * 4;
        let nfuncs = (sites / 8).max(1);
        let mut fpc = 0x48_0000 + rng.gen_range(0..0x400u64) * 4;
        let mut funcs = Vec::with_capacity(nfuncs);
        for _ in 0..nfuncs {
            let entry = fpc;
            let mut body = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                fpc += rng.gen_range(2..16u64) * 4;
                body.push(Site::Cond { pc: fpc, target: fpc + rng.gen_range(2..32u64) * 4, pattern: pattern(&mut rng) });
            }
            fpc += rng.gen_range(2..16u64) * 4;
            funcs.push(Function { entry, body, ret_pc: fpc });
            fpc += rng.gen_range(16..64u64) * 4;
        }
        let mut main = Vec::with_capacity(sites);
        for _ in 0..sites {
            pc += rng.gen_range(2..24u64) * 4;
            let roll: f64 = rng.gen();
            let site = if roll < 0.62 {
                let target = if rng.gen_bool(0.5) { pc + rng.gen_range(2..64u64) * 4 } else { pc - rng.gen_range(2..64u64) * 4 };
                Site::Cond { pc, target, pattern: pattern(&mut rng) }
            } else if roll < 0.72 {
                Site::Jump { pc, target: pc + rng.gen_range(2..64u64) * 4 }
            } else if roll < 0.87 {
                Site::Call { pc, callee: rng.gen_range(0..nfuncs), indirect: false }
            } else if roll < 0.92 {
                Site::Call { pc, callee: rng.gen_range(0..nfuncs), indirect: true }
            } else {
                let n = rng.gen_range(2..=4);
                let targets = (0..n).map(|_| pc + rng.gen_range(8..256u64) * 4).collect();
                Site::IndJump { pc, targets }
            };
            main.push(site);
        }
        Program { main, funcs, rng_seed: rng.gen() }
    }
}

fn pattern(rng: &mut ChaCha8Rng) -> Pattern {
    let roll: f64 = rng.gen();
    if roll < 0.25 {
        Pattern::Biased(if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
    } else if roll < 0.55 {
        let p = [0.97, 0.9, 0.1, 0.03].choose(rng).copied().unwrap_or(0.9);
        Pattern::Biased(p)
    } else if roll < 0.85 {
        let len = rng.gen_range(2..=8);
        Pattern::Periodic((0..len).map(|_| rng.gen()).collect())
    } else {
        Pattern::Loop(rng.gen_range(3..=12))
    }
}

/// Walks a program forever, emitting records on demand and keeping its
/// position across bursts.
struct Runner {
    prog: Program,
    thread: u8,
    ctx: u32,
    rng: ChaCha8Rng,
    /// Per-visit counters for main sites and function sites.
    visits: Vec<usize>,
    fvisits: Vec<Vec<usize>>,
    /// Pending records of the current main-loop step (a call expands to several).
    queue: std::collections::VecDeque<BranchRecord>,
    pos: usize,
}

impl Runner {
    fn new(prog: Program, thread: u8, ctx: u32) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(prog.rng_seed);
        let visits = vec![0; prog.main.len()];
        let fvisits = prog.funcs.iter().map(|f| vec![0; f.body.len()]).collect();
        Runner { prog, thread, ctx, rng, visits, fvisits, queue: Default::default(), pos: 0 }
    }

    fn emit(&mut self, n: usize, out: &mut Vec<BranchRecord>) {
        for _ in 0..n {
            if self.queue.is_empty() {
                self.step();
            }
            out.push(self.queue.pop_front().expect("step queues at least one record"));
        }
    }

    fn cond(&mut self, pc: u64, target: u64, pattern: &Pattern, visit: usize) -> BranchRecord {
        let taken = match pattern {
            Pattern::Biased(p) => self.rng.gen_bool(*p),
            Pattern::Periodic(bits) => bits[visit % bits.len()],
            Pattern::Loop(n) => visit % (n + 1) != *n,
        };
        rec(self.thread, self.ctx, BranchType::Conditional, pc, taken, if taken { target } else { pc + INSN_LEN })
    }

    fn step(&mut self) {
        let i = self.pos;
        self.pos = (self.pos + 1) % self.prog.main.len();
        let visit = self.visits[i];
        self.visits[i] += 1;
        let site = self.prog.main[i].clone();
        let (t, c) = (self.thread, self.ctx);
        match site {
            Site::Cond { pc, target, pattern } => {
                let r = self.cond(pc, target, &pattern, visit);
                self.queue.push_back(r);
            }
            Site::Jump { pc, target } => self.queue.push_back(rec(t, c, BranchType::DirectJump, pc, true, target)),
            Site::IndJump { pc, targets } => {
                // target follows the visit count, mostly
                let k = if self.rng.gen_bool(0.9) { visit % targets.len() } else { self.rng.gen_range(0..targets.len()) };
                self.queue.push_back(rec(t, c, BranchType::IndirectJump, pc, true, targets[k]));
            }
            Site::Call { pc, callee, indirect } => {
                let callee = if indirect && visit % 3 == 2 { (callee + 1) % self.prog.funcs.len() } else { callee };
                let f = self.prog.funcs[callee].clone();
                let ty = if indirect { BranchType::IndirectCall } else { BranchType::DirectCall };
                self.queue.push_back(rec(t, c, ty, pc, true, f.entry));
                for (j, s) in f.body.iter().enumerate() {
                    if let Site::Cond { pc, target, pattern } = s {
                        let v = self.fvisits[callee][j];
                        self.fvisits[callee][j] += 1;
                        let r = self.cond(*pc, *target, pattern, v);
                        self.queue.push_back(r);
                    }
                }
                self.queue.push_back(rec(t, c, BranchType::Return, f.ret_pc, true, pc + INSN_LEN));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loop_pattern() {
        let t = synth_trace(Scenario::Loop, &SynthParams { iterations: 7, reps: 2, ..Default::default() }, 1).unwrap();
        assert_eq!(t.len(), 16);
        let bits: String = t.iter().map(|r| if r.taken { 'T' } else { 'N' }).collect();
        assert_eq!(bits, "TTTTTTTNTTTTTTTN");
        assert!(t.iter().all(|r| r.pc == t.records[0].pc));
    }

    #[test]
    fn context_switch_period() {
        let p = SynthParams { contexts: 2, switch_every: 100, total: 1000, ..Default::default() };
        let t = synth_trace(Scenario::ContextSwitchHeavy, &p, 5).unwrap();
        assert_eq!(t.len(), 1000);
        for (i, r) in t.iter().enumerate() {
            assert_eq!(r.context_id, (i / 100 % 2) as u32 + 1);
        }
    }

    #[test]
    fn smt_alternates() {
        let p = SynthParams { schedule: (1, 1), total: 10, ..Default::default() };
        let t = synth_trace(Scenario::SmtPair, &p, 0).unwrap();
        let ids: Vec<u8> = t.iter().map(|r| r.thread_id).collect();
        assert_eq!(ids, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let p = SynthParams { total: 2000, ..Default::default() };
        for sc in Scenario::ALL {
            let a = synth_trace(sc, &p, 42).unwrap();
            assert_eq!(a, synth_trace(sc, &p, 42).unwrap());
        }
        let a = synth_trace(Scenario::ContextSwitchHeavy, &p, 1).unwrap();
        let b = synth_trace(Scenario::ContextSwitchHeavy, &p, 2).unwrap();
        assert_ne!(a.records, b.records);
    }

    #[test]
    fn calls_and_returns_balance() {
        let p = SynthParams { contexts: 1, total: 5000, ..Default::default() };
        let t = synth_trace(Scenario::ContextSwitchHeavy, &p, 3).unwrap();
        let mut depth = 0i64;
        for r in t.iter() {
            if r.branch_type.is_call() {
                depth += 1;
            } else if r.branch_type == BranchType::Return {
                depth -= 1;
                assert!(depth >= 0);
            }
            assert!(r.pc <= super::super::ADDR_MASK && r.target <= super::super::ADDR_MASK);
        }
        assert!(depth <= 1);
    }

    #[test]
    fn scenario_names_and_errors() {
        assert_eq!("context-switch-heavy".parse::<Scenario>().unwrap(), Scenario::ContextSwitchHeavy);
        assert!(matches!("nope".parse::<Scenario>(), Err(Error::UnknownScenario(_))));
        let zero = SynthParams { iterations: 0, ..Default::default() };
        assert!(matches!(synth_trace(Scenario::Loop, &zero, 0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn gadget_interleaves_contexts() {
        let t = synth_trace(Scenario::GadgetVictim, &SynthParams { total: 50, ..Default::default() }, 9).unwrap();
        assert_eq!(t.len(), 50);
        assert!(t.iter().any(|r| r.context_id == 1) && t.iter().any(|r| r.context_id == 2));
        assert!(t.iter().any(|r| r.pc == GADGET_SECRET_PC && r.context_id == 1 && r.taken));
        assert!(t.iter().any(|r| r.pc == GADGET_SECRET_PC && r.context_id == 1 && !r.taken));
    }
}
