use super::*;
use crate::trace::{synth_trace, Privilege, Scenario, SynthParams};

fn rec(bt: BranchType, pc: u64, taken: bool, target: u64) -> BranchRecord {
    BranchRecord { thread_id: 0, context_id: 1, privilege: Privilege::User, branch_type: bt, pc, taken, target }
}

fn tok(psi: u32, phi: u32) -> SecretToken {
    SecretToken { psi, phi }
}

fn accuracy_tail(bpu: &mut Bpu, recs: &[BranchRecord], skip: usize) -> f64 {
    let mut ok = 0;
    for (i, r) in recs.iter().enumerate() {
        let (p, _) = bpu.step(r, SecretToken::ZERO);
        if i >= skip && p.direction == Some(r.taken) {
            ok += 1;
        }
    }
    ok as f64 / (recs.len() - skip) as f64
}

fn loop_trace(n: usize, reps: usize) -> Vec<BranchRecord> {
    (0..reps).flat_map(|_| (0..=n).map(move |i| rec(BranchType::Conditional, 0x40_1000, i < n, 0x40_0f00))).collect()
}

#[test]
fn baseline_bit_slices() {
    let b = Bpu::new(PredictorConfig::baseline());
    let z = SecretToken::ZERO;
    assert_eq!(b.btb_key(0, 0, z), BtbKey { set: 0, tag: 0, offset: 0 });
    let pc = 0x1234_5678_9abc;
    assert_eq!(b.btb_key(pc, 0, z), b.btb_key(pc ^ 1 << 47, 0, z));
    assert_eq!(b.btb_key(0x3fe0, 0, z).set, 511);
    let k = b.btb_key(pc, 0, z);
    assert_eq!(k.offset as u64, pc & 0x1f);
    assert_eq!(k.tag, (pc >> 14 & 0xff) ^ (pc >> 22 & 0xff));
}

#[test]
fn remapped_keys_depend_on_psi_and_high_bits() {
    let b = Bpu::new(PredictorConfig::for_model(ModelKind::Stbpu));
    let pc = 0x7f12_3456_7890;
    assert_eq!(b.btb_key(pc, 0, tok(5, 0)), b.btb_key(pc, 0, tok(5, 9)));
    let mut differ = 0;
    for psi in 0..200u32 {
        let a = b.btb_key(pc, 0, tok(psi, 0));
        let c = b.btb_key(pc, 0, tok(psi.wrapping_mul(2654435761) ^ 0xdead_beef, 0));
        differ += (a != c) as u32;
    }
    assert_eq!(differ, 200);
    let mut flips = 0;
    for psi in 0..1000u32 {
        let a = b.btb_key(pc, 0, tok(psi, 0));
        let c = b.btb_key(pc ^ 1 << 47, 0, tok(psi, 0));
        flips += ((a.set ^ c.set).count_ones() + (a.tag ^ c.tag).count_ones() + (a.offset ^ c.offset).count_ones()) as u64;
    }
    let rate = flips as f64 / (1000.0 * 22.0);
    assert!((0.4..0.6).contains(&rate), "{rate}");
}

#[test]
fn cold_conditional_is_weakly_not_taken() {
    let b = Bpu::new(PredictorConfig::baseline());
    let p = b.predict(&rec(BranchType::Conditional, 0x1000, true, 0x2000), SecretToken::ZERO);
    assert_eq!(p.direction, Some(false));
    assert_eq!(p.target, None);
}

#[test]
fn loop_accuracy_with_and_without_history() {
    let t = loop_trace(7, 2000);
    let mut g = Bpu::new(PredictorConfig::baseline());
    assert!(accuracy_tail(&mut g, &t, 800) > 0.999);
    let mut one = Bpu::new(PredictorConfig { ghr_bits: 0, ..PredictorConfig::baseline() });
    let a = accuracy_tail(&mut one, &t, 800);
    assert!((a - 7.0 / 8.0).abs() < 1e-3, "{a}");
}

#[test]
fn call_return_pairs_predict_exactly() {
    let mut b = Bpu::new(PredictorConfig::baseline());
    let call = rec(BranchType::DirectCall, 0x40_0100, true, 0x40_8000);
    let ret = rec(BranchType::Return, 0x40_8040, true, call.fall_through());
    b.step(&call, SecretToken::ZERO);
    let (p, ev) = b.step(&ret, SecretToken::ZERO);
    assert_eq!(p.target, Some(0x40_0104));
    assert_eq!(p.target_source, Some(TargetSource::Rsb));
    assert!(ev.iter().all(|e| e.kind != EventKind::TargetMisp));
}

#[test]
fn deep_recursion_underflows_once() {
    let mut b = Bpu::new(PredictorConfig::baseline());
    let mut underflows = 0;
    let mut stack = Vec::new();
    for i in 0..17u64 {
        let c = rec(BranchType::DirectCall, 0x1000 + i * 0x40, true, 0x1000 + (i + 1) * 0x40);
        stack.push(c.fall_through());
        b.step(&c, SecretToken::ZERO);
    }
    for i in 0..17u64 {
        let r = rec(BranchType::Return, 0x9000 + i * 8, true, stack.pop().unwrap());
        let (_, ev) = b.step(&r, SecretToken::ZERO);
        underflows += ev.iter().filter(|e| e.kind == EventKind::RsbUnderflow).count();
        assert!(b.rsb_depth(0) <= 16);
    }
    assert_eq!(underflows, 1);
}

#[test]
fn indirect_target_follows_bhb_context() {
    let mut b = Bpu::new(PredictorConfig::baseline());
    let z = SecretToken::ZERO;
    let ind = 0x40_2000;
    let paths = [(0x40_1000u64, 0x40_5000u64), (0x40_1100, 0x40_6000)];
    for _ in 0..40 {
        for (jmp, target) in paths {
            b.step(&rec(BranchType::DirectJump, jmp, true, jmp + 0x80), z);
            b.step(&rec(BranchType::IndirectJump, ind, true, target), z);
        }
    }
    for (jmp, target) in paths {
        b.step(&rec(BranchType::DirectJump, jmp, true, jmp + 0x80), z);
        let p = b.predict(&rec(BranchType::IndirectJump, ind, true, target), z);
        assert_eq!(p.target, Some(target));
        assert_eq!(p.target_source, Some(TargetSource::BtbMode2));
        b.update(&rec(BranchType::IndirectJump, ind, true, target), &p, z);
    }
}

#[test]
fn encryption_round_trip_and_cross_token_garbling() {
    let mut b = Bpu::new(PredictorConfig::for_model(ModelKind::Stbpu));
    let v = tok(0x1111, 0xa5a5_5a5a);
    let j = rec(BranchType::DirectJump, 0x7f00_0000_1000, true, 0x7f00_1234_5678);
    b.step(&j, v);
    let p = b.predict(&j, v);
    assert_eq!(p.target, Some(j.target));
    let k = b.btb_key(j.pc, 0, v);
    let stored = b.btb().read(k.set, b.btb().lookup(k.set, k.tag, k.offset).unwrap()).stored_target;
    assert_ne!(stored, j.target & 0xffff_ffff);
    // same ψ, different φ: the entry is found but decrypts to garbage
    let a = tok(0x1111, 0x0f0f_0f0f);
    assert_ne!(b.predict(&j, a).target, Some(j.target));
    let twin = tok(0x1111, v.phi);
    assert_eq!(b.predict(&j, twin).target, Some(j.target));
}

#[test]
fn partition_isolates_threads() {
    let mut b = Bpu::new(PredictorConfig::for_model(ModelKind::PartitionStibp));
    let j = rec(BranchType::DirectJump, 0x40_3000, true, 0x40_7000);
    b.step(&j, SecretToken::ZERO);
    let other = BranchRecord { thread_id: 1, ..j };
    assert_eq!(b.predict(&other, SecretToken::ZERO).target, None);
    assert_eq!(b.predict(&j, SecretToken::ZERO).target, Some(j.target));
}

#[test]
fn flush_hooks() {
    let j = rec(BranchType::DirectJump, 0x40_3000, true, 0x40_7000);
    for (m, hook, flushed) in [
        (ModelKind::FlushIbpb, Hook::ContextSwitch, true),
        (ModelKind::FlushIbpb, Hook::KernelEntry, false),
        (ModelKind::FlushIbrs, Hook::KernelEntry, true),
        (ModelKind::FlushIbrs, Hook::ContextSwitch, false),
        (ModelKind::Baseline, Hook::ContextSwitch, false),
    ] {
        let mut b = Bpu::new(PredictorConfig::for_model(m));
        b.step(&j, SecretToken::ZERO);
        b.on_hook(hook);
        assert_eq!(b.btb().occupancy() == 0, flushed, "{m} {hook:?}");
    }
}

#[test]
fn tage_learns_alternation() {
    let t: Vec<_> = (0..20_000).map(|i| rec(BranchType::Conditional, 0x40_1000, i % 2 == 0, 0x40_0f00)).collect();
    let mut b = Bpu::new(PredictorConfig::for_model(ModelKind::TageLite));
    assert!(accuracy_tail(&mut b, &t, 2000) >= 0.99);
}

#[test]
fn perceptron_learns_constant() {
    let t: Vec<_> = (0..5000).map(|_| rec(BranchType::Conditional, 0x40_1000, true, 0x40_0f00)).collect();
    let mut b = Bpu::new(PredictorConfig::for_model(ModelKind::Perceptron));
    assert_eq!(accuracy_tail(&mut b, &t, 100), 1.0);
    assert!(b.counters_in_range());
}

#[test]
fn keyed_tage_matches_plain_tage() {
    let t = synth_trace(Scenario::ContextSwitchHeavy, &SynthParams { total: 40_000, contexts: 1, ..Default::default() }, 3).unwrap();
    let acc = |m: ModelKind, token| {
        let mut b = Bpu::new(PredictorConfig::for_model(m));
        let (mut ok, mut n) = (0, 0);
        for r in &t.records {
            let (p, _) = b.step(r, token);
            if let Some(d) = p.direction {
                n += 1;
                ok += (d == r.taken) as u32;
            }
        }
        ok as f64 / n as f64
    };
    let plain = acc(ModelKind::TageLite, SecretToken::ZERO);
    let keyed = acc(ModelKind::StTageLite, tok(0x1234_5678, 0x9abc_def0));
    assert!((plain - keyed).abs() <= 0.01, "{plain} vs {keyed}");
}

#[test]
fn identity_configuration_matches_baseline() {
    let cfg = PredictorConfig::baseline();
    for sc in [Scenario::ContextSwitchHeavy, Scenario::SmtPair, Scenario::GadgetVictim] {
        let t = synth_trace(sc, &SynthParams { total: 20_000, ..Default::default() }, 11).unwrap();
        let mut a = Bpu::new(cfg);
        let mut b = Bpu::identity(PredictorConfig { model: ModelKind::Stbpu, ..cfg });
        for r in &t.records {
            assert_eq!(a.step(r, SecretToken::ZERO), b.step(r, SecretToken::ZERO));
        }
    }
}

#[test]
fn eviction_events_match_btb_accounting() {
    let t = synth_trace(Scenario::ContextSwitchHeavy, &SynthParams { total: 30_000, contexts: 4, ..Default::default() }, 5).unwrap();
    let mut b = Bpu::new(PredictorConfig::scaled(ModelKind::Baseline));
    let mut ev = 0u64;
    for r in &t.records {
        ev += b.step(r, SecretToken::ZERO).1.iter().filter(|e| e.kind == EventKind::BtbEviction).count() as u64;
    }
    let s = b.btb().stats;
    assert!(ev > 0);
    assert_eq!(ev, s.allocations - b.btb().occupancy() as u64);
    assert!(b.counters_in_range());
}
