use proptest::prelude::*;
use stbpu_core::analysis::*;
use stbpu_core::predictors::{Btb, Bpu, EventKind, Insert, ModelKind, PredictorConfig};
use stbpu_core::remap::sbox::{PRESENT, SPONGENT};
use stbpu_core::remap::{Layer, LayeredFunction, Placement, Primitive};
use stbpu_core::remap_gen::{score_candidate, QualityReport, DEFAULT_WEIGHTS};
use stbpu_core::sim::*;
use stbpu_core::st::{ContextKey, SecretToken, StManager, ThresholdConfig};
use stbpu_core::trace::*;

fn branch_type() -> impl Strategy<Value = BranchType> {
    proptest::sample::select(BranchType::ALL.to_vec())
}

fn record() -> impl Strategy<Value = BranchRecord> {
    (0u8..2, 0u32..6, any::<bool>(), branch_type(), 0..=ADDR_MASK, any::<bool>(), 0..=ADDR_MASK).prop_map(
        |(thread_id, context_id, kernel, branch_type, pc, taken, target)| BranchRecord {
            thread_id,
            context_id,
            privilege: if kernel { Privilege::Kernel } else { Privilege::User },
            branch_type,
            pc,
            taken: taken || !branch_type.is_conditional(),
            target,
        },
    )
}

/// Records drawn from a small set of sites so predictors get hits.
fn program(len: usize) -> impl Strategy<Value = TraceStream> {
    let site = (0u64..48, branch_type(), 0u64..16);
    (proptest::collection::vec((site, any::<bool>(), 0u32..3), 1..len)).prop_map(|steps| {
        let records = steps
            .into_iter()
            .map(|((s, bt, t), taken, ctx)| BranchRecord {
                thread_id: 0,
                context_id: ctx,
                privilege: Privilege::User,
                branch_type: bt,
                pc: 0x40_0000 + s * 0x24,
                taken: taken || !bt.is_conditional(),
                target: 0x48_0000 + t * 0x40,
            })
            .collect();
        TraceStream::new("prop", records)
    })
}

fn sbox_layer(width: u32, boxes: &[(u32, bool)]) -> Layer {
    let mut used = 0u64;
    let mut ps = Vec::new();
    for &(slot, spongent) in boxes {
        let lo = slot * 4 % (width - 3);
        let m = 0xfu64 << lo;
        if used & m == 0 {
            used |= m;
            let table = if spongent { SPONGENT } else { PRESENT };
            ps.push(Placement { lo, prim: Primitive::sbox4(table).unwrap() });
        }
    }
    Layer::new(width, ps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_text_round_trips(recs in proptest::collection::vec(record(), 0..40), src in "[a-z][a-z0-9_]{0,12}") {
        let t = TraceStream::new(src, recs);
        prop_assert_eq!(parse_trace(&serialize_trace(&t)).unwrap(), t);
    }

    #[test]
    fn synth_is_reproducible(i in 0usize..5, total in 1usize..400, seed in any::<u64>()) {
        let p = SynthParams { total, reps: 20, ..SynthParams::default() };
        let sc = Scenario::ALL[i];
        prop_assert_eq!(synth_trace(sc, &p, seed).unwrap(), synth_trace(sc, &p, seed).unwrap());
    }

    #[test]
    fn layers_are_pure_and_boxes_biject(
        width in 8u32..=64,
        boxes in proptest::collection::vec((0u32..16, any::<bool>()), 1..6),
        x in any::<u128>(),
    ) {
        let layer = sbox_layer(width, &boxes);
        let f = LayeredFunction::new("p", width, vec![layer.clone()]).unwrap();
        let x = x & ((1u128 << width) - 1);
        prop_assert_eq!(f.eval(x), f.clone().eval(x));
        for p in layer.placements() {
            let hole = x & !(0xfu128 << p.lo);
            let mut seen = [false; 16];
            for v in 0..16u128 {
                let y = (layer.eval(hole | v << p.lo) >> p.lo) & 0xf;
                prop_assert!(!seen[y as usize]);
                seen[y as usize] = true;
            }
        }
    }

    #[test]
    fn appending_a_layer_never_lowers_cost(
        width in 8u32..=48,
        first in proptest::collection::vec((0u32..12, any::<bool>()), 1..5),
        second in proptest::collection::vec((0u32..12, any::<bool>()), 0..5),
    ) {
        let mut f = LayeredFunction::new("m", width, vec![sbox_layer(width, &first)]).unwrap();
        let before = f.cost();
        f.push_layer(sbox_layer(width, &second)).unwrap();
        let after = f.cost();
        prop_assert!(after.critical_path_transistors >= before.critical_path_transistors);
        prop_assert!(after.total_transistors >= before.total_transistors);
        prop_assert!(after.max_breadth >= before.max_breadth);
        prop_assert!(after.wire_crossovers >= before.wire_crossovers);
    }

    #[test]
    fn scores_are_never_negative(
        cv in 0.0f64..10.0, bins_log in 1u32..20, mean in 0.0f64..=1.0,
        acv in 0.0f64..5.0, spread in 0.0f64..=1.0,
        w in proptest::collection::vec(0.0f64..4.0, 4),
    ) {
        let q = QualityReport {
            uniformity_cv: cv,
            uniformity_bins: 1 << bins_log,
            avalanche_mean: mean,
            avalanche_cv: acv,
            per_bit_spread: spread,
            sample_count: 1,
        };
        prop_assert!(score_candidate(&q, &w).unwrap() >= 0.0);
        let perfect = QualityReport { uniformity_cv: 0.0, avalanche_mean: 0.5, avalanche_cv: 0.0, per_bit_spread: 0.0, ..q };
        prop_assert_eq!(score_candidate(&perfect, &DEFAULT_WEIGHTS).unwrap(), 0.0);
    }

    #[test]
    fn stored_targets_decrypt_only_under_the_same_phi(
        pc in 0..=ADDR_MASK, target in 0..=ADDR_MASK, psi in any::<u32>(), phi in any::<u32>(), other in any::<u32>(),
    ) {
        prop_assume!(phi != other);
        // keep the target inside the 2^32 block the BTB can express
        let target = (pc & !0xffff_ffff) | (target & 0xffff_ffff);
        let mut b = Bpu::new(PredictorConfig::for_model(ModelKind::Stbpu));
        let r = BranchRecord {
            thread_id: 0, context_id: 1, privilege: Privilege::User,
            branch_type: BranchType::IndirectJump, pc, taken: true, target,
        };
        let own = SecretToken { psi, phi };
        b.step(&r, own);
        prop_assert_eq!(b.predict(&r, own).target, Some(target));
        prop_assert_ne!(b.predict(&r, SecretToken { psi, phi: other }).target, Some(target));
    }

    #[test]
    fn direction_counters_saturate(t in program(300), model in 0usize..3) {
        let m = [ModelKind::Baseline, ModelKind::StTageLite, ModelKind::StPerceptron][model];
        let mut b = Bpu::new(PredictorConfig::scaled(m));
        for r in &t.records {
            b.step(r, SecretToken::from_u64(0x1234_5678_9abc));
            prop_assert!(b.counters_in_range());
        }
    }

    #[test]
    fn btb_evictions_balance(ops in proptest::collection::vec((0usize..4, 0u64..6, 0u32..2), 1..200)) {
        let mut btb = Btb::new(4, 2);
        let (mut inserts, mut updates, mut evictions) = (0usize, 0usize, 0usize);
        for (set, tag, off) in ops {
            inserts += 1;
            match btb.insert(set, tag, off, tag) {
                Insert::Updated => updates += 1,
                Insert::Evicted => evictions += 1,
                Insert::Allocated => {}
            }
        }
        prop_assert_eq!(evictions, inserts - updates - btb.occupancy());
        prop_assert_eq!(btb.stats.evictions as usize, evictions);
    }

    #[test]
    fn st_counters_conserve_and_replay(
        gm in 1u64..12, ge in 1u64..12, seed in any::<u64>(),
        events in proptest::collection::vec((0usize..3, 0usize..5), 0..200),
    ) {
        let kinds = [EventKind::DirectionMisp, EventKind::TargetMisp, EventKind::BtbEviction, EventKind::RsbUnderflow, EventKind::TaggedMisp];
        let ctx = [ContextKey::user(1), ContextKey::user(2), ContextKey::kernel(1)];
        let run = || {
            let mut st = StManager::new(ThresholdConfig::fixed(gm, ge), seed);
            let mut since = [(0u64, 0u64); 3];
            let mut tokens = Vec::new();
            for c in ctx {
                tokens.push(st.assign_token(c, None).unwrap());
            }
            for &(c, k) in &events {
                let kind = kinds[k];
                if st.on_event(ctx[c], kind).unwrap().is_some() {
                    since[c] = (0, 0);
                    tokens.push(st.token(ctx[c]).unwrap());
                } else {
                    match kind {
                        EventKind::DirectionMisp | EventKind::TargetMisp => since[c].0 += 1,
                        EventKind::BtbEviction => since[c].1 += 1,
                        _ => {}
                    }
                }
                for (i, k) in ctx.iter().enumerate() {
                    let e = st.entry(*k).unwrap();
                    assert_eq!((e.misp_counter, e.evict_counter), (gm - since[i].0, ge - since[i].1));
                }
            }
            tokens
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn reuse_and_gem_costs_are_monotone(
        i in 0u32..12, w in 1u32..16, t in 0u32..12, o in 0u32..8, p in 0.05f64..1.0,
    ) {
        let g = StructGeom::new(1 << i, w, t, o, 32);
        let (m, e) = reuse_cost(&g);
        for bigger in [
            StructGeom::new(1 << (i + 1), w, t, o, 32),
            StructGeom::new(1 << i, w, t + 1, o, 32),
            StructGeom::new(1 << i, w, t, o + 1, 32),
        ] {
            let (m2, e2) = reuse_cost(&bigger);
            prop_assert!(m2 >= m && e2 >= e);
        }
        let c = gem_eviction_cost(p, &g).unwrap();
        prop_assert!(gem_eviction_cost((p + 0.05).min(1.0), &g).unwrap() >= c);
        prop_assert!(gem_eviction_cost(p, &StructGeom::new(1 << (i + 1), w, t, o, 32)).unwrap() >= c);
        prop_assert!(gem_eviction_cost(p, &StructGeom::new(1 << i, w + 1, t, o, 32)).unwrap() >= c);
    }

    #[test]
    fn thresholds_scale_with_r(r in 0.0001f64..=1.0) {
        let th = derive_thresholds(r, &published_reports()).unwrap();
        prop_assert_eq!(th.misp_threshold, Some(ceil_count(r * PUBLISHED_C_MISP)));
        prop_assert_eq!(th.evict_threshold, Some(ceil_count(r * PUBLISHED_C_EVICT)));
        let m = th.misp_threshold.unwrap() as f64;
        prop_assert!(m >= 1.0 && m - r * PUBLISHED_C_MISP < 1.0 + 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_ledgers_agree(t in program(600), seed in any::<u64>(), gm in 1u64..20, model in 0usize..6) {
        let m = [
            ModelKind::Baseline, ModelKind::Stbpu, ModelKind::StTageLite,
            ModelKind::StPerceptron, ModelKind::FlushIbpb, ModelKind::Conservative,
        ][model];
        let cfg = PredictorConfig::scaled(m);
        let th = ThresholdConfig::fixed(gm, gm + 3);
        let a = simulate(&t, cfg, th, seed).unwrap();
        prop_assert_eq!(&a, &simulate(&t, cfg, th, seed).unwrap());
        prop_assert_eq!(a.tally.branches, t.len() as u64);
        prop_assert!(a.tally.oae_correct <= a.tally.branches);
        let mut sum = EventCounts::default();
        let mut rr = 0;
        for c in &a.contexts {
            for k in [EventKind::DirectionMisp, EventKind::TargetMisp, EventKind::BtbEviction,
                      EventKind::RsbUnderflow, EventKind::StRerandomized, EventKind::TaggedMisp] {
                for _ in 0..c.events.get(k) {
                    sum.add(k);
                }
            }
            prop_assert_eq!(c.rerandomizations, c.events.st_rerandomized);
            rr += c.rerandomizations;
        }
        prop_assert_eq!(sum, a.events);
        prop_assert_eq!(rr, a.rerandomizations);
        if !m.uses_tokens() {
            prop_assert_eq!(a.rerandomizations, 0);
        }
    }
}
