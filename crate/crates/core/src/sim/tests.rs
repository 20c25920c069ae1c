use super::*;
use crate::predictors::ModelKind;
use crate::trace::{synth_trace, Scenario, SynthParams};

fn csh(k: usize, s: usize, total: usize, sites: usize) -> TraceStream {
    synth_trace(
        Scenario::ContextSwitchHeavy,
        &SynthParams { contexts: k, switch_every: s, total, sites, ..Default::default() },
        21,
    )
    .unwrap()
}

#[test]
fn full_size_thresholds_use_published_budgets() {
    let t = thresholds_for(&PredictorConfig::for_model(ModelKind::Stbpu), 0.05).unwrap();
    // ghr width does not enter the geometry
    assert_eq!((t.misp_threshold, t.evict_threshold), (Some(41_500), Some(26_500)));
    let s = thresholds_for(&PredictorConfig::scaled(ModelKind::Stbpu), 0.05).unwrap();
    assert!(s.misp_threshold.unwrap() < 1000 && s.evict_threshold.unwrap() < 1000, "{s:?}");
}

#[test]
fn loop_direction_accuracy() {
    let t = synth_trace(Scenario::Loop, &SynthParams { iterations: 7, reps: 1000, ..Default::default() }, 1).unwrap();
    let r = simulate(&t, PredictorConfig::baseline(), ThresholdConfig::disabled(), 1).unwrap();
    assert!(r.direction_accuracy >= 0.85, "{}", r.direction_accuracy);
}

#[test]
fn identity_report_matches_baseline() {
    let t = csh(2, 100, 20_000, 32);
    let base = simulate(&t, PredictorConfig::baseline(), ThresholdConfig::disabled(), 4).unwrap();
    let cfg = PredictorConfig { model: ModelKind::Stbpu, ..PredictorConfig::baseline() };
    let id = simulate_with(&t, &SimSetup::identity(cfg, 4), None).unwrap();
    assert_eq!(base.tally, id.tally);
    assert_eq!(base.events, id.events);
    assert_eq!(base.contexts.iter().map(|c| c.tally).collect::<Vec<_>>(), id.contexts.iter().map(|c| c.tally).collect::<Vec<_>>());
}

#[test]
fn flushing_costs_more_than_tokens() {
    let t = csh(2, 100, 40_000, 32);
    let st = simulate(&t, PredictorConfig::for_model(ModelKind::Stbpu), thresholds_for(&PredictorConfig::for_model(ModelKind::Stbpu), 0.05).unwrap(), 2).unwrap();
    let fl = simulate(&t, PredictorConfig::for_model(ModelKind::FlushIbpb), ThresholdConfig::disabled(), 2).unwrap();
    assert!(fl.oae < st.oae, "{} vs {}", fl.oae, st.oae);
}

#[test]
fn compare_needs_two_and_reports_losses() {
    let t = csh(4, 1000, 20_000, 96);
    let one = [PredictorConfig::baseline()];
    assert_eq!(compare_models(&t, &one, &ThresholdSpec::Disabled, 1).unwrap_err().to_string(), "need ≥ 2 models");
    let cfgs = [PredictorConfig::scaled(ModelKind::Baseline), PredictorConfig::scaled(ModelKind::Conservative)];
    let c = compare_models(&t, &cfgs, &ThresholdSpec::Disabled, 1).unwrap();
    assert_eq!(c.reference, "baseline");
    assert_eq!(c.rows[0].oae_loss, 0.0);
    assert!(c.rows[1].report.target_accuracy < c.rows[0].report.target_accuracy);
    assert!(comparison_text(&c).contains("conservative"));
    assert_eq!(comparison_csv(&c).lines().count(), 3);
}

#[test]
fn deterministic_and_ledger_consistent() {
    let t = csh(2, 100, 20_000, 32);
    let cfg = PredictorConfig::scaled(ModelKind::Stbpu);
    let th = ThresholdConfig::fixed(50, 50);
    let a = simulate(&t, cfg, th, 9).unwrap();
    let b = simulate(&t, cfg, th, 9).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.rerandomizations > 0);
    assert_eq!(a.rerandomizations, a.events.st_rerandomized);
    assert_eq!(a.contexts.iter().map(|c| c.rerandomizations).sum::<u64>(), a.rerandomizations);
    let tl = &a.tally;
    assert!(tl.oae_correct <= tl.branches && tl.branches == t.len() as u64);
    // each context's re-randomizations follow its own event budget
    for c in &a.contexts {
        let (m, e, n) = (c.events.direction_misp + c.events.target_misp, c.events.btb_eviction, c.rerandomizations);
        assert!(n <= m / 50 + e / 50, "{c:?}");
        assert!(m < 50 * (n + 1) && e < 50 * (n + 1), "{c:?}");
    }
}

#[test]
fn shared_tokens_share_history() {
    // context 2 replays context 1's program
    let first = csh(1, 100, 5000, 32);
    let mut t = first.clone();
    t.records.extend(first.records.iter().map(|r| BranchRecord { context_id: 2, ..*r }));
    let cfg = PredictorConfig::for_model(ModelKind::Stbpu);
    let mut setup = SimSetup::new(cfg, ThresholdConfig::disabled(), 3);
    let alone = simulate_with(&t, &setup, None).unwrap();
    setup.share = vec![parse_share("2=1").unwrap()];
    let shared = simulate_with(&t, &setup, None).unwrap();
    let second = |r: &SimReport| r.contexts.iter().find(|c| c.context.context_id == 2).unwrap().tally.oae();
    assert!(second(&shared) > second(&alone) + 0.01, "{} vs {}", second(&shared), second(&alone));
}

#[test]
fn sweep_rejects_bad_inputs() {
    let t = csh(2, 100, 2000, 32);
    assert!(sweep_r(&t, PredictorConfig::scaled(ModelKind::Stbpu), &[0.0], 1).is_err());
    assert!(sweep_r(&t, PredictorConfig::scaled(ModelKind::Baseline), &[0.1], 1).is_err());
    let rows = sweep_r(&t, PredictorConfig::scaled(ModelKind::Stbpu), &[1.0, 0.01], 1).unwrap();
    assert!(rows[1].rerandomizations >= rows[0].rerandomizations);
    assert!(sweep_text(&rows).lines().count() == 3 && sweep_csv(&rows).starts_with("r,"));
}

#[test]
fn empty_trace_is_an_error() {
    let e = simulate(&TraceStream::default(), PredictorConfig::baseline(), ThresholdConfig::disabled(), 0);
    assert!(e.is_err());
}

#[test]
fn share_parsing() {
    assert_eq!(parse_share("3=4k").unwrap(), (ContextKey::user(3), ContextKey::kernel(4)));
    assert!(parse_share("3").is_err());
    assert!(parse_share("x=1").is_err());
}

#[test]
fn reports_render() {
    let t = csh(2, 100, 2000, 32);
    let r = simulate(&t, PredictorConfig::baseline(), ThresholdConfig::disabled(), 0).unwrap();
    assert!(report_text(&r).contains("oae"));
    assert_eq!(report_csv(&r).lines().count(), 2);
    let j = report_jsonl(&[r.clone(), r]);
    assert_eq!(j.lines().count(), 2);
    let back: SimReport = serde_json::from_str(j.lines().next().unwrap()).unwrap();
    assert_eq!(back.tally.branches, 2000);
}
