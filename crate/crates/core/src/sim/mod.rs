//! Trace-driven simulation: accuracy metrics, switch hooks, token lifecycle
//! and model comparisons.

mod report;

pub use report::{comparison_csv, comparison_text, report_csv, report_jsonl, report_text, sweep_csv, sweep_text};

use crate::analysis::{cost_reports, derive_thresholds, published_reports, StructGeom};
use crate::error::{Error, Result};
use crate::predictors::{Bpu, BpuEvent, EventKind, Hook, PredictorConfig, RemapSet};
use crate::st::{ContextKey, SecretToken, StManager, ThresholdConfig};
use crate::trace::{BranchRecord, Privilege, TraceStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Attacker-visible geometry of a configuration's BTB and PHT.
pub fn geometry(cfg: &PredictorConfig) -> (StructGeom, StructGeom) {
    (
        StructGeom::new(cfg.btb_sets as u64, cfg.btb_ways, cfg.btb_tag_bits, cfg.btb_offset_bits, cfg.btb_target_bits),
        StructGeom::new(cfg.pht_entries as u64, 1, 0, 0, 0),
    )
}

/// Γ = ceil(r·C) for `cfg`. The full-size geometry uses the published
/// budgets; any other geometry uses costs computed for its own sizes.
pub fn thresholds_for(cfg: &PredictorConfig, r: f64) -> Result<ThresholdConfig> {
    let (btb, pht) = geometry(cfg);
    let reports = if btb == StructGeom::btb() && pht == StructGeom::pht() {
        published_reports()
    } else {
        cost_reports(&btb, &pht)
    };
    derive_thresholds(r, &reports)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub direction_misp: u64,
    pub target_misp: u64,
    pub btb_eviction: u64,
    pub rsb_underflow: u64,
    pub st_rerandomized: u64,
    pub tagged_misp: u64,
}

impl EventCounts {
    pub fn add(&mut self, kind: EventKind) {
        *self.slot(kind) += 1;
    }

    pub fn get(&self, kind: EventKind) -> u64 {
        let mut c = *self;
        *c.slot(kind)
    }

    fn slot(&mut self, kind: EventKind) -> &mut u64 {
        match kind {
            EventKind::DirectionMisp => &mut self.direction_misp,
            EventKind::TargetMisp => &mut self.target_misp,
            EventKind::BtbEviction => &mut self.btb_eviction,
            EventKind::RsbUnderflow => &mut self.rsb_underflow,
            EventKind::StRerandomized => &mut self.st_rerandomized,
            EventKind::TaggedMisp => &mut self.tagged_misp,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub branches: u64,
    pub conditionals: u64,
    pub direction_correct: u64,
    /// Branches that needed a target (taken or unconditional).
    pub target_required: u64,
    pub target_correct: u64,
    pub oae_correct: u64,
}

impl Tally {
    fn ratio(n: u64, d: u64) -> f64 {
        if d == 0 {
            1.0
        } else {
            n as f64 / d as f64
        }
    }

    pub fn direction_accuracy(&self) -> f64 {
        Self::ratio(self.direction_correct, self.conditionals)
    }

    pub fn target_accuracy(&self) -> f64 {
        Self::ratio(self.target_correct, self.target_required)
    }

    pub fn oae(&self) -> f64 {
        Self::ratio(self.oae_correct, self.branches)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextReport {
    pub context: ContextKey,
    pub tally: Tally,
    pub events: EventCounts,
    pub rerandomizations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: String,
    pub trace: String,
    pub direction_accuracy: f64,
    pub target_accuracy: f64,
    pub oae: f64,
    pub tally: Tally,
    pub events: EventCounts,
    pub rerandomizations: u64,
    pub thresholds: ThresholdConfig,
    pub contexts: Vec<ContextReport>,
}

/// Everything `simulate` needs besides the trace.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub config: PredictorConfig,
    pub thresholds: ThresholdConfig,
    pub seed: u64,
    /// `(a, b)`: context `a` runs under a copy of `b`'s token.
    pub share: Vec<(ContextKey, ContextKey)>,
    pub remaps: Option<Arc<RemapSet>>,
    /// Token model with baseline bit slices and all-zero tokens.
    pub identity: bool,
}

impl SimSetup {
    pub fn new(config: PredictorConfig, thresholds: ThresholdConfig, seed: u64) -> Self {
        Self { config, thresholds, seed, share: Vec::new(), remaps: None, identity: false }
    }

    pub fn identity(config: PredictorConfig, seed: u64) -> Self {
        Self { identity: true, ..Self::new(config, ThresholdConfig::disabled(), seed) }
    }
}

/// Per-record observer; receives the record, its prediction and events.
pub type Observer<'a> = dyn FnMut(&BranchRecord, &crate::predictors::Prediction, &[BpuEvent]) + 'a;

pub fn simulate(trace: &TraceStream, config: PredictorConfig, thresholds: ThresholdConfig, seed: u64) -> Result<SimReport> {
    simulate_with(trace, &SimSetup::new(config, thresholds, seed), None)
}

pub fn simulate_with(trace: &TraceStream, setup: &SimSetup, mut observer: Option<&mut Observer>) -> Result<SimReport> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let cfg = setup.config;
    cfg.validate()?;
    let token_model = cfg.model.uses_tokens();
    let mut bpu = if setup.identity {
        Bpu::identity(cfg)
    } else if let (true, Some(r)) = (token_model, &setup.remaps) {
        Bpu::with_remaps(cfg, r.clone())
    } else {
        Bpu::new(cfg)
    };
    let thresholds = if token_model { setup.thresholds } else { ThresholdConfig::disabled() };
    let mut st = StManager::new(thresholds, setup.seed);
    for (a, b) in &setup.share {
        st.ensure(*b);
        st.assign_token(*a, Some(*b))?;
    }

    let mut total = Tally::default();
    let mut events = EventCounts::default();
    let mut per_ctx: BTreeMap<ContextKey, (Tally, EventCounts)> = BTreeMap::new();
    let mut prev: [Option<ContextKey>; 2] = [None, None];
    let mut buf: Vec<BpuEvent> = Vec::with_capacity(8);

    for rec in &trace.records {
        let key = ContextKey { context_id: rec.context_id, privilege: rec.privilege };
        let t = rec.thread_id as usize & 1;
        st.ensure(key);
        if let Some(p) = prev[t] {
            if p.context_id != key.context_id {
                bpu.on_hook(Hook::ContextSwitch);
            }
            if p.privilege == Privilege::User && key.privilege == Privilege::Kernel {
                bpu.on_hook(Hook::KernelEntry);
            }
        }
        if prev[t] != Some(key) {
            st.context_switch(prev[t], key)?;
            prev[t] = Some(key);
        }
        let token = if token_model && !setup.identity { st.token(key)? } else { SecretToken::ZERO };

        let pred = bpu.predict(rec, token);
        buf.clear();
        bpu.update_into(rec, &pred, token, &mut buf);

        let (ct, ce) = per_ctx.entry(key).or_default();
        let mut dir_ok = true;
        let mut tgt_ok = true;
        let n = buf.len();
        for i in 0..n {
            let e = buf[i];
            match e.kind {
                EventKind::DirectionMisp => dir_ok = false,
                EventKind::TargetMisp => tgt_ok = false,
                _ => {}
            }
            events.add(e.kind);
            ce.add(e.kind);
            if token_model && st.on_event(key, e.kind)?.is_some() {
                let r = BpuEvent { kind: EventKind::StRerandomized, ..e };
                events.add(r.kind);
                ce.add(r.kind);
                buf.push(r);
            }
        }
        for tally in [&mut total, ct] {
            tally.branches += 1;
            if rec.branch_type.is_conditional() {
                tally.conditionals += 1;
                tally.direction_correct += dir_ok as u64;
            }
            if rec.taken || !rec.branch_type.is_conditional() {
                tally.target_required += 1;
                tally.target_correct += tgt_ok as u64;
            }
            tally.oae_correct += (dir_ok && tgt_ok) as u64;
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(rec, &pred, &buf);
        }
    }

    let contexts = per_ctx
        .into_iter()
        .map(|(k, (tally, ev))| ContextReport {
            context: k,
            tally,
            events: ev,
            rerandomizations: st.entry(k).map(|e| e.rerandomization_count).unwrap_or(0),
        })
        .collect();
    Ok(SimReport {
        model: cfg.model.name().to_string(),
        trace: trace.source.clone(),
        direction_accuracy: total.direction_accuracy(),
        target_accuracy: total.target_accuracy(),
        oae: total.oae(),
        tally: total,
        events,
        rerandomizations: st.total_rerandomizations(),
        thresholds,
        contexts,
    })
}

/// How each compared model gets its thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Disabled,
    Fixed(ThresholdConfig),
    /// Derived per configuration from its geometry.
    Ratio(f64),
}

impl ThresholdSpec {
    pub fn resolve(&self, cfg: &PredictorConfig) -> Result<ThresholdConfig> {
        match *self {
            ThresholdSpec::Disabled => Ok(ThresholdConfig::disabled()),
            ThresholdSpec::Fixed(t) => Ok(t),
            ThresholdSpec::Ratio(r) => thresholds_for(cfg, r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub report: SimReport,
    /// OAE loss against the reference model (positive = worse).
    pub oae_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
}

/// Runs every configuration on the same trace. Losses are measured against
/// the baseline model when present, else against the first configuration.
pub fn compare_models(
    trace: &TraceStream,
    configs: &[PredictorConfig],
    thresholds: &ThresholdSpec,
    seed: u64,
) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(Error::NeedTwoModels);
    }
    let reports: Vec<SimReport> = configs
        .par_iter()
        .map(|c| simulate(trace, *c, thresholds.resolve(c)?, seed))
        .collect::<Result<_>>()?;
    let ri = configs.iter().position(|c| c.model == crate::predictors::ModelKind::Baseline).unwrap_or(0);
    let ref_oae = reports[ri].oae;
    Ok(Comparison {
        reference: reports[ri].model.clone(),
        rows: reports.into_iter().map(|r| ComparisonRow { oae_loss: ref_oae - r.oae, report: r }).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub misp_threshold: Option<u64>,
    pub evict_threshold: Option<u64>,
    pub oae: f64,
    pub rerandomizations: u64,
    pub branches: u64,
}

/// OAE and re-randomization count for each difficulty factor, averaged
/// over `traces` (OAE is the unweighted mean; counts are summed).
pub fn sweep_r_suite(traces: &[TraceStream], config: PredictorConfig, r_values: &[f64], seed: u64) -> Result<Vec<SweepRow>> {
    if !config.model.uses_tokens() {
        return Err(Error::Config(format!("sweep-r needs a token model, got {}", config.model)));
    }
    if traces.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if let Some(r) = r_values.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::DifficultyFactor(*r));
    }
    let jobs: Vec<(usize, usize)> = (0..r_values.len()).flat_map(|i| (0..traces.len()).map(move |j| (i, j))).collect();
    let results: Vec<(usize, SimReport)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let th = thresholds_for(&config, r_values[i])?;
            Ok((i, simulate(&traces[j], config, th, seed)?))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(r_values.len());
    for (i, &r) in r_values.iter().enumerate() {
        let th = thresholds_for(&config, r)?;
        let mine: Vec<&SimReport> = results.iter().filter(|(k, _)| *k == i).map(|(_, s)| s).collect();
        rows.push(SweepRow {
            r,
            misp_threshold: th.misp_threshold,
            evict_threshold: th.evict_threshold,
            oae: mine.iter().map(|s| s.oae).sum::<f64>() / mine.len() as f64,
            rerandomizations: mine.iter().map(|s| s.rerandomizations).sum(),
            branches: mine.iter().map(|s| s.tally.branches).sum(),
        });
    }
    Ok(rows)
}

pub fn sweep_r(trace: &TraceStream, config: PredictorConfig, r_values: &[f64], seed: u64) -> Result<Vec<SweepRow>> {
    sweep_r_suite(std::slice::from_ref(trace), config, r_values, seed)
}

/// Parses `a=b` token-sharing pairs; a trailing `k` marks a kernel context.
pub fn parse_share(spec: &str) -> Result<(ContextKey, ContextKey)> {
    let key = |s: &str| -> Result<ContextKey> {
        let s = s.trim();
        let (num, kernel) = match s.strip_suffix('k') {
            Some(n) => (n, true),
            None => (s, false),
        };
        let id: u32 = num.parse().map_err(|_| Error::Config(format!("bad context `{s}`")))?;
        Ok(if kernel { ContextKey::kernel(id) } else { ContextKey::user(id) })
    };
    let (a, b) = spec.split_once('=').ok_or_else(|| Error::Config(format!("expected ctxA=ctxB, got `{spec}`")))?;
    Ok((key(a)?, key(b)?))
}

#[cfg(test)]
mod tests;
