//! `stbpu`: remap generation, cost analysis, attack runs and trace
//! simulation from the command line.

use clap::{Args, Parser, Subcommand};
use stbpu_core::analysis::{cost_reports, derive_thresholds, published_reports, CostReport, StructGeom};
use stbpu_core::attack::{
    collision_frequency, gem_find_eviction_sets, run_scenario_with, scenario_csv, target_injection, AttackOutcome,
    AttackScenario, Family, InjectOpts, Structure, Target,
};
use stbpu_core::predictors::{ModelKind, PredictorConfig, RemapSet};
use stbpu_core::remap::{parse_netlist, serialize_netlist};
use stbpu_core::remap_gen::{
    evaluate, generate_candidates, select_remaps, EvalSettings, GenConstraints, PrimitivePool, Role, DEFAULT_WEIGHTS,
};
use stbpu_core::sim::{
    compare_models, comparison_csv, comparison_text, parse_share, report_csv, report_jsonl, report_text,
    simulate_with, sweep_csv, sweep_r_suite, sweep_text, SimReport, SimSetup, ThresholdSpec,
};
use stbpu_core::st::ThresholdConfig;
use stbpu_core::trace::{bundled_suite, parse_trace, serialize_trace, synth_trace, Scenario, SynthParams, TraceStream};
use stbpu_core::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "stbpu", version, about = "Secret-token branch predictor simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate remap candidates for a role and keep the best one.
    GenRemap {
        #[arg(long)]
        role: Role,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Samples for the uniformity and avalanche estimates.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quality report for one netlist.
    EvalRemap {
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Score uniformity per field of this role instead of the whole output.
        #[arg(long)]
        role: Option<Role>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Expected attack costs and the thresholds they imply.
    Analyze {
        /// `full`, `scaled` or `I,W,T,O[,Ω]`.
        #[arg(long, default_value = "full")]
        geom: String,
        /// PHT entries for custom geometries.
        #[arg(long, default_value_t = 1 << 14)]
        pht_entries: u64,
        /// `all` or one attack name.
        #[arg(long, default_value = "all")]
        attack: String,
        #[arg(long, default_value_t = 0.05)]
        r: f64,
        #[arg(long)]
        csv: bool,
    },
    /// Run attack-surface cells, or `gem` / `collision` searches.
    Attack {
        /// `btb-rb-he`, ..., `all`, `gem` or `collision`.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "stbpu")]
        model: ModelKind,
        /// `scaled`, `full` or `I,W,T,O[,Ω]`.
        #[arg(long, default_value = "scaled")]
        geom: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 4096)]
        budget: u64,
        #[arg(long, default_value_t = 100)]
        trials: u32,
        /// Attacker runs under the victim's token (injection only).
        #[arg(long)]
        share_st: bool,
        #[command(flatten)]
        th: ThresholdArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one model over a trace.
    Simulate {
        #[command(flatten)]
        input: TraceArgs,
        #[arg(long, default_value = "baseline")]
        model: ModelKind,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        th: ThresholdArgs,
        /// `a=b`: context a runs under context b's token (`3k` = kernel).
        #[arg(long)]
        share_st: Vec<String>,
        /// Directory with `<role>.net` files replacing the shipped remaps.
        #[arg(long)]
        netlists: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// `.jsonl` writes JSON lines, anything else CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate several models over the same trace.
    Compare {
        #[command(flatten)]
        input: TraceArgs,
        #[arg(long, value_delimiter = ',', default_value = "baseline,stbpu,flush_ibpb,partition_stibp,conservative")]
        models: Vec<ModelKind>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        th: ThresholdArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy against the difficulty factor r.
    SweepR {
        #[command(flatten)]
        input: TraceArgs,
        #[arg(long, default_value = "stbpu")]
        model: ModelKind,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.05,0.01")]
        r: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trace.
    Synth {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 10_000)]
        total: usize,
        #[arg(long, default_value_t = 2)]
        contexts: usize,
        #[arg(long, default_value_t = 100)]
        switch_every: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TraceArgs {
    /// Trace file; without it (and without --synth) the bundled suite runs.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Synthetic scenario generated on the fly.
    #[arg(long, conflicts_with = "trace")]
    synth: Option<Scenario>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value file applied over the model preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the desk-scale preset.
    #[arg(long)]
    scaled: bool,
    /// `key=value` override, e.g. `btb_ways=4`; repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Difficulty factor for token models.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, requires = "evict_threshold")]
    misp_threshold: Option<u64>,
    #[arg(long, requires = "misp_threshold")]
    evict_threshold: Option<u64>,
    #[arg(long, conflicts_with_all = ["r", "misp_threshold"])]
    no_thresholds: bool,
}

impl ThresholdArgs {
    fn spec(&self) -> ThresholdSpec {
        if self.no_thresholds {
            ThresholdSpec::Disabled
        } else if let (Some(m), Some(e)) = (self.misp_threshold, self.evict_threshold) {
            ThresholdSpec::Fixed(ThresholdConfig::fixed(m, e))
        } else {
            ThresholdSpec::Ratio(self.r.unwrap_or(0.05))
        }
    }

    /// Token models get thresholds; the others never re-randomize.
    fn resolve(&self, cfg: &PredictorConfig) -> Result<ThresholdConfig> {
        if cfg.model.uses_tokens() {
            self.spec().resolve(cfg)
        } else {
            Ok(ThresholdConfig::disabled())
        }
    }
}

impl ConfigArgs {
    fn build(&self, model: ModelKind) -> Result<PredictorConfig> {
        let mut c = if self.scaled { PredictorConfig::scaled(model) } else { PredictorConfig::for_model(model) };
        if let Some(p) = &self.config {
            c = PredictorConfig::parse_kv(&read(p)?, c)?;
        }
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got `{kv}`")))?;
            c.set(k, v)?;
        }
        c.model = model;
        c.validate()?;
        Ok(c)
    }
}

impl TraceArgs {
    fn load(&self, seed: u64) -> Result<Vec<TraceStream>> {
        if let Some(p) = &self.trace {
            return Ok(vec![parse_trace(&read(p)?)?]);
        }
        if let Some(sc) = self.synth {
            return Ok(vec![synth_trace(sc, &SynthParams::default(), seed)?]);
        }
        Ok(bundled_suite(seed))
    }
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn write(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn parse_geom(s: &str) -> Result<StructGeom> {
    match s.trim() {
        "full" => return Ok(StructGeom::btb()),
        "scaled" => return Ok(StructGeom::scaled()),
        _ => {}
    }
    let v: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse::<u64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad geometry `{s}`")))?;
    match v[..] {
        [i, w, t, o] => Ok(StructGeom::new(i, w as u32, t as u32, o as u32, 32)),
        [i, w, t, o, om] => Ok(StructGeom::new(i, w as u32, t as u32, o as u32, om as u32)),
        _ => Err(Error::Config(format!("geometry needs I,W,T,O[,Ω], got `{s}`"))),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stbpu: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenRemap { role, count, seed, samples, out } => gen_remap(role, count, seed, samples, &out),
        Cmd::EvalRemap { netlist, samples, role, seed, json } => {
            let f = parse_netlist(&read(&netlist)?)?;
            let fields = match role {
                Some(r) => r.field_widths(),
                None => vec![f.output_width().min(20)],
            };
            let q = evaluate(&f, &fields, samples, samples, seed)?;
            if json {
                println!("{}", serde_json::to_string(&q).expect("report serializes"));
            } else {
                println!("uniformity_cv,uniformity_bins,avalanche_mean,avalanche_cv,per_bit_spread,samples");
                println!(
                    "{:.6},{},{:.6},{:.6},{:.6},{}",
                    q.uniformity_cv, q.uniformity_bins, q.avalanche_mean, q.avalanche_cv, q.per_bit_spread, q.sample_count
                );
            }
            Ok(())
        }
        Cmd::Analyze { geom, pht_entries, attack, r, csv } => analyze(&geom, pht_entries, &attack, r, csv),
        Cmd::Attack { scenario, model, geom, seeds, first_seed, budget, trials, share_st, th, out } => {
            let geometry = parse_geom(&geom)?;
            let cfg = stbpu_core::attack::config_for(model, &geometry);
            cfg.validate()?;
            let target = Target::with(cfg, th.resolve(&cfg)?);
            let seeds: Vec<u64> = (first_seed..first_seed + seeds.max(1)).collect();
            let text = match scenario.as_str() {
                "gem" => gem_runs(&target, &seeds, budget),
                "collision" => collision_runs(&target, &seeds, budget),
                _ => cell_runs(&scenario, model, geometry, &target, &seeds, budget, trials, share_st),
            }?;
            emit(out.as_deref(), &text.0, &text.1)
        }
        Cmd::Simulate { input, model, cfg, th, share_st, netlists, seed, out } => {
            let config = cfg.build(model)?;
            let mut setup = SimSetup::new(config, th.resolve(&config)?, seed);
            setup.share = share_st.iter().map(|s| parse_share(s)).collect::<Result<_>>()?;
            if let Some(d) = netlists {
                setup.remaps = Some(Arc::new(RemapSet::from_dir(&d)?));
            }
            let reports: Vec<SimReport> =
                input.load(seed)?.iter().map(|t| simulate_with(t, &setup, None)).collect::<Result<_>>()?;
            let text: String = reports.iter().map(report_text).collect::<Vec<_>>().join("\n");
            print!("{text}");
            if let Some(p) = out {
                let body = if p.extension().is_some_and(|e| e == "jsonl") {
                    report_jsonl(&reports)
                } else {
                    let mut s = String::new();
                    for (i, r) in reports.iter().enumerate() {
                        let csv = report_csv(r);
                        s.push_str(if i == 0 { &csv } else { csv.split_once('\n').map_or("", |x| x.1) });
                    }
                    s
                };
                write(&p, &body)?;
            }
            Ok(())
        }
        Cmd::Compare { input, models, cfg, th, seed, out } => {
            let configs: Vec<PredictorConfig> = models.iter().map(|m| cfg.build(*m)).collect::<Result<_>>()?;
            let mut csv = String::new();
            for t in input.load(seed)? {
                let c = compare_models(&t, &configs, &th.spec(), seed)?;
                println!("{}\n{}", t.source, comparison_text(&c));
                csv.push_str(&comparison_csv(&c));
            }
            match out {
                Some(p) => write(&p, &csv),
                None => Ok(()),
            }
        }
        Cmd::SweepR { input, model, cfg, r, seed, out } => {
            let rows = sweep_r_suite(&input.load(seed)?, cfg.build(model)?, &r, seed)?;
            emit(out.as_deref(), &sweep_text(&rows), &sweep_csv(&rows))
        }
        Cmd::Synth { scenario, total, contexts, switch_every, seed, out } => {
            let p = SynthParams { total, contexts, switch_every, ..SynthParams::default() };
            let text = serialize_trace(&synth_trace(scenario, &p, seed)?);
            match out {
                Some(path) => write(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

/// Text to stdout, CSV to `out` when given.
fn emit(out: Option<&Path>, text: &str, csv: &str) -> Result<()> {
    print!("{text}");
    match out {
        Some(p) => write(p, csv),
        None => Ok(()),
    }
}

fn gen_remap(role: Role, count: usize, seed: u64, samples: u64, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let cands = generate_candidates(&GenConstraints::for_role(role, seed), &PrimitivePool::default(), count)?;
    let settings = EvalSettings { uniformity_samples: samples, avalanche_samples: samples, seed };
    let sel = select_remaps(role, &cands, &DEFAULT_WEIGHTS, &settings)?;
    for (i, f) in cands.iter().enumerate() {
        write(&out.join(format!("cand_{i:03}.net")), &serialize_netlist(f))?;
    }
    write(&out.join(format!("{}.net", role.name().to_lowercase())), &serialize_netlist(&sel.chosen))?;
    let mut csv = String::from(
        "index,score,uniformity_cv,avalanche_mean,avalanche_cv,per_bit_spread,critical_path,total_transistors,chosen\n",
    );
    for row in &sel.ledger {
        let q = &row.quality;
        let _ = writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            row.index,
            row.score,
            q.uniformity_cv,
            q.avalanche_mean,
            q.avalanche_cv,
            q.per_bit_spread,
            row.cost.critical_path_transistors,
            row.cost.total_transistors,
            row.index == sel.index
        );
    }
    write(&out.join("ledger.csv"), &csv)?;
    let best = &sel.ledger[sel.index];
    println!(
        "{role}: chose candidate {} of {count} (score {:.4}, avalanche {:.4}, critical path {})",
        sel.index, best.score, best.quality.avalanche_mean, best.cost.critical_path_transistors
    );
    Ok(())
}

fn analyze(geom: &str, pht_entries: u64, attack: &str, r: f64, csv: bool) -> Result<()> {
    let btb = parse_geom(geom)?;
    let pht = match geom.trim() {
        "full" => StructGeom::pht(),
        "scaled" => {
            let c = PredictorConfig::scaled(ModelKind::Stbpu);
            StructGeom::new(c.pht_entries as u64, 1, 0, 0, 0)
        }
        _ => StructGeom::new(pht_entries, 1, 0, 0, 0),
    };
    let mut reports: Vec<CostReport> = cost_reports(&btb, &pht);
    if attack != "all" {
        reports.retain(|c| c.attack.name() == attack);
        if reports.is_empty() {
            return Err(Error::Config(format!("unknown attack `{attack}`")));
        }
    }
    // full size uses the published budgets, like the simulator does
    let budget = if btb == StructGeom::btb() && pht == StructGeom::pht() { published_reports() } else { cost_reports(&btb, &pht) };
    let th = derive_thresholds(r, &budget)?;
    let fmt_t = |v: Option<u64>| v.map_or("-".into(), |v| v.to_string());
    if csv {
        println!("attack,expected_misp,expected_evict,collision_prob,notes");
        for c in &reports {
            println!("{},{:.6e},{:.6e},{:.6e},\"{}\"", c.attack, c.expected_misp, c.expected_evict, c.collision_prob, c.notes);
        }
        println!("# r={r} misp_threshold={} evict_threshold={}", fmt_t(th.misp_threshold), fmt_t(th.evict_threshold));
    } else {
        println!("{:<20} {:>12} {:>12} {:>12}  notes", "attack", "E[misp]", "E[evict]", "P(collide)");
        for c in &reports {
            println!(
                "{:<20} {:>12.4e} {:>12.4e} {:>12.4e}  {}",
                c.attack.name(),
                c.expected_misp,
                c.expected_evict,
                c.collision_prob,
                c.notes
            );
        }
        println!("r = {r}: misp threshold {}, evict threshold {}", fmt_t(th.misp_threshold), fmt_t(th.evict_threshold));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cell_runs(
    name: &str,
    model: ModelKind,
    geometry: StructGeom,
    target: &Target,
    seeds: &[u64],
    budget: u64,
    trials: u32,
    share_st: bool,
) -> Result<(String, String)> {
    let cells: Vec<AttackScenario> = if name == "all" {
        AttackScenario::all()
    } else {
        vec![name.parse()?]
    };
    if share_st && cells.iter().any(|c| c.family != Family::TargetInject || c.structure != Structure::Btb) {
        return Err(Error::Config("--share-st only applies to btb-inject".into()));
    }
    let mut rows: Vec<(AttackScenario, ModelKind, AttackOutcome)> = Vec::new();
    let mut text = format!("{:<14} {:>6} {:>9} {:>10} {:>10} {:>8}\n", "cell", "wins", "score", "misp", "evict", "rerand");
    for cell in cells {
        let mut agg = (0u64, 0.0f64, 0u64, 0u64, 0u64);
        for &seed in seeds {
            let s = AttackScenario { geometry, budget, trials, seed, ..cell };
            let o = if share_st {
                target_injection(target, 0x60, InjectOpts { shared_token: true, budget }, seed)?
            } else {
                run_scenario_with(&s, target)?
            };
            agg.0 += o.success as u64;
            agg.1 += o.score;
            agg.2 += o.misp_triggered;
            agg.3 += o.evict_triggered;
            agg.4 += o.rerandomizations_observed;
            rows.push((s, model, o));
        }
        let n = seeds.len() as f64;
        let _ = writeln!(
            text,
            "{:<14} {:>6} {:>9.4} {:>10.0} {:>10.0} {:>8.0}",
            cell.name(),
            format!("{}/{}", agg.0, seeds.len()),
            agg.1 / n,
            agg.2 as f64 / n,
            agg.3 as f64 / n,
            agg.4 as f64 / n
        );
    }
    Ok((text, scenario_csv(&rows)))
}

fn gem_runs(target: &Target, seeds: &[u64], budget: u64) -> Result<(String, String)> {
    let mut csv = String::from("seed,targets,found,verified,success,evictions,accesses,rerandomizations\n");
    let mut text = String::new();
    // the cell budget default is far too small for a search; scale it up
    let budget = budget.max(1 << 20);
    for &seed in seeds {
        let g = gem_find_eviction_sets(target, 0.25, budget, seed)?;
        let o = g.outcome;
        let _ = writeln!(
            csv,
            "{seed},{},{},{},{},{},{},{}",
            g.targets,
            g.sets.len(),
            g.verified(),
            o.success,
            o.evict_triggered,
            o.wall_trials,
            o.rerandomizations_observed
        );
        let _ = writeln!(
            text,
            "seed {seed}: {}/{} sets verified, {} evictions, {} re-randomizations",
            g.verified(),
            g.targets,
            o.evict_triggered,
            o.rerandomizations_observed
        );
    }
    Ok((text, csv))
}

fn collision_runs(target: &Target, seeds: &[u64], trials: u64) -> Result<(String, String)> {
    let trials = trials.max(1_000_000);
    let mut csv = String::from("seed,trials,hits,rate,expected,z\n");
    let mut text = String::new();
    for &seed in seeds {
        let e = collision_frequency(target, trials, seed)?;
        let _ = writeln!(csv, "{seed},{},{},{:.6e},{:.6e},{:.3}", e.trials, e.hits, e.rate, e.expected, e.z());
        let _ = writeln!(text, "seed {seed}: {} / {} = {:.4e} (expected {:.4e}, z = {:.2})", e.hits, e.trials, e.rate, e.expected, e.z());
    }
    Ok((text, csv))
}
