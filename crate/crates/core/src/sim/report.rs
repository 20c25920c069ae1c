use super::{Comparison, SimReport, SweepRow};
use std::fmt::Write as _;

fn opt(v: Option<u64>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}

pub fn report_text(r: &SimReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {}  trace {}", r.model, if r.trace.is_empty() { "-" } else { &r.trace });
    let _ = writeln!(
        s,
        "branches {}  direction {:.4}  target {:.4}  oae {:.4}",
        r.tally.branches, r.direction_accuracy, r.target_accuracy, r.oae
    );
    let e = &r.events;
    let _ = writeln!(
        s,
        "direction_misp {}  target_misp {}  btb_eviction {}  rsb_underflow {}  tagged_misp {}  st_rerandomized {}",
        e.direction_misp, e.target_misp, e.btb_eviction, e.rsb_underflow, e.tagged_misp, e.st_rerandomized
    );
    let _ = writeln!(
        s,
        "thresholds misp {} evict {}",
        opt(r.thresholds.misp_threshold),
        opt(r.thresholds.evict_threshold)
    );
    let _ = writeln!(s, "{:>8} {:>9} {:>8} {:>8}", "context", "branches", "oae", "rerand");
    for c in &r.contexts {
        let _ = writeln!(
            s,
            "{:>8} {:>9} {:>8.4} {:>8}",
            c.context.to_string(),
            c.tally.branches,
            c.tally.oae(),
            c.rerandomizations
        );
    }
    s
}

const CSV_HEADER: &str = "model,trace,branches,direction_accuracy,target_accuracy,oae,direction_misp,target_misp,\
btb_eviction,rsb_underflow,tagged_misp,st_rerandomized,misp_threshold,evict_threshold";

fn csv_row(r: &SimReport) -> String {
    let e = &r.events;
    format!(
        "{},{},{},{:.6},{:.6},{:.6},{},{},{},{},{},{},{},{}",
        r.model,
        r.trace.replace(',', ";"),
        r.tally.branches,
        r.direction_accuracy,
        r.target_accuracy,
        r.oae,
        e.direction_misp,
        e.target_misp,
        e.btb_eviction,
        e.rsb_underflow,
        e.tagged_misp,
        e.st_rerandomized,
        r.thresholds.misp_threshold.map_or(String::new(), |v| v.to_string()),
        r.thresholds.evict_threshold.map_or(String::new(), |v| v.to_string()),
    )
}

pub fn report_csv(r: &SimReport) -> String {
    format!("{CSV_HEADER}\n{}\n", csv_row(r))
}

/// One JSON object per line.
pub fn report_jsonl(reports: &[SimReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("reports serialize") + "\n")
        .collect()
}

pub fn comparison_text(c: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>9} {:>9} {:>9} {:>10} {:>9}",
        "model", "direction", "target", "oae", "oae_loss", "evictions"
    );
    for row in &c.rows {
        let r = &row.report;
        let _ = writeln!(
            s,
            "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>+10.4} {:>9}",
            r.model, r.direction_accuracy, r.target_accuracy, r.oae, row.oae_loss, r.events.btb_eviction
        );
    }
    let _ = writeln!(s, "loss measured against {}", c.reference);
    s
}

pub fn comparison_csv(c: &Comparison) -> String {
    let mut s = format!("{CSV_HEADER},oae_loss\n");
    for row in &c.rows {
        let _ = writeln!(s, "{},{:.6}", csv_row(&row.report), row.oae_loss);
    }
    s
}

pub fn sweep_text(rows: &[SweepRow]) -> String {
    let mut s = format!("{:>8} {:>10} {:>10} {:>9} {:>10}\n", "r", "misp_thr", "evict_thr", "oae", "rerand");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8} {:>10} {:>10} {:>9.4} {:>10}",
            r.r,
            opt(r.misp_threshold),
            opt(r.evict_threshold),
            r.oae,
            r.rerandomizations
        );
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("r,misp_threshold,evict_threshold,oae,rerandomizations,branches\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{},{}",
            r.r,
            r.misp_threshold.map_or(String::new(), |v| v.to_string()),
            r.evict_threshold.map_or(String::new(), |v| v.to_string()),
            r.oae,
            r.rerandomizations,
            r.branches
        );
    }
    s
}
