//! Table-style summaries and plot-data files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;

use crate::cache::write_atomic;
use crate::pipeline::{RunRecord, Summary, METRICS};

pub const TABLE_FILE: &str = "table.txt";
pub const PLOT_K_FILE: &str = "plot_vs_k.csv";
pub const PLOT_D_FILE: &str = "plot_vs_d.csv";
pub const PLOT_HEADER: &str = "representation,scheme,sampling,K,D,metric,mean,std";

/// Best record per metric, as indices into the record list.
#[derive(Debug, Clone, PartialEq)]
pub struct Best {
    pub metric: &'static str,
    pub index: usize,
}

fn metric_of(r: &RunRecord, metric: &str) -> Option<Summary> {
    r.report.as_ref().and_then(|rep| rep.metric(metric))
}

/// Highest mean per metric; the first record wins ties.
pub fn best_per_metric(records: &[RunRecord]) -> Vec<Best> {
    METRICS
        .iter()
        .filter_map(|&metric| {
            let mut best: Option<(usize, f64)> = None;
            for (i, r) in records.iter().enumerate() {
                if let Some(s) = metric_of(r, metric) {
                    if best.is_none_or(|(_, b)| s.mean > b) {
                        best = Some((i, s.mean));
                    }
                }
            }
            best.map(|(index, _)| Best { metric, index })
        })
        .collect()
}

fn pct(s: Summary) -> String {
    format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * s.std)
}

pub fn render_table(records: &[RunRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>8}  {:>15}  {:>15}  {:>15}  {:>9}",
        "variables", "K", "D", "Acc", "mAP", "mF1", "time(s)"
    );
    for r in records {
        match &r.report {
            Some(rep) => {
                let _ = writeln!(
                    out,
                    "{:<10} {:>5} {:>8}  {:>15}  {:>15}  {:>15}  {:>9.2}",
                    r.variables,
                    r.k,
                    r.d.unwrap_or(0),
                    pct(rep.acc),
                    pct(rep.map),
                    pct(rep.mf1),
                    r.timings.total()
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{:<10} {:>5} {:>8}  FAILED: {}",
                    r.variables,
                    r.k,
                    "-",
                    r.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
    }
    let _ = writeln!(out);
    for b in best_per_metric(records) {
        let r = &records[b.index];
        let s = metric_of(r, b.metric).expect("best has a report");
        let _ = writeln!(
            out,
            "best {:<4} {:<10} K-D {} - {}  {}",
            b.metric,
            r.variables,
            r.k,
            r.d.unwrap_or(0),
            pct(s)
        );
    }
    out
}

/// Plot rows for every successful record, ordered by metric, series and the
/// chosen axis.
pub fn plot_rows(records: &[RunRecord], by_d: bool) -> Vec<String> {
    let mut rows: Vec<(&str, &RunRecord, Summary)> = Vec::new();
    for &metric in &METRICS {
        for r in records {
            if let Some(s) = metric_of(r, metric) {
                rows.push((metric, r, s));
            }
        }
    }
    rows.sort_by(|a, b| {
        let key = |x: &(&str, &RunRecord, Summary)| {
            let axis = if by_d { x.1.d.unwrap_or(0) } else { x.1.k };
            (
                METRICS.iter().position(|m| *m == x.0),
                x.1.representation.clone(),
                x.1.scheme.clone(),
                x.1.sampling.clone(),
                axis,
            )
        };
        key(a).cmp(&key(b))
    });
    rows.into_iter()
        .map(|(metric, r, s)| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.representation,
                r.scheme,
                r.sampling,
                r.k,
                r.d.unwrap_or(0),
                metric,
                s.mean,
                s.std
            )
        })
        .collect()
}

fn csv(rows: Vec<String>) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Writes the table and both plot-data files into `dir`; returns the table.
pub fn emit_results(records: &[RunRecord], dir: &Path) -> Result<String> {
    let table = render_table(records);
    write_atomic(&dir.join(TABLE_FILE), table.as_bytes())?;
    write_atomic(&dir.join(PLOT_K_FILE), csv(plot_rows(records, false)).as_bytes())?;
    write_atomic(&dir.join(PLOT_D_FILE), csv(plot_rows(records, true)).as_bytes())?;
    Ok(table)
}
