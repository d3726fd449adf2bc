//! CSV rendering of protocol results and summaries.
//!
//! Results header:
//! `window_len_s,method,arch,first_stage_seed,arbitration_seed,level,tp,tn,fp,fn,accuracy,sensitivity,specificity,error`
//!
//! Failed cells keep their key columns, leave the metric columns empty and
//! carry the error message (commas and newlines replaced) in `error`.
//! Absent ratios (undefined denominators) are empty fields, never zero.

use windarb_core::evaluation::{ResultRow, SummaryRow};

pub const RESULTS_HEADER: &str = "window_len_s,method,arch,first_stage_seed,arbitration_seed,level,tp,tn,fp,fn,accuracy,sensitivity,specificity,error";

pub const SUMMARY_HEADER: &str = "window_len_s,method,arch,level,rows,failed,accuracy_mean,accuracy_std,accuracy_min,accuracy_max,sensitivity_mean,sensitivity_std,sensitivity_min,sensitivity_max,specificity_mean,specificity_std,specificity_min,specificity_max";

fn sanitize(msg: &str) -> String {
    msg.replace(['\n', '\r'], " ").replace(',', ";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders result rows as CSV text.
pub fn results_to_string(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 64 + RESULTS_HEADER.len() + 1);
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for row in rows {
        let arch = row.arch.map(|a| a.descriptor()).unwrap_or_default();
        let arb_seed = row.arbitration_seed.map(|s| s.to_string()).unwrap_or_default();
        let (tp, tn, fp, fn_, acc, sens, spec) = match &row.metrics {
            Some(m) => (
                m.true_positives.to_string(),
                m.true_negatives.to_string(),
                m.false_positives.to_string(),
                m.false_negatives.to_string(),
                m.accuracy.to_string(),
                opt(m.sensitivity),
                opt(m.specificity),
            ),
            None => Default::default(),
        };
        let error = row.error.as_deref().map(sanitize).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{arch},{},{arb_seed},{},{tp},{tn},{fp},{fn_},{acc},{sens},{spec},{error}\n",
            row.window_len_s, row.method, row.first_stage_seed, row.level
        ));
    }
    out
}

/// Renders summary rows as CSV text.
pub fn summary_to_string(rows: &[SummaryRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 96 + SUMMARY_HEADER.len() + 1);
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for row in rows {
        let arch = row.arch.map(|a| a.descriptor()).unwrap_or_default();
        let stat = |s: &Option<windarb_core::evaluation::StatSummary>| match s {
            Some(s) => format!("{},{},{},{}", s.mean, s.std, s.min, s.max),
            None => ",,,".to_string(),
        };
        out.push_str(&format!(
            "{},{},{arch},{},{},{},{},{},{}\n",
            row.window_len_s,
            row.method,
            row.level,
            row.rows,
            row.failed,
            stat(&row.accuracy),
            stat(&row.sensitivity),
            stat(&row.specificity),
        ));
    }
    out
}
