//! The score-file CSV: the interchange format between the first stage and
//! arbitration.
//!
//! Header `recording_id,window_index,p_abnormal,true_label`, UTF-8, `.`
//! decimal separator, probabilities written with 17 significant digits, rows
//! sorted by `(recording_id, window_index)`. Scores produced by any external
//! first-stage model can be arbitrated as long as they conform.

use std::collections::HashMap;
use std::path::Path;

use windarb_core::error::{Error, Result};
use windarb_core::first_stage::RecordingScores;
use windarb_core::label::Label;
use windarb_core::persist::{atomic_write, read_text};

pub const HEADER: &str = "recording_id,window_index,p_abnormal,true_label";

/// Renders scores as CSV text, sorted by `(recording_id, window_index)`.
pub fn scores_to_string(scores: &[RecordingScores]) -> Result<String> {
    let mut rows: Vec<(&str, usize, f64, Label)> = Vec::new();
    for rec in scores {
        if rec.recording_id.contains([',', '\n', '\r']) || rec.recording_id.is_empty() {
            return Err(Error::InvalidInput(format!(
                "recording id `{}` cannot be written to CSV",
                rec.recording_id
            )));
        }
        if rec.scores.is_empty() {
            return Err(Error::InvalidInput(format!(
                "recording `{}` has no scores",
                rec.recording_id
            )));
        }
        for (idx, &p) in rec.scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "recording `{}` window {idx} has p_abnormal {p} outside [0, 1]",
                    rec.recording_id
                )));
            }
            rows.push((&rec.recording_id, idx, p, rec.true_label));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)));
    let mut out = String::with_capacity(rows.len() * 48 + HEADER.len() + 1);
    out.push_str(HEADER);
    out.push('\n');
    for (id, idx, p, label) in rows {
        out.push_str(&format!("{id},{idx},{p:.16e},{label}\n"));
    }
    Ok(out)
}

pub fn write_scores(path: &Path, scores: &[RecordingScores]) -> Result<()> {
    atomic_write(path, &scores_to_string(scores)?)
}

/// Parses score CSV text. Rows may appear in any order; each recording's
/// scores are returned ordered by window index. Recordings are returned in
/// order of first appearance.
pub fn parse_scores(text: &str, source: &str) -> Result<Vec<RecordingScores>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == HEADER => {}
        Some((_, header)) => {
            return Err(Error::Malformed {
                path: source.to_string(),
                line: 1,
                msg: format!("bad header `{header}`, expected `{HEADER}`"),
            })
        }
        None => {
            return Err(Error::Malformed {
                path: source.to_string(),
                line: 1,
                msg: "empty score file".into(),
            })
        }
    }
    let malformed = |line: usize, msg: String| Error::Malformed {
        path: source.to_string(),
        line,
        msg,
    };

    struct Partial {
        windows: Vec<(usize, f64)>,
        label: Label,
        label_line: usize,
    }
    let mut order: Vec<String> = Vec::new();
    let mut partials: HashMap<String, Partial> = HashMap::new();

    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(
                lineno,
                format!("{} columns, expected 4", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(malformed(lineno, "empty recording_id".into()));
        }
        let window_index: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad window_index `{}`", fields[1])))?;
        let p: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad p_abnormal `{}`", fields[2])))?;
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(malformed(
                lineno,
                format!("p_abnormal {p} outside [0, 1]"),
            ));
        }
        let label: Label = fields[3]
            .trim()
            .parse()
            .map_err(|e: Error| malformed(lineno, e.to_string()))?;
        let partial = partials.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Partial {
                windows: Vec::new(),
                label,
                label_line: lineno,
            }
        });
        if partial.label != label {
            return Err(malformed(
                lineno,
                format!(
                    "true_label `{label}` contradicts `{}` from line {}",
                    partial.label, partial.label_line
                ),
            ));
        }
        if partial.windows.iter().any(|&(w, _)| w == window_index) {
            return Err(malformed(
                lineno,
                format!("duplicate window_index {window_index} for recording `{id}`"),
            ));
        }
        partial.windows.push((window_index, p));
    }

    order
        .into_iter()
        .map(|id| {
            let mut partial = partials.remove(&id).expect("ordered ids exist");
            partial.windows.sort_by_key(|&(w, _)| w);
            RecordingScores::new(
                id,
                partial.windows.into_iter().map(|(_, p)| p).collect(),
                partial.label,
            )
        })
        .collect()
}

pub fn read_scores(path: &Path) -> Result<Vec<RecordingScores>> {
    parse_scores(&read_text(path)?, &path.display().to_string())
}
