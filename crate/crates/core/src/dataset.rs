//! On-disk text format for synthetic datasets.
//!
//! A dataset directory holds `train/` and `test/` subdirectories. Each
//! recording is a pair of files named after its id:
//!
//! * `<id>.meta`: `key = value` lines with `id`, `sample_rate_hz`, `channels`,
//!   `samples`, `label`, then one `event = onset_s,duration_s` line per
//!   annotated event.
//! * `<id>.csv`: the sample matrix, one row per time step, one column per
//!   channel, header `ch0,ch1,...`. Values use `.` as the decimal separator
//!   and round-trip f64 exactly.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::persist::{atomic_write, read_text};
use crate::synth::{EventAnnotation, EventKind, Recording};

pub const TRAIN_DIR: &str = "train";
pub const TEST_DIR: &str = "test";

/// Writes one recording into `dir` as `<id>.meta` + `<id>.csv`.
pub fn write_recording(recording: &Recording, dir: &Path) -> Result<()> {
    validate_id(&recording.id)?;
    let mut meta = String::new();
    meta.push_str(&format!("id = {}\n", recording.id));
    meta.push_str(&format!("sample_rate_hz = {}\n", recording.sample_rate_hz));
    meta.push_str(&format!("channels = {}\n", recording.samples.len()));
    meta.push_str(&format!("samples = {}\n", recording.n_samples()));
    meta.push_str(&format!("label = {}\n", recording.label));
    if let Some(events) = &recording.events {
        for event in events {
            meta.push_str(&format!("event = {},{}\n", event.onset_s, event.duration_s));
        }
    }
    atomic_write(&dir.join(format!("{}.meta", recording.id)), &meta)?;

    let channels = recording.samples.len();
    let n = recording.n_samples();
    let mut csv = String::with_capacity(n * channels * 20);
    for c in 0..channels {
        if c > 0 {
            csv.push(',');
        }
        csv.push_str(&format!("ch{c}"));
    }
    csv.push('\n');
    for t in 0..n {
        for (c, channel) in recording.samples.iter().enumerate() {
            if c > 0 {
                csv.push(',');
            }
            csv.push_str(&format!("{}", channel[t]));
        }
        csv.push('\n');
    }
    atomic_write(&dir.join(format!("{}.csv", recording.id)), &csv)
}

/// Reads one recording back from its `.meta`/`.csv` pair.
pub fn read_recording(meta_path: &Path) -> Result<Recording> {
    let meta_name = meta_path.display().to_string();
    let text = read_text(meta_path)?;
    let mut id = None;
    let mut sample_rate_hz = None;
    let mut channels = None;
    let mut n_samples = None;
    let mut label = None;
    let mut events: Vec<EventAnnotation> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::malformed(&meta_name, lineno + 1, format!("expected `key = value`, got `{line}`"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::malformed(&meta_name, lineno + 1, format!("bad number `{v}`")))
        };
        match key {
            "id" => id = Some(value.to_string()),
            "sample_rate_hz" => sample_rate_hz = Some(parse_f64(value)?),
            "channels" => {
                channels = Some(value.parse::<usize>().map_err(|_| {
                    Error::malformed(&meta_name, lineno + 1, format!("bad channel count `{value}`"))
                })?)
            }
            "samples" => {
                n_samples = Some(value.parse::<usize>().map_err(|_| {
                    Error::malformed(&meta_name, lineno + 1, format!("bad sample count `{value}`"))
                })?)
            }
            "label" => {
                label = Some(value.parse::<Label>().map_err(|e| {
                    Error::malformed(&meta_name, lineno + 1, e.to_string())
                })?)
            }
            "event" => {
                let (onset, duration) = value.split_once(',').ok_or_else(|| {
                    Error::malformed(&meta_name, lineno + 1, "event needs `onset,duration`")
                })?;
                events.push(EventAnnotation {
                    onset_s: parse_f64(onset.trim())?,
                    duration_s: parse_f64(duration.trim())?,
                    kind: EventKind::Burst,
                });
            }
            other => {
                return Err(Error::malformed(
                    &meta_name,
                    lineno + 1,
                    format!("unknown key `{other}`"),
                ))
            }
        }
    }
    let id = id.ok_or_else(|| Error::malformed(&meta_name, 1, "missing id"))?;
    let sample_rate_hz = sample_rate_hz.ok_or_else(|| Error::malformed(&meta_name, 1, "missing sample_rate_hz"))?;
    let channels = channels.ok_or_else(|| Error::malformed(&meta_name, 1, "missing channels"))?;
    let n_samples = n_samples.ok_or_else(|| Error::malformed(&meta_name, 1, "missing samples"))?;
    let label = label.ok_or_else(|| Error::malformed(&meta_name, 1, "missing label"))?;
    if label == Label::Abnormal && events.is_empty() {
        return Err(Error::Recording {
            id,
            msg: "abnormal recording without events violates class purity".into(),
        });
    }
    if label == Label::Normal && !events.is_empty() {
        return Err(Error::Recording {
            id,
            msg: "normal recording with events violates class purity".into(),
        });
    }

    let csv_path = meta_path.with_extension("csv");
    let csv_name = csv_path.display().to_string();
    let csv = read_text(&csv_path)?;
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); channels];
    let mut lines = csv.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::malformed(&csv_name, 1, "empty sample file"))?;
    let expected_header: Vec<String> = (0..channels).map(|c| format!("ch{c}")).collect();
    if header.split(',').map(str::trim).ne(expected_header.iter().map(String::as_str)) {
        return Err(Error::malformed(&csv_name, 1, format!("bad header `{header}`")));
    }
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != channels {
            return Err(Error::malformed(
                &csv_name,
                lineno + 1,
                format!("{} columns, expected {channels}", values.len()),
            ));
        }
        for (c, v) in values.iter().enumerate() {
            let x: f64 = v.trim().parse().map_err(|_| {
                Error::malformed(&csv_name, lineno + 1, format!("bad sample `{v}`"))
            })?;
            if !x.is_finite() {
                return Err(Error::malformed(&csv_name, lineno + 1, "non-finite sample"));
            }
            samples[c].push(x);
        }
    }
    if samples.iter().any(|ch| ch.len() != n_samples) {
        return Err(Error::malformed(
            &csv_name,
            1,
            format!("expected {n_samples} sample rows, found {}", samples[0].len()),
        ));
    }
    Ok(Recording {
        id,
        sample_rate_hz,
        samples,
        label,
        events: Some(events),
    })
}

/// Writes a train/test dataset under `root`, one recording pair per entry.
pub fn write_dataset(train: &[Recording], test: &[Recording], root: &Path) -> Result<()> {
    for (recordings, sub) in [(train, TRAIN_DIR), (test, TEST_DIR)] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for recording in recordings {
            write_recording(recording, &dir)?;
        }
    }
    Ok(())
}

/// Paths of every `.meta` file in one split directory, in filename order.
pub fn split_meta_paths(root: &Path, split: &str) -> Result<Vec<PathBuf>> {
    let dir = root.join(split);
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "meta"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Reads a whole dataset directory back into memory.
pub fn read_dataset(root: &Path) -> Result<(Vec<Recording>, Vec<Recording>)> {
    let read_split = |split: &str| -> Result<Vec<Recording>> {
        split_meta_paths(root, split)?
            .iter()
            .map(|p| read_recording(p))
            .collect()
    };
    Ok((read_split(TRAIN_DIR)?, read_split(TEST_DIR)?))
}

fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::InvalidInput("recording id must not be empty".into()));
    }
    if id.contains(['/', '\\', ',', '\n', '\r']) || id.contains(char::is_whitespace) {
        return Err(Error::InvalidInput(format!(
            "recording id `{id}` may not contain separators or whitespace"
        )));
    }
    Ok(())
}
