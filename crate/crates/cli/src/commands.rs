//! Implementations of the CLI subcommands.

use std::path::{Path, PathBuf};

use windarb_core::arbitration::{
    arbitrate, mean_arbitrate, threshold_arbitrate, train_arbitration, ArbitrationKind,
    ArbitrationModel, ThresholdDecision,
};
use windarb_core::dataset::{split_meta_paths, read_recording, write_recording, TEST_DIR, TRAIN_DIR};
use windarb_core::error::{Error, Result};
use windarb_core::evaluation::{compute_metrics, run_protocol, summarize, Metrics};
use windarb_core::first_stage::{
    extract_features, train_first_stage_on_features, FirstStage, RecordingScores,
};
use windarb_core::label::Label;
use windarb_core::persist::{atomic_write, read_text};
use windarb_core::synth::{dataset_plan, generate_planned, Split};
use windarb_core::windowing::{recording_noise_counts, segment, WindowingConfig};

use crate::config::Settings;
use crate::results::{results_to_string, summary_to_string};
use crate::scorefile::{read_scores, write_scores};

/// `generate`: synthesize the dataset and write it under `out`, one
/// recording at a time.
pub fn generate(settings: &Settings, out: &Path) -> Result<()> {
    let gcfg = &settings.pipeline.generator;
    for sub in [TRAIN_DIR, TEST_DIR] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    let mut train = 0usize;
    let mut test = 0usize;
    for entry in dataset_plan(gcfg)? {
        let recording = generate_planned(gcfg, &entry)?;
        let dir = match entry.split {
            Split::Train => {
                train += 1;
                out.join(TRAIN_DIR)
            }
            Split::Test => {
                test += 1;
                out.join(TEST_DIR)
            }
        };
        write_recording(&recording, &dir)?;
    }
    println!("wrote {train} train and {test} test recordings to {}", out.display());
    Ok(())
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "{what} `{}` does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn windowing(settings: &Settings, window_len_s: f64) -> WindowingConfig {
    settings.pipeline.windowing_for(window_len_s)
}

/// `train-first`: train the first stage on the train split of a dataset
/// directory and save the model bundle.
pub fn train_first(
    settings: &Settings,
    data: &Path,
    window_len_s: f64,
    model_out: &Path,
) -> Result<()> {
    require_exists(data, "dataset directory")?;
    let wcfg = windowing(settings, window_len_s);
    let fcfg = &settings.pipeline.features;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for meta in split_meta_paths(data, TRAIN_DIR)? {
        let recording = read_recording(&meta)?;
        for window in segment(&recording, &wcfg)? {
            rows.push(extract_features(&window, fcfg)?);
            labels.push(window.inherited_label);
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no training windows found under `{}`",
            data.display()
        )));
    }
    let mcfg = settings.pipeline.first_stage_arch.to_config(rows[0].len());
    let stage = train_first_stage_on_features(
        rows,
        labels,
        fcfg,
        &mcfg,
        &settings.pipeline.first_stage_train,
    )?;
    atomic_write(model_out, &stage.to_text())?;
    println!("trained first stage saved to {}", model_out.display());
    Ok(())
}

/// `score`: apply a first-stage model to one split of a dataset directory
/// and write the score file.
pub fn score(
    settings: &Settings,
    data: &Path,
    model: &Path,
    window_len_s: f64,
    split: &str,
    out: &Path,
) -> Result<()> {
    require_exists(data, "dataset directory")?;
    require_exists(model, "first-stage model")?;
    let stage = FirstStage::from_text(&read_text(model)?)?;
    let wcfg = windowing(settings, window_len_s);
    let mut scored = Vec::new();
    for meta in split_meta_paths(data, split)? {
        let recording = read_recording(&meta)?;
        scored.push(windarb_core::first_stage::score_recording(
            &stage, &recording, &wcfg,
        )?);
    }
    write_scores(out, &scored)?;
    println!("scored {} recordings to {}", scored.len(), out.display());
    Ok(())
}

/// How `arbitrate` obtains its decision function.
pub enum ArbitrateMode {
    Mean,
    Threshold,
    /// Train a model of `kind` on the given training scores.
    Train { kind: ArbitrationKind, scores: PathBuf },
    /// Load a previously saved arbitration model.
    Load { model: PathBuf },
}

/// `arbitrate`: produce per-recording decisions (and metrics) from a score
/// file.
pub fn arbitrate_cmd(
    settings: &Settings,
    scores_path: &Path,
    mode: ArbitrateMode,
    model_out: Option<&Path>,
    decisions_out: Option<&Path>,
) -> Result<()> {
    require_exists(scores_path, "score file")?;
    let test_scores = read_scores(scores_path)?;
    if test_scores.is_empty() {
        return Err(Error::InvalidInput(format!(
            "score file `{}` holds no recordings",
            scores_path.display()
        )));
    }
    let pipe = &settings.pipeline;

    let mut decisions: Vec<(String, String, Label)> = Vec::new();
    let mut resolved: Vec<Label> = Vec::new();
    let mut indeterminate = 0usize;
    let mut method_name = String::new();

    match mode {
        ArbitrateMode::Mean => {
            method_name.push_str("mean");
            for rec in &test_scores {
                let label = mean_arbitrate(rec)?;
                decisions.push((rec.recording_id.clone(), label.to_string(), rec.true_label));
                resolved.push(label);
            }
        }
        ArbitrateMode::Threshold => {
            method_name.push_str("threshold");
            for rec in &test_scores {
                let decision = threshold_arbitrate(rec, &pipe.threshold)?;
                let (text, label) = match decision {
                    ThresholdDecision::Normal => ("normal".to_string(), Label::Normal),
                    ThresholdDecision::Abnormal => ("abnormal".to_string(), Label::Abnormal),
                    ThresholdDecision::Indeterminate => {
                        indeterminate += 1;
                        // undecided recordings fall back to the mean rule
                        ("indeterminate".to_string(), mean_arbitrate(rec)?)
                    }
                };
                decisions.push((rec.recording_id.clone(), text, rec.true_label));
                resolved.push(label);
            }
        }
        ArbitrateMode::Train { kind, scores } => {
            method_name.push_str(kind.as_str());
            require_exists(&scores, "training score file")?;
            let train_scores = read_scores(&scores)?;
            let arch = settings.protocol.mlp_grid[0];
            let mcfg = arch.to_config(kind.input_len(pipe.n_max, pipe.n_bins));
            let model = train_arbitration(
                &train_scores,
                kind,
                pipe.n_max,
                pipe.n_bins,
                &mcfg,
                &pipe.arbitration_train,
            )?;
            if let Some(path) = model_out {
                atomic_write(path, &model.to_text())?;
                println!("arbitration model saved to {}", path.display());
            }
            apply_model(&model, &test_scores, &mut decisions, &mut resolved)?;
        }
        ArbitrateMode::Load { model } => {
            require_exists(&model, "arbitration model")?;
            let model = ArbitrationModel::from_text(&read_text(&model)?)?;
            method_name.push_str(model.kind.as_str());
            apply_model(&model, &test_scores, &mut decisions, &mut resolved)?;
        }
    }

    if let Some(path) = decisions_out {
        decisions.sort_by(|a, b| a.0.cmp(&b.0));
        let mut text = String::from("recording_id,predicted,true_label\n");
        for (id, predicted, truth) in &decisions {
            text.push_str(&format!("{id},{predicted},{truth}\n"));
        }
        atomic_write(path, &text)?;
        println!("decisions written to {}", path.display());
    }

    let truth: Vec<Label> = test_scores.iter().map(|r| r.true_label).collect();
    let metrics = compute_metrics(&resolved, &truth)?;
    print_metrics(&method_name, &metrics, indeterminate);
    Ok(())
}

fn apply_model(
    model: &ArbitrationModel,
    scores: &[RecordingScores],
    decisions: &mut Vec<(String, String, Label)>,
    resolved: &mut Vec<Label>,
) -> Result<()> {
    for rec in scores {
        let label = arbitrate(model, rec)?;
        decisions.push((rec.recording_id.clone(), label.to_string(), rec.true_label));
        resolved.push(label);
    }
    Ok(())
}

fn print_metrics(method: &str, m: &Metrics, indeterminate: usize) {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "{method}: n={} accuracy={:.4} sensitivity={} specificity={} (tp={} tn={} fp={} fn={})",
        m.total(),
        m.accuracy,
        fmt(m.sensitivity),
        fmt(m.specificity),
        m.true_positives,
        m.true_negatives,
        m.false_positives,
        m.false_negatives
    );
    if indeterminate > 0 {
        println!("{indeterminate} indeterminate recordings resolved by the mean rule");
    }
}

/// `protocol`: run the full experiment grid and write results (and
/// optionally a summary).
pub fn protocol(settings: &Settings, out: &Path, summary_out: Option<&Path>) -> Result<()> {
    let rows = run_protocol(&settings.protocol, &settings.pipeline)?;
    atomic_write(out, &results_to_string(&rows))?;
    println!("{} result rows written to {}", rows.len(), out.display());
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        println!("{failed} cells failed; see the error column");
    }
    if let Some(path) = summary_out {
        let summary = summarize(&rows);
        atomic_write(path, &summary_to_string(&summary))?;
        println!("{} summary rows written to {}", summary.len(), path.display());
    }
    Ok(())
}

/// `sweep`: measure the label-noise rate of the configured synthetic
/// dataset at every window length, in a single generation pass.
pub fn sweep(settings: &Settings, out: &Path) -> Result<()> {
    let lengths = &settings.protocol.window_lengths_s;
    if lengths.is_empty() {
        return Err(Error::Config("no window lengths configured".into()));
    }
    let gcfg = &settings.pipeline.generator;
    let mut total_windows = vec![0u64; lengths.len()];
    let mut abnormal_windows = vec![0u64; lengths.len()];
    let mut event_free = vec![0u64; lengths.len()];
    let mut abnormal_recordings = 0u64;
    for entry in dataset_plan(gcfg)? {
        let recording = generate_planned(gcfg, &entry)?;
        if recording.label == Label::Abnormal {
            abnormal_recordings += 1;
        }
        for (i, &len) in lengths.iter().enumerate() {
            let wcfg = settings.pipeline.windowing_for(len);
            let plan = windarb_core::windowing::plan_windows(
                &recording.id,
                recording.n_samples(),
                recording.sample_rate_hz,
                &wcfg,
            )?;
            total_windows[i] += plan.count as u64;
            let (abn, free) = recording_noise_counts(&recording, &wcfg)?;
            abnormal_windows[i] += abn;
            event_free[i] += free;
        }
    }
    let mut text = String::from(
        "window_len_s,total_windows,abnormal_windows,event_free_abnormal_windows,label_noise_rate\n",
    );
    for (i, &len) in lengths.iter().enumerate() {
        let rate = if abnormal_windows[i] == 0 {
            0.0
        } else {
            event_free[i] as f64 / abnormal_windows[i] as f64
        };
        text.push_str(&format!(
            "{len},{},{},{},{rate}\n",
            total_windows[i], abnormal_windows[i], event_free[i]
        ));
    }
    atomic_write(out, &text)?;
    println!(
        "label-noise sweep over {} window lengths ({abnormal_recordings} abnormal recordings) written to {}",
        lengths.len(),
        out.display()
    );
    Ok(())
}
