//! Confusion metrics and the seeded experiment protocols.
//!
//! [`run_protocol`] executes the full grid: for every window length it
//! synthesizes the dataset once (streaming, one recording at a time), trains
//! a first stage per seed, then evaluates every arbitration method, training
//! a fresh arbitration model per `(architecture, seed)` for the learned kinds.
//! The dataset depends only on the generator seed, so cells differ solely in
//! model initialization and shuffling, and reruns are byte-identical.

use std::fmt;
use std::str::FromStr;

use crate::arbitration::{
    arbitrate, mean_arbitrate, threshold_arbitrate, train_arbitration, ArbitrationKind,
    ThresholdConfig, ThresholdDecision,
};
use crate::error::{Error, Result};
use crate::first_stage::{
    extract_features, train_first_stage_on_features, FeatureConfig, FirstStage, RecordingScores,
};
use crate::label::Label;
use crate::mlp::{Activation, MlpConfig, TrainConfig};
use crate::synth::{dataset_plan, generate_planned, GeneratorConfig, Split};
use crate::windowing::{segment, WindowingConfig};

/// Binary confusion counts and the derived ratios. Abnormal is the positive
/// class. Ratios whose denominator is zero are reported as `None`, never as
/// zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub true_positives: u64,
    pub true_negatives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Counts prediction/truth agreement; errors on empty or mismatched inputs.
pub fn compute_metrics(predictions: &[Label], truth: &[Label]) -> Result<Metrics> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions against {} truths",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("cannot compute metrics on nothing".into()));
    }
    let mut tp = 0u64;
    let mut tn = 0u64;
    let mut fp = 0u64;
    let mut fng = 0u64;
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p, t) {
            (Label::Abnormal, Label::Abnormal) => tp += 1,
            (Label::Normal, Label::Normal) => tn += 1,
            (Label::Abnormal, Label::Normal) => fp += 1,
            (Label::Normal, Label::Abnormal) => fng += 1,
        }
    }
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    Ok(Metrics {
        true_positives: tp,
        true_negatives: tn,
        false_positives: fp,
        false_negatives: fng,
        accuracy: (tp + tn) as f64 / predictions.len() as f64,
        sensitivity: ratio(tp, tp + fng),
        specificity: ratio(tn, tn + fp),
    })
}

impl Metrics {
    pub fn total(&self) -> u64 {
        self.true_positives + self.true_negatives + self.false_positives + self.false_negatives
    }
}

/// Arbitration method evaluated by the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArbitrationMethod {
    /// First stage only: per-window predictions against inherited labels.
    None,
    Mean,
    /// Two-threshold rule; indeterminate recordings fall back to the mean
    /// rule so the protocol always gets a binary decision.
    Threshold,
    Mlp(ArbitrationKind),
}

impl ArbitrationMethod {
    pub const ALL: [ArbitrationMethod; 6] = [
        ArbitrationMethod::None,
        ArbitrationMethod::Mean,
        ArbitrationMethod::Threshold,
        ArbitrationMethod::Mlp(ArbitrationKind::Raw),
        ArbitrationMethod::Mlp(ArbitrationKind::Histogram),
        ArbitrationMethod::Mlp(ArbitrationKind::Hybrid),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArbitrationMethod::None => "none",
            ArbitrationMethod::Mean => "mean",
            ArbitrationMethod::Threshold => "threshold",
            ArbitrationMethod::Mlp(kind) => kind.as_str(),
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, ArbitrationMethod::Mlp(_))
    }
}

impl fmt::Display for ArbitrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArbitrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ArbitrationMethod::None),
            "mean" => Ok(ArbitrationMethod::Mean),
            "threshold" => Ok(ArbitrationMethod::Threshold),
            other => Ok(ArbitrationMethod::Mlp(other.parse().map_err(|_| {
                Error::Config(format!(
                    "unknown arbitration method `{other}` (expected none, mean, threshold, raw, histogram or hybrid)"
                ))
            })?)),
        }
    }
}

/// An MLP shape without the data-dependent input length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MlpArch {
    pub hidden_depth: usize,
    pub hidden_len: usize,
    pub activation: Activation,
}

impl MlpArch {
    pub fn new(hidden_depth: usize, hidden_len: usize, activation: Activation) -> Self {
        MlpArch {
            hidden_depth,
            hidden_len,
            activation,
        }
    }

    pub fn to_config(self, input_len: usize) -> MlpConfig {
        MlpConfig::new(input_len, self.hidden_depth, self.hidden_len, self.activation)
    }

    pub fn descriptor(self) -> String {
        if self.hidden_depth == 0 {
            format!("d0-{}", self.activation)
        } else {
            format!("d{}-h{}-{}", self.hidden_depth, self.hidden_len, self.activation)
        }
    }
}

impl fmt::Display for MlpArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

/// The experiment grid: seed lists, window lengths, methods and the
/// arbitration architecture grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub first_stage_seeds: Vec<u64>,
    pub arbitration_seeds: Vec<u64>,
    pub window_lengths_s: Vec<f64>,
    pub methods: Vec<ArbitrationMethod>,
    pub mlp_grid: Vec<MlpArch>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            first_stage_seeds: vec![1, 2, 3, 4, 5],
            arbitration_seeds: vec![1, 2, 3, 4, 5],
            window_lengths_s: vec![60.0, 180.0, 300.0, 400.0, 600.0],
            methods: ArbitrationMethod::ALL.to_vec(),
            mlp_grid: vec![MlpArch::new(0, 10, Activation::Relu)],
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("first_stage_seeds", self.first_stage_seeds.is_empty()),
            ("arbitration_seeds", self.arbitration_seeds.is_empty()),
            ("window_lengths_s", self.window_lengths_s.is_empty()),
            ("methods", self.methods.is_empty()),
            ("mlp_grid", self.mlp_grid.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("protocol {name} must not be empty")));
            }
        }
        if self.window_lengths_s.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config("window lengths must be positive".into()));
        }
        Ok(())
    }

    /// Number of result rows one full run will emit.
    pub fn expected_rows(&self) -> usize {
        let per_seed: usize = self
            .methods
            .iter()
            .map(|m| {
                if m.is_learned() {
                    self.mlp_grid.len() * self.arbitration_seeds.len()
                } else {
                    1
                }
            })
            .sum();
        self.window_lengths_s.len() * self.first_stage_seeds.len() * per_seed
    }
}

/// Everything the protocol needs besides the grid itself: dataset recipe,
/// windowing base, features, model shapes and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub generator: GeneratorConfig,
    /// Segmentation parameters shared by every window length in the sweep.
    pub start_offset_s: f64,
    pub max_span_s: f64,
    pub max_windows: usize,
    pub features: FeatureConfig,
    pub first_stage_arch: MlpArch,
    pub first_stage_train: TrainConfig,
    pub arbitration_train: TrainConfig,
    pub threshold: ThresholdConfig,
    pub n_max: usize,
    pub n_bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let generator = GeneratorConfig::default();
        let features = FeatureConfig::for_generator(&generator);
        PipelineConfig {
            generator,
            start_offset_s: 60.0,
            max_span_s: 1200.0,
            max_windows: 20,
            features,
            first_stage_arch: MlpArch::new(1, 16, Activation::Relu),
            first_stage_train: TrainConfig::default(),
            arbitration_train: TrainConfig {
                learning_rate: 0.1,
                epochs: 2500,
                ..TrainConfig::default()
            },
            threshold: ThresholdConfig::default(),
            n_max: 20,
            n_bins: 10,
        }
    }
}

impl PipelineConfig {
    pub fn windowing_for(&self, window_len_s: f64) -> WindowingConfig {
        WindowingConfig {
            window_len_s,
            start_offset_s: self.start_offset_s,
            max_span_s: self.max_span_s,
            max_windows: self.max_windows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.features.validate(self.generator.sample_rate_hz)?;
        self.first_stage_train.validate()?;
        self.arbitration_train.validate()?;
        self.threshold.validate()?;
        if self.n_max == 0 || self.n_bins == 0 {
            return Err(Error::Config("n_max and n_bins must be positive".into()));
        }
        if self.n_max < self.max_windows {
            return Err(Error::Config(format!(
                "n_max {} cannot hold max_windows {}",
                self.n_max, self.max_windows
            )));
        }
        Ok(())
    }
}

/// Evaluation granularity of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalLevel {
    Window,
    Recording,
}

impl EvalLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalLevel::Window => "window",
            EvalLevel::Recording => "recording",
        }
    }
}

impl fmt::Display for EvalLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One protocol cell result. A failed cell keeps its key columns and carries
/// the error message instead of metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub window_len_s: f64,
    pub method: ArbitrationMethod,
    pub arch: Option<MlpArch>,
    pub first_stage_seed: u64,
    pub arbitration_seed: Option<u64>,
    pub level: EvalLevel,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// Feature rows for one recording, in window order.
struct RecordingFeatures {
    id: String,
    true_label: Label,
    rows: Vec<Vec<f64>>,
}

/// Featurized dataset for one window length; independent of every model
/// seed, so it is built once and shared across the seed grid.
struct FeaturizedSplits {
    train_rows: Vec<Vec<f64>>,
    train_labels: Vec<Label>,
    train_recordings: Vec<RecordingFeatures>,
    test_recordings: Vec<RecordingFeatures>,
}

fn featurize_dataset(pipe: &PipelineConfig, wcfg: &WindowingConfig) -> Result<FeaturizedSplits> {
    let mut data = FeaturizedSplits {
        train_rows: Vec::new(),
        train_labels: Vec::new(),
        train_recordings: Vec::new(),
        test_recordings: Vec::new(),
    };
    // one recording in memory at a time
    for entry in dataset_plan(&pipe.generator)? {
        let recording = generate_planned(&pipe.generator, &entry)?;
        let windows = segment(&recording, wcfg)?;
        let rows: Vec<Vec<f64>> = windows
            .iter()
            .map(|w| extract_features(w, &pipe.features))
            .collect::<Result<_>>()?;
        let rec = RecordingFeatures {
            id: recording.id,
            true_label: recording.label,
            rows,
        };
        match entry.split {
            Split::Train => {
                data.train_rows.extend(rec.rows.iter().cloned());
                data.train_labels
                    .extend(std::iter::repeat_n(rec.true_label, rec.rows.len()));
                data.train_recordings.push(rec);
            }
            Split::Test => data.test_recordings.push(rec),
        }
    }
    Ok(data)
}

fn score_split(stage: &FirstStage, recordings: &[RecordingFeatures]) -> Result<Vec<RecordingScores>> {
    recordings
        .iter()
        .map(|rec| {
            RecordingScores::new(rec.id.clone(), stage.score_features(&rec.rows)?, rec.true_label)
        })
        .collect()
}

/// Per-window predictions of the first stage against inherited labels.
fn window_level_metrics(scores: &[RecordingScores]) -> Result<Metrics> {
    let mut predictions = Vec::new();
    let mut truth = Vec::new();
    for rec in scores {
        for &p in &rec.scores {
            predictions.push(if p >= 0.5 { Label::Abnormal } else { Label::Normal });
            truth.push(rec.true_label);
        }
    }
    compute_metrics(&predictions, &truth)
}

fn recording_level_metrics<F>(scores: &[RecordingScores], mut decide: F) -> Result<Metrics>
where
    F: FnMut(&RecordingScores) -> Result<Label>,
{
    let mut predictions = Vec::with_capacity(scores.len());
    let mut truth = Vec::with_capacity(scores.len());
    for rec in scores {
        predictions.push(decide(rec)?);
        truth.push(rec.true_label);
    }
    compute_metrics(&predictions, &truth)
}

/// The cell coordinates that vary below one `(window length, first-stage
/// seed)` pair.
#[derive(Debug, Clone, Copy)]
struct CellKey {
    method: ArbitrationMethod,
    arch: Option<MlpArch>,
    arbitration_seed: Option<u64>,
}

fn cells_for(pcfg: &ProtocolConfig) -> Vec<CellKey> {
    let mut cells = Vec::new();
    for &method in &pcfg.methods {
        if method.is_learned() {
            for &arch in &pcfg.mlp_grid {
                for &seed in &pcfg.arbitration_seeds {
                    cells.push(CellKey {
                        method,
                        arch: Some(arch),
                        arbitration_seed: Some(seed),
                    });
                }
            }
        } else {
            cells.push(CellKey {
                method,
                arch: None,
                arbitration_seed: None,
            });
        }
    }
    cells
}

fn row_for(window_len_s: f64, fs_seed: u64, cell: CellKey, outcome: Result<Metrics>) -> ResultRow {
    let level = if cell.method == ArbitrationMethod::None {
        EvalLevel::Window
    } else {
        EvalLevel::Recording
    };
    let (metrics, error) = match outcome {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ResultRow {
        window_len_s,
        method: cell.method,
        arch: cell.arch,
        first_stage_seed: fs_seed,
        arbitration_seed: cell.arbitration_seed,
        level,
        metrics,
        error,
    }
}

/// Runs the whole grid. Configuration errors fail the call; errors inside a
/// cell (or inside the shared dataset/first-stage work a cell depends on)
/// are recorded on the affected rows, so every configured cell appears in
/// the output exactly once.
pub fn run_protocol(pcfg: &ProtocolConfig, pipe: &PipelineConfig) -> Result<Vec<ResultRow>> {
    pcfg.validate()?;
    pipe.validate()?;
    let cells = cells_for(pcfg);
    let mut rows = Vec::with_capacity(pcfg.expected_rows());

    for &window_len in &pcfg.window_lengths_s {
        let wcfg = pipe.windowing_for(window_len);
        let data = match featurize_dataset(pipe, &wcfg) {
            Ok(d) => d,
            Err(e) => {
                let msg = e.to_string();
                for &fs_seed in &pcfg.first_stage_seeds {
                    for &cell in &cells {
                        rows.push(row_for(
                            window_len,
                            fs_seed,
                            cell,
                            Err(Error::InvalidInput(msg.clone())),
                        ));
                    }
                }
                continue;
            }
        };

        for &fs_seed in &pcfg.first_stage_seeds {
            let input_len = data.train_rows.first().map_or(0, Vec::len);
            let mcfg = pipe.first_stage_arch.to_config(input_len);
            let stage_result = train_first_stage_on_features(
                data.train_rows.clone(),
                data.train_labels.clone(),
                &pipe.features,
                &mcfg,
                &pipe.first_stage_train.with_seed(fs_seed),
            )
            .and_then(|stage| {
                let train_scores = score_split(&stage, &data.train_recordings)?;
                let test_scores = score_split(&stage, &data.test_recordings)?;
                Ok((train_scores, test_scores))
            });

            let (train_scores, test_scores) = match stage_result {
                Ok(pair) => pair,
                Err(e) => {
                    let msg = e.to_string();
                    for &cell in &cells {
                        rows.push(row_for(
                            window_len,
                            fs_seed,
                            cell,
                            Err(Error::InvalidInput(msg.clone())),
                        ));
                    }
                    continue;
                }
            };

            for &cell in &cells {
                let outcome = match cell.method {
                    ArbitrationMethod::None => window_level_metrics(&test_scores),
                    ArbitrationMethod::Mean => {
                        recording_level_metrics(&test_scores, mean_arbitrate)
                    }
                    ArbitrationMethod::Threshold => {
                        recording_level_metrics(&test_scores, |rec| {
                            match threshold_arbitrate(rec, &pipe.threshold)? {
                                ThresholdDecision::Normal => Ok(Label::Normal),
                                ThresholdDecision::Abnormal => Ok(Label::Abnormal),
                                ThresholdDecision::Indeterminate => mean_arbitrate(rec),
                            }
                        })
                    }
                    ArbitrationMethod::Mlp(kind) => {
                        let arch = cell.arch.expect("learned cells carry an arch");
                        let seed = cell.arbitration_seed.expect("learned cells carry a seed");
                        let mcfg = arch.to_config(kind.input_len(pipe.n_max, pipe.n_bins));
                        train_arbitration(
                            &train_scores,
                            kind,
                            pipe.n_max,
                            pipe.n_bins,
                            &mcfg,
                            &pipe.arbitration_train.with_seed(seed),
                        )
                        .and_then(|model| {
                            recording_level_metrics(&test_scores, |rec| arbitrate(&model, rec))
                        })
                    }
                };
                rows.push(row_for(window_len, fs_seed, cell, outcome));
            }
        }
    }

    // declared key order: window length, method, architecture, seeds
    let position = |method: ArbitrationMethod| {
        pcfg.methods.iter().position(|&m| m == method).unwrap_or(usize::MAX)
    };
    let arch_position = |arch: Option<MlpArch>| match arch {
        None => usize::MAX,
        Some(a) => pcfg.mlp_grid.iter().position(|&g| g == a).unwrap_or(usize::MAX),
    };
    rows.sort_by_key(|r| {
        (
            pcfg.window_lengths_s
                .iter()
                .position(|&l| l == r.window_len_s)
                .unwrap_or(usize::MAX),
            position(r.method),
            arch_position(r.arch),
            pcfg.first_stage_seeds
                .iter()
                .position(|&s| s == r.first_stage_seed)
                .unwrap_or(usize::MAX),
            r.arbitration_seed.map_or(usize::MAX, |s| {
                pcfg.arbitration_seeds.iter().position(|&x| x == s).unwrap_or(usize::MAX)
            }),
        )
    });
    Ok(rows)
}

/// Mean and spread of one metric across a summary cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl StatSummary {
    fn from_values(values: &[f64]) -> Option<StatSummary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(StatSummary {
            mean,
            std,
            min,
            max,
            n,
        })
    }
}

/// Aggregate of all successful rows in one `(window length, method,
/// architecture)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub window_len_s: f64,
    pub method: ArbitrationMethod,
    pub arch: Option<MlpArch>,
    pub level: EvalLevel,
    pub rows: usize,
    pub failed: usize,
    pub accuracy: Option<StatSummary>,
    pub sensitivity: Option<StatSummary>,
    pub specificity: Option<StatSummary>,
}

/// Groups rows by `(window length, method, arch)` in first-appearance order
/// and reports mean/std/min/max per metric.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(f64, ArbitrationMethod, Option<MlpArch>)> = Vec::new();
    for row in rows {
        let key = (row.window_len_s, row.method, row.arch);
        if !order.iter().any(|k| k.0.to_bits() == key.0.to_bits() && k.1 == key.1 && k.2 == key.2) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(len, method, arch)| {
            let cell: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.window_len_s.to_bits() == len.to_bits() && r.method == method && r.arch == arch)
                .collect();
            let metric = |pick: fn(&Metrics) -> Option<f64>| {
                let values: Vec<f64> = cell
                    .iter()
                    .filter_map(|r| r.metrics.as_ref().and_then(pick))
                    .collect();
                StatSummary::from_values(&values)
            };
            SummaryRow {
                window_len_s: len,
                method,
                arch,
                level: if method == ArbitrationMethod::None {
                    EvalLevel::Window
                } else {
                    EvalLevel::Recording
                },
                rows: cell.len(),
                failed: cell.iter().filter(|r| r.error.is_some()).count(),
                accuracy: metric(|m| Some(m.accuracy)),
                sensitivity: metric(|m| m.sensitivity),
                specificity: metric(|m| m.specificity),
            }
        })
        .collect()
}
