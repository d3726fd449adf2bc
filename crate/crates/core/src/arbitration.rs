//! Second stage: fusing a recording's per-window scores into one decision.
//!
//! Three preprocessing encodings feed the learned arbiter: `raw` (the score
//! sequence zero-padded to a fixed length), `histogram` (a normalized
//! ten-bin histogram of the scores) and `hybrid` (their concatenation).
//! Non-learned baselines are the mean rule and a two-threshold rule that can
//! abstain. Probability ties always resolve to abnormal, favoring
//! sensitivity.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::first_stage::RecordingScores;
use crate::label::Label;
use crate::mlp::{self, MlpConfig, MlpModel, Sample, TrainConfig};

pub const DEFAULT_N_MAX: usize = 20;
pub const DEFAULT_N_BINS: usize = 10;

/// Input encoding for the learned arbitration model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArbitrationKind {
    Raw,
    Histogram,
    Hybrid,
}

impl ArbitrationKind {
    pub const ALL: [ArbitrationKind; 3] = [
        ArbitrationKind::Raw,
        ArbitrationKind::Histogram,
        ArbitrationKind::Hybrid,
    ];

    pub fn input_len(self, n_max: usize, n_bins: usize) -> usize {
        match self {
            ArbitrationKind::Raw => n_max,
            ArbitrationKind::Histogram => n_bins,
            ArbitrationKind::Hybrid => n_max + n_bins,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArbitrationKind::Raw => "raw",
            ArbitrationKind::Histogram => "histogram",
            ArbitrationKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for ArbitrationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArbitrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(ArbitrationKind::Raw),
            "histogram" => Ok(ArbitrationKind::Histogram),
            "hybrid" => Ok(ArbitrationKind::Hybrid),
            other => Err(Error::Config(format!(
                "unknown arbitration kind `{other}` (expected raw, histogram or hybrid)"
            ))),
        }
    }
}

/// One preprocessed arbitration input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrationInput {
    pub kind: ArbitrationKind,
    pub values: Vec<f64>,
    pub n_max: usize,
    pub n_bins: usize,
}

/// Scores in window order, zero-padded at the end to `n_max` entries.
/// More than `n_max` scores is an error: the windowing cap guarantees the
/// bound, so exceeding it signals a pipeline bug upstream.
pub fn preprocess_raw(scores: &RecordingScores, n_max: usize) -> Result<ArbitrationInput> {
    check_non_empty(scores)?;
    if scores.scores.len() > n_max {
        return Err(Error::InvalidInput(format!(
            "recording `{}` has {} scores, more than n_max = {n_max}",
            scores.recording_id,
            scores.scores.len()
        )));
    }
    let mut values = scores.scores.clone();
    values.resize(n_max, 0.0);
    Ok(ArbitrationInput {
        kind: ArbitrationKind::Raw,
        values,
        n_max,
        n_bins: 0,
    })
}

/// Normalized histogram of the scores over `n_bins` equal bins of `[0, 1]`.
/// Bin `i` covers `[i/n_bins, (i+1)/n_bins)`; the last bin is closed at 1.
pub fn preprocess_histogram(scores: &RecordingScores, n_bins: usize) -> Result<ArbitrationInput> {
    check_non_empty(scores)?;
    if n_bins == 0 {
        return Err(Error::Config("n_bins must be positive".into()));
    }
    let mut counts = vec![0usize; n_bins];
    for &s in &scores.scores {
        counts[bin_index(s, n_bins)] += 1;
    }
    let total = scores.scores.len() as f64;
    Ok(ArbitrationInput {
        kind: ArbitrationKind::Histogram,
        values: counts.iter().map(|&c| c as f64 / total).collect(),
        n_max: 0,
        n_bins,
    })
}

/// Largest bin whose left edge is at or below `s`, capped at the final bin
/// so a score of exactly 1.0 lands in it.
fn bin_index(s: f64, n_bins: usize) -> usize {
    (0..n_bins)
        .rev()
        .find(|&i| s >= i as f64 / n_bins as f64)
        .unwrap_or(0)
}

/// The raw vector followed by the histogram vector.
pub fn preprocess_hybrid(
    scores: &RecordingScores,
    n_max: usize,
    n_bins: usize,
) -> Result<ArbitrationInput> {
    let raw = preprocess_raw(scores, n_max)?;
    let hist = preprocess_histogram(scores, n_bins)?;
    let mut values = raw.values;
    values.extend_from_slice(&hist.values);
    Ok(ArbitrationInput {
        kind: ArbitrationKind::Hybrid,
        values,
        n_max,
        n_bins,
    })
}

/// Dispatches on `kind`.
pub fn preprocess(
    kind: ArbitrationKind,
    scores: &RecordingScores,
    n_max: usize,
    n_bins: usize,
) -> Result<ArbitrationInput> {
    match kind {
        ArbitrationKind::Raw => preprocess_raw(scores, n_max),
        ArbitrationKind::Histogram => preprocess_histogram(scores, n_bins),
        ArbitrationKind::Hybrid => preprocess_hybrid(scores, n_max, n_bins),
    }
}

fn check_non_empty(scores: &RecordingScores) -> Result<()> {
    if scores.scores.is_empty() {
        return Err(Error::InvalidInput(format!(
            "recording `{}` has no scores to arbitrate",
            scores.recording_id
        )));
    }
    Ok(())
}

/// Mean rule over the real scores only (padding never enters the mean):
/// abnormal iff the mean abnormality probability is at least 0.5.
pub fn mean_arbitrate(scores: &RecordingScores) -> Result<Label> {
    check_non_empty(scores)?;
    let mean = scores.scores.iter().sum::<f64>() / scores.scores.len() as f64;
    Ok(if mean >= 0.5 { Label::Abnormal } else { Label::Normal })
}

/// Decision thresholds for the clear-cut cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConfig {
    pub t_lower: f64,
    pub t_upper: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            t_lower: 0.1,
            t_upper: 0.9,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_lower", self.t_lower), ("t_upper", self.t_upper)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.t_lower > self.t_upper {
            return Err(Error::Config(format!(
                "t_lower {} exceeds t_upper {}",
                self.t_lower, self.t_upper
            )));
        }
        Ok(())
    }
}

/// Outcome of the two-threshold rule; recordings that are neither clearly
/// abnormal nor clearly normal are left undecided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdDecision {
    Normal,
    Abnormal,
    Indeterminate,
}

/// Abnormal if any window score exceeds `t_upper`; normal if every score is
/// below `t_lower`; indeterminate otherwise.
pub fn threshold_arbitrate(
    scores: &RecordingScores,
    tcfg: &ThresholdConfig,
) -> Result<ThresholdDecision> {
    check_non_empty(scores)?;
    tcfg.validate()?;
    if scores.scores.iter().any(|&p| p > tcfg.t_upper) {
        Ok(ThresholdDecision::Abnormal)
    } else if scores.scores.iter().all(|&p| p < tcfg.t_lower) {
        Ok(ThresholdDecision::Normal)
    } else {
        Ok(ThresholdDecision::Indeterminate)
    }
}

/// A trained arbitration model: the preprocessing recipe plus the MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrationModel {
    pub kind: ArbitrationKind,
    pub n_max: usize,
    pub n_bins: usize,
    pub mlp: MlpModel,
}

/// Trains an arbitration MLP on `(preprocessed scores, recording label)`
/// pairs. Unlike the first stage, supervision here is the authoritative
/// per-recording label.
pub fn train_arbitration(
    train_scores: &[RecordingScores],
    kind: ArbitrationKind,
    n_max: usize,
    n_bins: usize,
    mcfg: &MlpConfig,
    tcfg: &TrainConfig,
) -> Result<ArbitrationModel> {
    let expected = kind.input_len(n_max, n_bins);
    if mcfg.input_len != expected {
        return Err(Error::Config(format!(
            "{kind} arbitration needs input_len {expected}, model has {}",
            mcfg.input_len
        )));
    }
    if train_scores.is_empty() {
        return Err(Error::InvalidInput("no recordings to train arbitration on".into()));
    }
    let has = |l: Label| train_scores.iter().any(|r| r.true_label == l);
    if !has(Label::Normal) || !has(Label::Abnormal) {
        return Err(Error::InvalidInput(
            "arbitration training needs both recording classes".into(),
        ));
    }
    let samples: Vec<Sample> = train_scores
        .iter()
        .map(|r| {
            Ok(Sample::new(
                preprocess(kind, r, n_max, n_bins)?.values,
                r.true_label,
            ))
        })
        .collect::<Result<_>>()?;
    let mlp = mlp::train(mcfg, tcfg, &samples)?;
    Ok(ArbitrationModel {
        kind,
        n_max,
        n_bins,
        mlp,
    })
}

/// Applies a trained arbitration model to one recording's scores; the
/// argmax of the softmax output, with exact ties going to abnormal.
pub fn arbitrate(model: &ArbitrationModel, scores: &RecordingScores) -> Result<Label> {
    let input = preprocess(model.kind, scores, model.n_max, model.n_bins)?;
    model.mlp.predict(&input.values)
}

// --- text persistence: kind tag plus the embedded mlp block ----------------

impl ArbitrationModel {
    pub fn to_text(&self) -> String {
        format!(
            "arbitration {} {} {}\n{}",
            self.kind,
            self.n_max,
            self.n_bins,
            self.mlp.to_text()
        )
    }

    pub fn from_text(text: &str) -> Result<ArbitrationModel> {
        let bad = |msg: &str| Error::InvalidInput(format!("bad arbitration model text: {msg}"));
        let (header, rest) = text
            .split_once('\n')
            .ok_or_else(|| bad("missing header line"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "arbitration" {
            return Err(bad(&format!(
                "header `{header}` is not `arbitration <kind> <n_max> <n_bins>`"
            )));
        }
        let kind: ArbitrationKind = fields[1].parse()?;
        let n_max = fields[2]
            .parse()
            .map_err(|_| bad(&format!("bad n_max `{}`", fields[2])))?;
        let n_bins = fields[3]
            .parse()
            .map_err(|_| bad(&format!("bad n_bins `{}`", fields[3])))?;
        let mlp = MlpModel::from_text(rest)?;
        if mlp.config.input_len != kind.input_len(n_max, n_bins) {
            return Err(bad("mlp input length does not match the kind"));
        }
        Ok(ArbitrationModel {
            kind,
            n_max,
            n_bins,
            mlp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scores_of(values: &[f64]) -> RecordingScores {
        RecordingScores::new("test".into(), values.to_vec(), Label::Abnormal).unwrap()
    }

    #[test]
    fn raw_pads_sixteen_scores_to_twenty() {
        let values: Vec<f64> = (1..=16).map(|i| i as f64 / 20.0).collect();
        let input = preprocess_raw(&scores_of(&values), 20).unwrap();
        assert_eq!(input.values.len(), 20);
        assert_eq!(&input.values[..16], &values[..]);
        assert_eq!(&input.values[16..], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn raw_leaves_exactly_twenty_scores_unchanged() {
        let values: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let input = preprocess_raw(&scores_of(&values), 20).unwrap();
        assert_eq!(input.values, values);
    }

    #[test]
    fn raw_rejects_too_many_scores() {
        let values = vec![0.5; 21];
        assert!(matches!(
            preprocess_raw(&scores_of(&values), 20),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn histogram_matches_the_worked_example() {
        let input = preprocess_histogram(&scores_of(&[0.05, 0.15, 0.95]), 10).unwrap();
        let third = 1.0 / 3.0;
        let expected = vec![third, third, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, third];
        assert_eq!(input.values, expected);
    }

    #[test]
    fn histogram_boundary_scores_follow_the_bin_rule() {
        let input = preprocess_histogram(&scores_of(&[0.0, 0.0]), 10).unwrap();
        assert_eq!(input.values[0], 1.0);
        assert!(input.values[1..].iter().all(|&v| v == 0.0));

        // exactly 1.0 falls in the last (closed) bin
        let input = preprocess_histogram(&scores_of(&[1.0]), 10).unwrap();
        assert_eq!(input.values[9], 1.0);
    }

    /// Brute-force oracle for the bin rule: explicit comparison against both
    /// edges, last bin closed.
    fn oracle_bin(s: f64, n_bins: usize) -> usize {
        if s >= 1.0 {
            return n_bins - 1;
        }
        for i in 0..n_bins {
            let lo = i as f64 / n_bins as f64;
            let hi = (i + 1) as f64 / n_bins as f64;
            if s >= lo && s < hi {
                return i;
            }
        }
        unreachable!("score {s} not assigned");
    }

    #[test]
    fn bin_assignment_matches_the_oracle_on_a_dense_grid() {
        // includes the exact boundaries 0.0, 0.1, ..., 1.0
        for i in 0..=1000 {
            let s = i as f64 / 1000.0;
            assert_eq!(bin_index(s, 10), oracle_bin(s, 10), "score {s}");
        }
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            assert_eq!(bin_index(s, 10), oracle_bin(s, 10), "boundary {s}");
        }
    }

    #[test]
    fn hybrid_is_the_exact_concatenation_of_its_parts() {
        let values: Vec<f64> = (1..=16).map(|i| i as f64 / 17.0).collect();
        let scores = scores_of(&values);
        let hybrid = preprocess_hybrid(&scores, 20, 10).unwrap();
        assert_eq!(hybrid.values.len(), 30);
        let raw = preprocess_raw(&scores, 20).unwrap();
        let hist = preprocess_histogram(&scores, 10).unwrap();
        assert_eq!(&hybrid.values[..20], &raw.values[..]);
        assert_eq!(&hybrid.values[20..], &hist.values[..]);
    }

    #[test]
    fn hybrid_of_a_single_certain_score() {
        let hybrid = preprocess_hybrid(&scores_of(&[1.0]), 20, 10).unwrap();
        assert_eq!(hybrid.values[0], 1.0);
        assert!(hybrid.values[1..20].iter().all(|&v| v == 0.0));
        assert!(hybrid.values[20..29].iter().all(|&v| v == 0.0));
        assert_eq!(hybrid.values[29], 1.0);
    }

    #[test]
    fn mean_rule_examples() {
        assert_eq!(mean_arbitrate(&scores_of(&[0.9, 0.1, 0.2])).unwrap(), Label::Normal);
        assert_eq!(mean_arbitrate(&scores_of(&[1.0])).unwrap(), Label::Abnormal);
        // tie at exactly 0.5 resolves to abnormal
        assert_eq!(mean_arbitrate(&scores_of(&[0.5])).unwrap(), Label::Abnormal);
        assert_eq!(mean_arbitrate(&scores_of(&[0.25, 0.75])).unwrap(), Label::Abnormal);
    }

    #[test]
    fn mean_rule_matches_an_independent_oracle_on_random_lists() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..10_000 {
            let len = rng.random_range(1..=20);
            let mut values: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..=1.0)).collect();
            if trial % 10 == 0 {
                // force exact tie cases
                values = vec![0.5; len];
            }
            let scores = scores_of(&values);
            let oracle = {
                let mut sum = 0.0;
                for &v in &values {
                    sum += v;
                }
                if sum / len as f64 >= 0.5 {
                    Label::Abnormal
                } else {
                    Label::Normal
                }
            };
            assert_eq!(mean_arbitrate(&scores).unwrap(), oracle, "trial {trial}");
        }
    }

    #[test]
    fn threshold_rule_examples() {
        let tcfg = ThresholdConfig {
            t_lower: 0.1,
            t_upper: 0.9,
        };
        assert_eq!(
            threshold_arbitrate(&scores_of(&[0.95, 0.05]), &tcfg).unwrap(),
            ThresholdDecision::Abnormal
        );
        assert_eq!(
            threshold_arbitrate(&scores_of(&[0.05, 0.02]), &tcfg).unwrap(),
            ThresholdDecision::Normal
        );
        assert_eq!(
            threshold_arbitrate(&scores_of(&[0.5]), &tcfg).unwrap(),
            ThresholdDecision::Indeterminate
        );
    }

    #[test]
    fn threshold_validation_rejects_crossed_thresholds() {
        let tcfg = ThresholdConfig {
            t_lower: 0.9,
            t_upper: 0.1,
        };
        assert!(threshold_arbitrate(&scores_of(&[0.5]), &tcfg).is_err());
    }

    #[test]
    fn equal_thresholds_at_half_never_abstain_off_the_boundary() {
        let tcfg = ThresholdConfig {
            t_lower: 0.5,
            t_upper: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let len = rng.random_range(1..=20);
            let values: Vec<f64> = (0..len)
                .map(|_| {
                    let v: f64 = rng.random_range(0.0..=1.0);
                    if v == 0.5 {
                        0.4999
                    } else {
                        v
                    }
                })
                .collect();
            let decision = threshold_arbitrate(&scores_of(&values), &tcfg).unwrap();
            assert_ne!(decision, ThresholdDecision::Indeterminate, "values {values:?}");
        }
        // only an exact 0.5 can abstain
        assert_eq!(
            threshold_arbitrate(&scores_of(&[0.5]), &tcfg).unwrap(),
            ThresholdDecision::Indeterminate
        );
    }

    #[test]
    fn histogram_is_permutation_invariant_but_raw_is_not() {
        let a = scores_of(&[0.1, 0.5, 0.9]);
        let b = scores_of(&[0.9, 0.1, 0.5]);
        assert_eq!(
            preprocess_histogram(&a, 10).unwrap().values,
            preprocess_histogram(&b, 10).unwrap().values
        );
        assert_ne!(
            preprocess_raw(&a, 20).unwrap().values,
            preprocess_raw(&b, 20).unwrap().values
        );
    }

    #[test]
    fn arbitration_training_checks_input_len() {
        let train: Vec<RecordingScores> = vec![
            RecordingScores::new("a".into(), vec![0.9, 0.8], Label::Abnormal).unwrap(),
            RecordingScores::new("b".into(), vec![0.1, 0.2], Label::Normal).unwrap(),
        ];
        let mcfg = MlpConfig::new(9, 0, 10, Activation::Relu);
        let err = train_arbitration(
            &train,
            ArbitrationKind::Histogram,
            20,
            10,
            &mcfg,
            &TrainConfig::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn arbitration_training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let train: Vec<RecordingScores> = (0..30)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Normal } else { Label::Abnormal };
                let base = if label == Label::Abnormal { 0.6 } else { 0.3 };
                let values: Vec<f64> = (0..10)
                    .map(|_| (base + rng.random_range(-0.2..0.2f64)).clamp(0.0, 1.0))
                    .collect();
                RecordingScores::new(format!("rec-{i}"), values, label).unwrap()
            })
            .collect();
        let mcfg = MlpConfig::new(10, 1, 5, Activation::Relu);
        let tcfg = TrainConfig {
            epochs: 10,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train_arbitration(&train, ArbitrationKind::Histogram, 20, 10, &mcfg, &tcfg).unwrap();
        let b = train_arbitration(&train, ArbitrationKind::Histogram, 20, 10, &mcfg, &tcfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_model_ties_resolve_to_abnormal() {
        let model = ArbitrationModel {
            kind: ArbitrationKind::Histogram,
            n_max: 20,
            n_bins: 10,
            mlp: MlpModel::zeros(&MlpConfig::new(10, 0, 10, Activation::Relu)).unwrap(),
        };
        let label = arbitrate(&model, &scores_of(&[0.3, 0.8])).unwrap();
        assert_eq!(label, Label::Abnormal);
    }

    /// A hand-built linear model reproducing the mean rule: the abnormal
    /// logit is the mean of the raw slots, the normal logit is fixed at 0.5.
    /// On full-length score lists (padding empty) it must agree with
    /// `mean_arbitrate` everywhere, ties included.
    #[test]
    fn linear_raw_model_reproduces_the_mean_rule_at_full_length() {
        let n_max = 20;
        let mut mlp = MlpModel::zeros(&MlpConfig::new(n_max, 0, 10, Activation::Relu)).unwrap();
        for i in 0..n_max {
            mlp.layers[0].weights[n_max + i] = 1.0 / n_max as f64; // abnormal row
        }
        mlp.layers[0].bias[0] = 0.5; // normal logit
        let model = ArbitrationModel {
            kind: ArbitrationKind::Raw,
            n_max,
            n_bins: 10,
            mlp,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..2000 {
            let mut values: Vec<f64> = (0..n_max).map(|_| rng.random_range(0.0..=1.0)).collect();
            if trial % 7 == 0 {
                values = vec![0.5; n_max];
            }
            let scores = scores_of(&values);
            assert_eq!(
                arbitrate(&model, &scores).unwrap(),
                mean_arbitrate(&scores).unwrap(),
                "trial {trial}"
            );
        }
    }

    #[test]
    fn arbitrate_always_returns_a_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mcfg = MlpConfig::new(30, 1, 5, Activation::Gelu);
        let model = ArbitrationModel {
            kind: ArbitrationKind::Hybrid,
            n_max: 20,
            n_bins: 10,
            mlp: MlpModel::init(&mcfg, 9).unwrap(),
        };
        for _ in 0..200 {
            let len = rng.random_range(1..=20);
            let values: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..=1.0)).collect();
            let label = arbitrate(&model, &scores_of(&values)).unwrap();
            assert!(matches!(label, Label::Normal | Label::Abnormal));
        }
    }

    #[test]
    fn model_text_round_trip_is_exact() {
        let model = ArbitrationModel {
            kind: ArbitrationKind::Hybrid,
            n_max: 20,
            n_bins: 10,
            mlp: MlpModel::init(&MlpConfig::new(30, 2, 7, Activation::Elu), 21).unwrap(),
        };
        let text = model.to_text();
        let restored = ArbitrationModel::from_text(&text).unwrap();
        assert_eq!(model, restored);
        assert_eq!(restored.to_text(), text);
        // kind/shape mismatch is caught
        let tampered = text.replace("arbitration hybrid 20 10", "arbitration raw 20 10");
        assert!(ArbitrationModel::from_text(&tampered).is_err());
    }
}
