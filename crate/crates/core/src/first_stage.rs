//! First stage: per-window abnormality scoring.
//!
//! Each window is reduced to simple spectral/amplitude features (band powers
//! from a periodogram, optionally variance and peak amplitude, per channel)
//! and an [`crate::mlp`] model is trained on the windows' *inherited* labels,
//! including the wrong ones, which is the phenomenon under study. The
//! trained stage emits `p_abnormal` for every window of a recording.

use crate::error::{Error, Result};
use crate::label::Label;
use crate::mlp::{self, MlpConfig, MlpModel, Sample, TrainConfig};
use crate::spectrum::PowerSpectrum;
use crate::synth::{GeneratorConfig, Recording};
use crate::windowing::{segment, Window, WindowingConfig};

/// Which per-channel features to extract.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// `(lo_hz, hi_hz)` bands, each summed over the periodogram bins in
    /// `[lo, hi)`.
    pub bands_hz: Vec<(f64, f64)>,
    pub include_variance: bool,
    pub include_peak: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::for_generator(&GeneratorConfig::default())
    }
}

impl FeatureConfig {
    /// Bands matched to a generator: its background band, a band around the
    /// event frequency, and a broadband catch-all.
    pub fn for_generator(cfg: &GeneratorConfig) -> FeatureConfig {
        let half_width = 5.0_f64.min(cfg.sample_rate_hz / 2.0 - cfg.event_freq_hz);
        FeatureConfig {
            bands_hz: vec![
                (cfg.background.band_lo_hz, cfg.background.band_hi_hz),
                (cfg.event_freq_hz - half_width, cfg.event_freq_hz + half_width),
                (1.0, cfg.sample_rate_hz / 2.0 - 1.0),
            ],
            include_variance: true,
            include_peak: true,
        }
    }

    pub fn features_per_channel(&self) -> usize {
        self.bands_hz.len() + usize::from(self.include_variance) + usize::from(self.include_peak)
    }

    pub fn feature_len(&self, channels: usize) -> usize {
        channels * self.features_per_channel()
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if self.bands_hz.is_empty() && !self.include_variance && !self.include_peak {
            return Err(Error::Config("feature set is empty".into()));
        }
        let nyquist = sample_rate_hz / 2.0;
        for &(lo, hi) in &self.bands_hz {
            if !(lo >= 0.0 && lo < hi && hi <= nyquist) {
                return Err(Error::Config(format!(
                    "band [{lo}, {hi}] must satisfy 0 <= lo < hi <= {nyquist}"
                )));
            }
        }
        Ok(())
    }
}

/// Extracts the configured features from one window, concatenated
/// channel-major: all features of channel 0, then channel 1, and so on.
pub fn extract_features(window: &Window, fcfg: &FeatureConfig) -> Result<Vec<f64>> {
    fcfg.validate(window.sample_rate_hz)?;
    let mut out = Vec::with_capacity(fcfg.feature_len(window.samples.len()));
    for channel in &window.samples {
        if channel.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "window {} of `{}` contains non-finite samples",
                window.index, window.recording_id
            )));
        }
        if !fcfg.bands_hz.is_empty() {
            let spectrum = PowerSpectrum::compute(channel, window.sample_rate_hz)?;
            for &(lo, hi) in &fcfg.bands_hz {
                out.push(spectrum.band_power(lo, hi));
            }
        }
        if fcfg.include_variance {
            let mean = channel.iter().sum::<f64>() / channel.len() as f64;
            let var = channel.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / channel.len() as f64;
            out.push(var);
        }
        if fcfg.include_peak {
            out.push(channel.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())));
        }
    }
    Ok(out)
}

/// Per-feature standardization fitted on the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<FeatureNormalizer> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot fit normalizer on no rows".into()))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape("feature rows have inconsistent lengths".into()));
            }
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; dim];
        for row in rows {
            for ((s, x), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            // constant features pass through unscaled
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(FeatureNormalizer { mean, std })
    }

    pub fn apply(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "feature vector has {} values, normalizer expects {}",
                features.len(),
                self.mean.len()
            )));
        }
        Ok(features
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}

/// Ordered per-window abnormality probabilities for one recording, plus the
/// recording's authoritative label.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingScores {
    pub recording_id: String,
    /// `scores[i]` is `p_abnormal` for window `i`; every value lies in
    /// `[0, 1]`.
    pub scores: Vec<f64>,
    pub true_label: Label,
}

impl RecordingScores {
    pub fn new(recording_id: String, scores: Vec<f64>, true_label: Label) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidInput(format!(
                "recording `{recording_id}` has no window scores"
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidInput(format!(
                "recording `{recording_id}` has score {bad} outside [0, 1]"
            )));
        }
        Ok(RecordingScores {
            recording_id,
            scores,
            true_label,
        })
    }
}

/// A trained first stage: feature definition, train-split normalizer and the
/// scoring model, everything needed to score unseen recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStage {
    pub feature_config: FeatureConfig,
    pub normalizer: FeatureNormalizer,
    pub model: MlpModel,
}

impl FirstStage {
    /// `p_abnormal` for each already-extracted (raw, unnormalized) feature
    /// vector.
    pub fn score_features(&self, feature_rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        feature_rows
            .iter()
            .map(|row| {
                let probs = self.model.predict_proba(&self.normalizer.apply(row)?)?;
                Ok(probs[Label::Abnormal.class_index()])
            })
            .collect()
    }
}

/// Trains the first stage on windows labelled by inheritance. Features are
/// standardized with statistics of these training windows only.
pub fn train_first_stage(
    windows: &[Window],
    fcfg: &FeatureConfig,
    mcfg: &MlpConfig,
    tcfg: &TrainConfig,
) -> Result<FirstStage> {
    let rows: Vec<Vec<f64>> = windows
        .iter()
        .map(|w| extract_features(w, fcfg))
        .collect::<Result<_>>()?;
    let labels: Vec<Label> = windows.iter().map(|w| w.inherited_label).collect();
    train_first_stage_on_features(rows, labels, fcfg, mcfg, tcfg)
}

/// Feature-level entry point used by the streaming protocol runner.
pub fn train_first_stage_on_features(
    feature_rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
    fcfg: &FeatureConfig,
    mcfg: &MlpConfig,
    tcfg: &TrainConfig,
) -> Result<FirstStage> {
    if feature_rows.is_empty() {
        return Err(Error::InvalidInput("no training windows".into()));
    }
    if feature_rows.len() != labels.len() {
        return Err(Error::Shape("feature rows and labels differ in length".into()));
    }
    let has = |l: Label| labels.contains(&l);
    if !has(Label::Normal) || !has(Label::Abnormal) {
        return Err(Error::InvalidInput(
            "training windows must include both classes".into(),
        ));
    }
    if mcfg.input_len != feature_rows[0].len() {
        return Err(Error::Config(format!(
            "model input_len {} does not match feature length {}",
            mcfg.input_len,
            feature_rows[0].len()
        )));
    }
    let normalizer = FeatureNormalizer::fit(&feature_rows)?;
    let samples: Vec<Sample> = feature_rows
        .iter()
        .zip(&labels)
        .map(|(row, &label)| Ok(Sample::new(normalizer.apply(row)?, label)))
        .collect::<Result<_>>()?;
    let model = mlp::train(mcfg, tcfg, &samples)?;
    Ok(FirstStage {
        feature_config: fcfg.clone(),
        normalizer,
        model,
    })
}

/// Scores every window of a recording in window order.
pub fn score_recording(
    stage: &FirstStage,
    recording: &Recording,
    wcfg: &WindowingConfig,
) -> Result<RecordingScores> {
    let windows = segment(recording, wcfg)?;
    let rows: Vec<Vec<f64>> = windows
        .iter()
        .map(|w| extract_features(w, &stage.feature_config))
        .collect::<Result<_>>()?;
    let scores = stage.score_features(&rows)?;
    RecordingScores::new(recording.id.clone(), scores, recording.label)
}

// --- text persistence -------------------------------------------------------
//
// Key/value header lines, then the embedded mlp text block:
//
//   firststage
//   bands 8-12 20-30 1-49
//   include_variance true
//   include_peak true
//   mean <17-digit values...>
//   std <17-digit values...>
//   mlp ...
//   <layer lines>

impl FirstStage {
    pub fn to_text(&self) -> String {
        let mut out = String::from("firststage\n");
        out.push_str("bands");
        for (lo, hi) in &self.feature_config.bands_hz {
            out.push_str(&format!(" {lo}-{hi}"));
        }
        out.push('\n');
        out.push_str(&format!(
            "include_variance {}\n",
            self.feature_config.include_variance
        ));
        out.push_str(&format!("include_peak {}\n", self.feature_config.include_peak));
        for (name, values) in [("mean", &self.normalizer.mean), ("std", &self.normalizer.std)] {
            out.push_str(name);
            for v in values {
                out.push_str(&format!(" {v:.16e}"));
            }
            out.push('\n');
        }
        out.push_str(&self.model.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<FirstStage> {
        let mut lines = text.lines();
        let bad = |msg: &str| Error::InvalidInput(format!("bad first-stage model text: {msg}"));
        if lines.next() != Some("firststage") {
            return Err(bad("missing `firststage` header"));
        }
        let mut bands = None;
        let mut include_variance = None;
        let mut include_peak = None;
        let mut mean = None;
        let mut std = None;
        let mut mlp_text = String::new();
        for line in lines {
            let mut fields = line.split_whitespace();
            let Some(key) = fields.next() else { continue };
            match key {
                "bands" => {
                    let parsed: Vec<(f64, f64)> = fields
                        .map(|tok| {
                            let (lo, hi) = tok
                                .split_once('-')
                                .ok_or_else(|| bad(&format!("band `{tok}` is not lo-hi")))?;
                            Ok((
                                lo.parse().map_err(|_| bad(&format!("bad band edge `{lo}`")))?,
                                hi.parse().map_err(|_| bad(&format!("bad band edge `{hi}`")))?,
                            ))
                        })
                        .collect::<Result<_>>()?;
                    bands = Some(parsed);
                }
                "include_variance" | "include_peak" => {
                    let value = match fields.next() {
                        Some("true") => true,
                        Some("false") => false,
                        other => return Err(bad(&format!("bad boolean `{other:?}` for {key}"))),
                    };
                    if key == "include_variance" {
                        include_variance = Some(value);
                    } else {
                        include_peak = Some(value);
                    }
                }
                "mean" | "std" => {
                    let values: Vec<f64> = fields
                        .map(|s| s.parse().map_err(|_| bad(&format!("bad number `{s}` in {key}"))))
                        .collect::<Result<_>>()?;
                    if key == "mean" {
                        mean = Some(values);
                    } else {
                        std = Some(values);
                    }
                }
                "mlp" => {
                    mlp_text.push_str(line);
                    mlp_text.push('\n');
                }
                _ if !mlp_text.is_empty() => {
                    mlp_text.push_str(line);
                    mlp_text.push('\n');
                }
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        let normalizer = FeatureNormalizer {
            mean: mean.ok_or_else(|| bad("missing mean"))?,
            std: std.ok_or_else(|| bad("missing std"))?,
        };
        if normalizer.mean.len() != normalizer.std.len() {
            return Err(bad("mean and std lengths differ"));
        }
        let model = MlpModel::from_text(&mlp_text)?;
        if model.config.input_len != normalizer.mean.len() {
            return Err(bad("normalizer length does not match model input"));
        }
        Ok(FirstStage {
            feature_config: FeatureConfig {
                bands_hz: bands.ok_or_else(|| bad("missing bands"))?,
                include_variance: include_variance.ok_or_else(|| bad("missing include_variance"))?,
                include_peak: include_peak.ok_or_else(|| bad("missing include_peak"))?,
            },
            normalizer,
            model,
        })
    }
}
