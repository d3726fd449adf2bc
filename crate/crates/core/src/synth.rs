//! Synthetic multichannel recordings with temporally isolated transient
//! events.
//!
//! Normal recordings are stationary colored noise; abnormal recordings carry
//! one or more short oscillatory bursts at a frequency separated from the
//! background band. Because the event annotations are exact, the label noise
//! introduced by inheriting recording labels at window level can be measured
//! instead of estimated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::label::Label;

const TAU: f64 = std::f64::consts::TAU;
/// Fraction of an event's span spent ramping up plus ramping down.
const EVENT_TAPER_FRACTION: f64 = 0.2;
/// Complex oscillators are renormalized this often to stop drift.
const OSCILLATOR_RENORM_INTERVAL: usize = 1024;

/// Stationary background process: a sum of band-limited sinusoids with
/// random frequencies and phases, plus white Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSpectrum {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub n_sinusoids: usize,
    /// Aggregate sinusoid amplitude; each component gets
    /// `sinusoid_amplitude / sqrt(n_sinusoids)` so total band power does not
    /// depend on the component count.
    pub sinusoid_amplitude: f64,
    pub white_noise_std: f64,
}

impl Default for BackgroundSpectrum {
    fn default() -> Self {
        BackgroundSpectrum {
            band_lo_hz: 8.0,
            band_hi_hz: 12.0,
            n_sinusoids: 8,
            sinusoid_amplitude: 1.0,
            white_noise_std: 0.5,
        }
    }
}

impl BackgroundSpectrum {
    /// Root-mean-square amplitude of the background process.
    pub fn rms(&self) -> f64 {
        (self.sinusoid_amplitude * self.sinusoid_amplitude / 2.0
            + self.white_noise_std * self.white_noise_std)
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub sample_rate_hz: f64,
    pub channels: usize,
    pub duration_s: f64,
    pub n_normal_train: usize,
    pub n_abnormal_train: usize,
    pub n_normal_test: usize,
    pub n_abnormal_test: usize,
    /// Mean of the per-recording event count distribution (Poisson,
    /// resampled until >= 1 for abnormal recordings).
    pub event_rate_per_recording: f64,
    pub event_duration_s: f64,
    /// Amplitude ratio of the event burst to the background RMS.
    pub event_snr: f64,
    /// Burst oscillation frequency; kept away from the background band so
    /// events are spectrally identifiable.
    pub event_freq_hz: f64,
    pub background: BackgroundSpectrum,
    pub rng_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            sample_rate_hz: 100.0,
            channels: 4,
            duration_s: 1320.0,
            n_normal_train: 200,
            n_abnormal_train: 200,
            n_normal_test: 50,
            n_abnormal_test: 50,
            event_rate_per_recording: 2.0,
            event_duration_s: 5.0,
            event_snr: 3.0,
            event_freq_hz: 25.0,
            background: BackgroundSpectrum::default(),
            rng_seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.sample_rate_hz, "sample_rate_hz")?;
        positive(self.duration_s, "duration_s")?;
        positive(self.event_rate_per_recording, "event_rate_per_recording")?;
        positive(self.event_duration_s, "event_duration_s")?;
        positive(self.event_snr, "event_snr")?;
        positive(self.event_freq_hz, "event_freq_hz")?;
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        if self.event_duration_s > self.duration_s {
            return Err(Error::Config(format!(
                "event_duration_s {} exceeds duration_s {}",
                self.event_duration_s, self.duration_s
            )));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if self.event_freq_hz >= nyquist {
            return Err(Error::Config(format!(
                "event_freq_hz {} must lie below the Nyquist frequency {nyquist}",
                self.event_freq_hz
            )));
        }
        let bg = &self.background;
        if !(bg.band_lo_hz > 0.0 && bg.band_lo_hz < bg.band_hi_hz && bg.band_hi_hz < nyquist) {
            return Err(Error::Config(format!(
                "background band [{}, {}] must satisfy 0 < lo < hi < {nyquist}",
                bg.band_lo_hz, bg.band_hi_hz
            )));
        }
        if bg.n_sinusoids == 0 {
            return Err(Error::Config("background needs at least one sinusoid".into()));
        }
        if !(bg.sinusoid_amplitude >= 0.0 && bg.sinusoid_amplitude.is_finite())
            || !(bg.white_noise_std >= 0.0 && bg.white_noise_std.is_finite())
        {
            return Err(Error::Config("background amplitudes must be non-negative".into()));
        }
        if bg.rms() == 0.0 {
            return Err(Error::Config(
                "background must have non-zero power (events are scaled to it)".into(),
            ));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }
}

/// Kind tag for an annotated event; a single kind is enough here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Burst,
}

/// Ground-truth span of one transient event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAnnotation {
    pub onset_s: f64,
    pub duration_s: f64,
    pub kind: EventKind,
}

impl EventAnnotation {
    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }

    /// True when the event shares a positive-length span with
    /// `[start_s, end_s)`.
    pub fn overlaps(&self, start_s: f64, end_s: f64) -> bool {
        self.onset_s < end_s && self.end_s() > start_s
    }
}

/// A full multichannel recording with its authoritative label.
///
/// `events` is `Some` for synthetic data (empty for normal recordings) and
/// `None` when annotations are unavailable, e.g. scores imported from an
/// external first stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub sample_rate_hz: f64,
    /// `samples[channel][t]`.
    pub samples: Vec<Vec<f64>>,
    pub label: Label,
    pub events: Option<Vec<EventAnnotation>>,
}

impl Recording {
    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }
}

/// Which split a planned recording belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Deterministic plan for one dataset entry; `generate_dataset` and any
/// streaming consumer both derive recordings from the same plan, so they
/// agree byte for byte.
#[derive(Debug, Clone)]
pub struct RecordingPlan {
    pub id: String,
    pub label: Label,
    pub seed: u64,
    pub split: Split,
}

/// Enumerates ids, labels and per-recording seeds for a dataset, in a fixed
/// order (train normals, train abnormals, test normals, test abnormals).
pub fn dataset_plan(cfg: &GeneratorConfig) -> Result<Vec<RecordingPlan>> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let groups = [
        (Split::Train, Label::Normal, cfg.n_normal_train, "train-normal"),
        (Split::Train, Label::Abnormal, cfg.n_abnormal_train, "train-abnormal"),
        (Split::Test, Label::Normal, cfg.n_normal_test, "test-normal"),
        (Split::Test, Label::Abnormal, cfg.n_abnormal_test, "test-abnormal"),
    ];
    let mut plan = Vec::new();
    for (split, label, count, prefix) in groups {
        for i in 0..count {
            plan.push(RecordingPlan {
                id: format!("{prefix}-{i:04}"),
                label,
                seed: master.random(),
                split,
            });
        }
    }
    Ok(plan)
}

/// Materializes one entry of a [`dataset_plan`]; streaming consumers call
/// this per entry instead of holding the whole dataset.
pub fn generate_planned(cfg: &GeneratorConfig, entry: &RecordingPlan) -> Result<Recording> {
    generate_recording_with_id(cfg, entry.label, entry.seed, entry.id.clone())
}

/// Generates one recording. All randomness comes from `seed`, so identical
/// `(cfg, label, seed)` triples give bit-identical sample matrices.
pub fn generate_recording(cfg: &GeneratorConfig, label: Label, seed: u64) -> Result<Recording> {
    cfg.validate()?;
    let id = format!("{}-{seed:016x}", label.as_str());
    generate_recording_with_id(cfg, label, seed, id)
}

pub(crate) fn generate_recording_with_id(
    cfg: &GeneratorConfig,
    label: Label,
    seed: u64,
    id: String,
) -> Result<Recording> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_samples();

    // 1. event annotations
    let events = match label {
        Label::Normal => Vec::new(),
        Label::Abnormal => draw_events(cfg, &mut rng)?,
    };

    // 2. background, channel by channel
    let mut samples = Vec::with_capacity(cfg.channels);
    for _ in 0..cfg.channels {
        samples.push(background_channel(cfg, n, &mut rng)?);
    }

    // 3. event bursts, scaled to the background RMS
    let amplitude = cfg.event_snr * cfg.background.rms();
    for event in &events {
        for channel in samples.iter_mut() {
            let phase = rng.random_range(0.0..TAU);
            inject_burst(channel, cfg, event, amplitude, phase);
        }
    }

    Ok(Recording {
        id,
        sample_rate_hz: cfg.sample_rate_hz,
        samples,
        label,
        events: Some(events),
    })
}

fn draw_events(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Vec<EventAnnotation>> {
    let poisson = Poisson::new(cfg.event_rate_per_recording)
        .map_err(|e| Error::Config(format!("bad event rate: {e}")))?;
    // rejection-clamp: abnormal recordings must contain at least one event
    let count = loop {
        let draw = poisson.sample(rng).round() as u64;
        if draw >= 1 {
            break draw;
        }
    };
    let max_onset = cfg.duration_s - cfg.event_duration_s;
    let mut events: Vec<EventAnnotation> = (0..count)
        .map(|_| EventAnnotation {
            onset_s: rng.random_range(0.0..=max_onset),
            duration_s: cfg.event_duration_s,
            kind: EventKind::Burst,
        })
        .collect();
    events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    Ok(events)
}

/// Sum of band-limited sinusoids (advanced by complex rotation rather than
/// per-sample `sin`, which matters at hundreds of millions of samples) plus
/// white Gaussian noise.
fn background_channel(cfg: &GeneratorConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let bg = &cfg.background;
    let per_component = bg.sinusoid_amplitude / (bg.n_sinusoids as f64).sqrt();
    struct Oscillator {
        re: f64,
        im: f64,
        step_re: f64,
        step_im: f64,
    }
    let oscillators: Vec<Oscillator> = (0..bg.n_sinusoids)
        .map(|_| {
            let freq = rng.random_range(bg.band_lo_hz..bg.band_hi_hz);
            let phase = rng.random_range(0.0..TAU);
            let step = TAU * freq / cfg.sample_rate_hz;
            Oscillator {
                re: phase.cos(),
                im: phase.sin(),
                step_re: step.cos(),
                step_im: step.sin(),
            }
        })
        .collect();

    let mut channel = vec![0.0f64; n];
    for osc in oscillators {
        let (mut re, mut im) = (osc.re, osc.im);
        for (t, slot) in channel.iter_mut().enumerate() {
            *slot += per_component * im;
            let next_re = re * osc.step_re - im * osc.step_im;
            let next_im = re * osc.step_im + im * osc.step_re;
            re = next_re;
            im = next_im;
            if (t + 1).is_multiple_of(OSCILLATOR_RENORM_INTERVAL) {
                let mag = (re * re + im * im).sqrt();
                re /= mag;
                im /= mag;
            }
        }
    }

    if bg.white_noise_std > 0.0 {
        let normal = Normal::new(0.0, bg.white_noise_std)
            .map_err(|e| Error::Config(format!("bad white noise std: {e}")))?;
        for slot in channel.iter_mut() {
            *slot += normal.sample(rng);
        }
    }
    Ok(channel)
}

/// Adds an amplitude-tapered oscillatory burst over the event span.
fn inject_burst(
    channel: &mut [f64],
    cfg: &GeneratorConfig,
    event: &EventAnnotation,
    amplitude: f64,
    phase: f64,
) {
    let fs = cfg.sample_rate_hz;
    let start = (event.onset_s * fs).round() as usize;
    let len = (event.duration_s * fs).round() as usize;
    let end = (start + len).min(channel.len());
    for (offset, slot) in channel[start..end].iter_mut().enumerate() {
        let u = offset as f64 / len as f64;
        let rel = offset as f64 / fs;
        *slot +=
            amplitude * tukey(u, EVENT_TAPER_FRACTION) * (TAU * cfg.event_freq_hz * rel + phase).sin();
    }
}

/// Tukey (tapered cosine) envelope on [0, 1] with total taper fraction
/// `alpha`.
fn tukey(u: f64, alpha: f64) -> f64 {
    let half = alpha / 2.0;
    if u < half {
        0.5 * (1.0 - (std::f64::consts::PI * u / half).cos())
    } else if u > 1.0 - half {
        0.5 * (1.0 - (std::f64::consts::PI * (1.0 - u) / half).cos())
    } else {
        1.0
    }
}

/// Generates the full train/test dataset described by `cfg`. Deterministic
/// in `cfg.rng_seed`; recordings are materialized in memory, so large
/// configurations are better consumed through [`dataset_plan`] one recording
/// at a time.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<(Vec<Recording>, Vec<Recording>)> {
    let plan = dataset_plan(cfg)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for entry in plan {
        let rec = generate_recording_with_id(cfg, entry.label, entry.seed, entry.id)?;
        match entry.split {
            Split::Train => train.push(rec),
            Split::Test => test.push(rec),
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            duration_s: 120.0,
            n_normal_train: 3,
            n_abnormal_train: 3,
            n_normal_test: 2,
            n_abnormal_test: 2,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn normal_recordings_have_no_events() {
        let rec = generate_recording(&GeneratorConfig::default(), Label::Normal, 1).unwrap();
        assert_eq!(rec.label, Label::Normal);
        assert_eq!(rec.events.as_deref(), Some(&[][..]));
    }

    #[test]
    fn abnormal_recordings_have_at_least_one_event() {
        let cfg = small_config();
        for seed in 0..20 {
            let rec = generate_recording(&cfg, Label::Abnormal, seed).unwrap();
            let events = rec.events.as_ref().unwrap();
            assert!(!events.is_empty(), "seed {seed} produced no events");
            for e in events {
                assert!(e.onset_s >= 0.0);
                assert!(e.end_s() <= cfg.duration_s + 1e-9);
            }
        }
    }

    /// Brute-force oracle: RMS over samples inside annotated spans versus
    /// samples outside them.
    #[test]
    fn event_spans_carry_at_least_twice_the_background_rms() {
        let cfg = GeneratorConfig::default();
        let rec = generate_recording(&cfg, Label::Abnormal, 7).unwrap();
        let events = rec.events.as_ref().unwrap();
        let fs = cfg.sample_rate_hz;
        for channel in &rec.samples {
            let mut inside = Vec::new();
            let mut outside = Vec::new();
            for (t, &x) in channel.iter().enumerate() {
                let time = t as f64 / fs;
                if events.iter().any(|e| time >= e.onset_s && time < e.end_s()) {
                    inside.push(x);
                } else {
                    outside.push(x);
                }
            }
            let rms = |xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
            let ratio = rms(&inside) / rms(&outside);
            assert!(ratio >= 2.0, "in/out RMS ratio {ratio} below 2");
        }
    }

    #[test]
    fn recordings_are_deterministic_and_finite() {
        let cfg = small_config();
        let a = generate_recording(&cfg, Label::Abnormal, 99).unwrap();
        let b = generate_recording(&cfg, Label::Abnormal, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_recording(&cfg, Label::Abnormal, 100).unwrap();
        assert_ne!(a.samples, c.samples);
        assert_eq!(a.n_samples(), cfg.n_samples());
        assert_eq!(a.samples.len(), cfg.channels);
        assert!(a.samples.iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn dataset_counts_and_ids_match_the_config() {
        let cfg = small_config();
        let (train, test) = generate_dataset(&cfg).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 4);
        let mut ids: Vec<&str> = train.iter().chain(&test).map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10, "recording ids must be unique");
        assert_eq!(train.iter().filter(|r| r.label == Label::Normal).count(), 3);
        assert_eq!(test.iter().filter(|r| r.label == Label::Abnormal).count(), 2);
    }

    #[test]
    fn default_plan_counts_match_the_configuration() {
        let plan = dataset_plan(&GeneratorConfig::default()).unwrap();
        let train = plan.iter().filter(|e| e.split == Split::Train).count();
        let test = plan.iter().filter(|e| e.split == Split::Test).count();
        assert_eq!(train, 400);
        assert_eq!(test, 100);

        let cfg = GeneratorConfig {
            n_abnormal_train: 0,
            ..GeneratorConfig::default()
        };
        let plan = dataset_plan(&cfg).unwrap();
        let train_normal = plan
            .iter()
            .filter(|e| e.split == Split::Train && e.label == Label::Normal)
            .count();
        let train_abnormal = plan
            .iter()
            .filter(|e| e.split == Split::Train && e.label == Label::Abnormal)
            .count();
        assert_eq!(train_normal, 200);
        assert_eq!(train_abnormal, 0);
    }

    #[test]
    fn empty_class_counts_are_respected() {
        let cfg = GeneratorConfig {
            n_abnormal_train: 0,
            ..small_config()
        };
        let (train, _) = generate_dataset(&cfg).unwrap();
        assert_eq!(train.len(), 3);
        assert!(train.iter().all(|r| r.label == Label::Normal));
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let cfg = small_config();
        let (train_a, test_a) = generate_dataset(&cfg).unwrap();
        let (train_b, test_b) = generate_dataset(&cfg).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
    }

    #[test]
    fn class_purity_holds_across_a_dataset() {
        let (train, test) = generate_dataset(&small_config()).unwrap();
        for rec in train.iter().chain(&test) {
            let events = rec.events.as_ref().unwrap();
            match rec.label {
                Label::Normal => assert!(events.is_empty()),
                Label::Abnormal => assert!(!events.is_empty()),
            }
        }
    }

    /// Within-event power at the event frequency exceeds the background's
    /// power there, checked over many recordings.
    #[test]
    fn events_are_spectrally_detectable() {
        use crate::spectrum::PowerSpectrum;
        let cfg = GeneratorConfig {
            duration_s: 60.0,
            ..GeneratorConfig::default()
        };
        let band = (cfg.event_freq_hz - 5.0, cfg.event_freq_hz + 5.0);
        let mut in_event = Vec::new();
        let mut background = Vec::new();
        for seed in 0..100 {
            let rec = generate_recording(&cfg, Label::Abnormal, seed).unwrap();
            let events = rec.events.as_ref().unwrap();
            let fs = cfg.sample_rate_hz;
            let channel = &rec.samples[0];
            let event = &events[0];
            let start = (event.onset_s * fs) as usize;
            let end = ((event.end_s() * fs) as usize).min(channel.len());
            let spec = PowerSpectrum::compute(&channel[start..end], fs).unwrap();
            in_event.push(spec.band_power(band.0, band.1));
            // a slice of equal length guaranteed event-free: normal recording
            let normal = generate_recording(&cfg, Label::Normal, seed).unwrap();
            let spec = PowerSpectrum::compute(&normal.samples[0][start..end], fs).unwrap();
            background.push(spec.band_power(band.0, band.1));
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(
            mean(&in_event) > 4.0 * mean(&background),
            "event band power {} vs background {}",
            mean(&in_event),
            mean(&background)
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = GeneratorConfig {
            sample_rate_hz: 0.0,
            ..GeneratorConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = GeneratorConfig {
            event_freq_hz: 60.0, // above Nyquist for fs = 100
            ..GeneratorConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = GeneratorConfig {
            background: BackgroundSpectrum {
                band_hi_hz: 8.0,
                ..BackgroundSpectrum::default()
            },
            ..GeneratorConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = GeneratorConfig {
            background: BackgroundSpectrum {
                sinusoid_amplitude: 0.0,
                white_noise_std: 0.0,
                ..BackgroundSpectrum::default()
            },
            ..GeneratorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tukey_envelope_is_flat_in_the_middle_and_zero_at_the_edges() {
        assert!(tukey(0.0, 0.2).abs() < 1e-12);
        assert!(tukey(1.0, 0.2).abs() < 1e-12);
        assert_eq!(tukey(0.5, 0.2), 1.0);
        assert_eq!(tukey(0.15, 0.2), 1.0);
        assert!((tukey(0.05, 0.2) - 0.5).abs() < 1e-12);
    }
}
