//! Segmentation of recordings into fixed-length windows with inherited
//! labels, and measurement of the label noise that inheritance introduces.

use crate::error::{Error, Result};
use crate::label::Label;
use crate::synth::Recording;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowingConfig {
    /// Window length in seconds. The sweep convention uses
    /// {60, 180, 300, 400, 600} but any positive value is accepted.
    pub window_len_s: f64,
    /// Segmentation starts here, skipping the recording's leading portion.
    pub start_offset_s: f64,
    /// At most this much signal beyond the offset is segmented.
    pub max_span_s: f64,
    pub max_windows: usize,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        WindowingConfig {
            window_len_s: 60.0,
            start_offset_s: 60.0,
            max_span_s: 1200.0,
            max_windows: 20,
        }
    }
}

impl WindowingConfig {
    pub fn with_window_len(window_len_s: f64) -> Self {
        WindowingConfig {
            window_len_s,
            ..WindowingConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_len_s > 0.0 && self.window_len_s.is_finite()) {
            return Err(Error::Config("window_len_s must be positive".into()));
        }
        if !(self.start_offset_s >= 0.0 && self.start_offset_s.is_finite()) {
            return Err(Error::Config("start_offset_s must be non-negative".into()));
        }
        if !(self.max_span_s > 0.0 && self.max_span_s.is_finite()) {
            return Err(Error::Config("max_span_s must be positive".into()));
        }
        if self.max_windows == 0 {
            return Err(Error::Config("max_windows must be positive".into()));
        }
        if self.window_len_s > self.max_span_s {
            return Err(Error::Config(format!(
                "window_len_s {} exceeds max_span_s {}",
                self.window_len_s, self.max_span_s
            )));
        }
        // consistency with the 20-windows-of-one-minute cap
        if self.window_len_s == 60.0 && self.max_windows as f64 * 60.0 > self.max_span_s {
            return Err(Error::Config(format!(
                "max_windows {} of 60 s do not fit in max_span_s {}",
                self.max_windows, self.max_span_s
            )));
        }
        Ok(())
    }
}

/// One fixed-length segment of a recording. `inherited_label` is copied from
/// the parent recording; `contains_event` is ground truth and only present
/// for annotated (synthetic) data.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub recording_id: String,
    pub index: usize,
    pub start_s: f64,
    pub length_s: f64,
    pub sample_rate_hz: f64,
    /// `samples[channel][t]`, `window_len_s * fs` samples per channel.
    pub samples: Vec<Vec<f64>>,
    pub inherited_label: Label,
    pub contains_event: Option<bool>,
}

/// Window placement for a recording, in samples. Shared by [`segment`] and
/// the annotation-only paths so they can never disagree.
#[derive(Debug, Clone)]
pub struct WindowPlan {
    pub window_samples: usize,
    pub offset_samples: usize,
    pub count: usize,
    pub sample_rate_hz: f64,
}

impl WindowPlan {
    pub fn start_of(&self, index: usize) -> usize {
        self.offset_samples + index * self.window_samples
    }

    pub fn span_s_of(&self, index: usize) -> (f64, f64) {
        let start = self.start_of(index) as f64 / self.sample_rate_hz;
        (start, start + self.window_samples as f64 / self.sample_rate_hz)
    }
}

/// Computes where windows fall for a recording of `n_samples` at `fs`,
/// or fails when the usable span cannot hold a single window.
pub fn plan_windows(
    recording_id: &str,
    n_samples: usize,
    fs: f64,
    cfg: &WindowingConfig,
) -> Result<WindowPlan> {
    cfg.validate()?;
    let window_samples = (cfg.window_len_s * fs).round() as usize;
    let offset_samples = (cfg.start_offset_s * fs).round() as usize;
    let max_span_samples = (cfg.max_span_s * fs).round() as usize;
    if window_samples == 0 {
        return Err(Error::Config(format!(
            "window_len_s {} is shorter than one sample at {fs} Hz",
            cfg.window_len_s
        )));
    }
    if offset_samples + window_samples > n_samples {
        return Err(Error::Recording {
            id: recording_id.to_string(),
            msg: format!(
                "too short to segment: {} samples, need at least {}",
                n_samples,
                offset_samples + window_samples
            ),
        });
    }
    let usable = (n_samples - offset_samples).min(max_span_samples);
    let count = (usable / window_samples).min(cfg.max_windows);
    Ok(WindowPlan {
        window_samples,
        offset_samples,
        count,
        sample_rate_hz: fs,
    })
}

/// Segments a recording into non-overlapping windows: consecutive indices
/// from 0, tiling left to right from the start offset, trailing remainder
/// discarded.
pub fn segment(recording: &Recording, cfg: &WindowingConfig) -> Result<Vec<Window>> {
    let plan = plan_windows(
        &recording.id,
        recording.n_samples(),
        recording.sample_rate_hz,
        cfg,
    )?;
    let mut windows = Vec::with_capacity(plan.count);
    for index in 0..plan.count {
        let begin = plan.start_of(index);
        let end = begin + plan.window_samples;
        let samples: Vec<Vec<f64>> = recording
            .samples
            .iter()
            .map(|channel| channel[begin..end].to_vec())
            .collect();
        let (start_s, end_s) = plan.span_s_of(index);
        let contains_event = recording
            .events
            .as_ref()
            .map(|events| events.iter().any(|e| e.overlaps(start_s, end_s)));
        windows.push(Window {
            recording_id: recording.id.clone(),
            index,
            start_s,
            length_s: plan.window_samples as f64 / plan.sample_rate_hz,
            sample_rate_hz: plan.sample_rate_hz,
            samples,
            inherited_label: recording.label,
            contains_event,
        });
    }
    Ok(windows)
}

/// Counts `(windows, event-free windows)` for one abnormal recording without
/// materializing window samples; returns `(0, 0)` for normal recordings.
pub fn recording_noise_counts(recording: &Recording, cfg: &WindowingConfig) -> Result<(u64, u64)> {
    let events = recording.events.as_ref().ok_or_else(|| Error::InvalidInput(format!(
        "recording `{}` has no event annotations; label noise is only measurable on synthetic data",
        recording.id
    )))?;
    if recording.label == Label::Normal {
        return Ok((0, 0));
    }
    let plan = plan_windows(
        &recording.id,
        recording.n_samples(),
        recording.sample_rate_hz,
        cfg,
    )?;
    let mut event_free = 0u64;
    for index in 0..plan.count {
        let (start_s, end_s) = plan.span_s_of(index);
        if !events.iter().any(|e| e.overlaps(start_s, end_s)) {
            event_free += 1;
        }
    }
    Ok((plan.count as u64, event_free))
}

/// Fraction of windows from abnormal recordings that contain no actual
/// event: the rate at which inherited "abnormal" window labels are wrong.
/// Returns 0 when the input holds no abnormal windows.
pub fn label_noise_rate(recordings: &[Recording], cfg: &WindowingConfig) -> Result<f64> {
    let mut total = 0u64;
    let mut event_free = 0u64;
    for recording in recordings {
        let (t, f) = recording_noise_counts(recording, cfg)?;
        total += t;
        event_free += f;
    }
    if total == 0 {
        Ok(0.0)
    } else {
        Ok(event_free as f64 / total as f64)
    }
}
