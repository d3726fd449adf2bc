//! Periodogram-based power spectra for band-power features.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

thread_local! {
    // FftPlanner caches plans per length, so repeated same-length windows
    // reuse their twiddle tables.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// One-sided power spectrum of a real signal.
///
/// `power[k]` is the power attributed to frequency `k * bin_hz`, scaled so a
/// pure sinusoid of amplitude A at a bin frequency carries power A^2 / 2 and
/// the total over all bins equals the mean squared value of the signal.
#[derive(Debug, Clone)]
pub struct PowerSpectrum {
    pub power: Vec<f64>,
    pub bin_hz: f64,
    n: usize,
}

impl PowerSpectrum {
    pub fn compute(samples: &[f64], sample_rate_hz: f64) -> Result<PowerSpectrum> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("cannot take spectrum of empty signal".into()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        let n = samples.len();
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
        fft.process(&mut buf);
        let half = n / 2;
        let norm = 1.0 / (n as f64 * n as f64);
        let mut power = Vec::with_capacity(half + 1);
        for (k, c) in buf.iter().take(half + 1).enumerate() {
            let p = c.norm_sqr() * norm;
            // interior bins fold in the mirrored negative frequency
            let nyquist_bin = n.is_multiple_of(2) && k == half;
            power.push(if k == 0 || nyquist_bin { p } else { 2.0 * p });
        }
        Ok(PowerSpectrum {
            power,
            bin_hz: sample_rate_hz / n as f64,
            n,
        })
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.bin_hz * self.n as f64 / 2.0
    }

    /// Total power over bins whose frequency lies in `[lo_hz, hi_hz)`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.power
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * self.bin_hz;
                f >= lo_hz && f < hi_hz
            })
            .map(|(_, &p)| p)
            .sum()
    }
}
