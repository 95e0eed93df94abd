use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::substream;
use crate::error::{config, domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Pink,
    BabbleSurrogate,
    CarSurrogate,
    StreetSurrogate,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "white" => Self::White,
            "pink" => Self::Pink,
            "babble_surrogate" => Self::BabbleSurrogate,
            "car_surrogate" => Self::CarSurrogate,
            "street_surrogate" => Self::StreetSurrogate,
            other => return Err(config(format!("unknown noise kind '{other}'"))),
        })
    }
}

/// Number of virtual talkers in the babble surrogate.
pub const BABBLE_VOICES: usize = 8;
/// Amplitude-modulation rate of each babble voice, Hz.
pub const BABBLE_MOD_HZ: f64 = 4.0;

impl NoiseKind {
    /// Declared long-term power spectral shape at `f` Hz (arbitrary scale).
    pub fn psd_shape(self, f: f64) -> f64 {
        let f = f.abs();
        match self {
            Self::White => 1.0,
            Self::Pink | Self::StreetSurrogate => 1.0 / f.max(10.0),
            Self::CarSurrogate => 1.0 / (1.0 + (f / 100.0).powi(4)),
            Self::BabbleSurrogate => speech_psd(f),
        }
    }
}

/// Long-term average speech spectrum: second-order highpass at 100 Hz,
/// flat to 500 Hz, then falling 6 dB per octave.
pub fn speech_psd(f: f64) -> f64 {
    let hp = (f / 100.0).powi(4) / (1.0 + (f / 100.0).powi(4));
    hp / (1.0 + (f / 500.0).powi(2))
}

/// Gaussian noise with power spectrum `shape`, unit mean power.
pub fn shaped_noise<R: Rng>(n: usize, fs: f64, shape: impl Fn(f64) -> f64, rng: &mut R) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.sample(StandardNormal), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        *v *= shape(bin as f64 * fs / n as f64).sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let p = out.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if p > 0.0 {
        let g = 1.0 / p.sqrt();
        out.iter_mut().for_each(|v| *v *= g);
    }
    out
}

/// Unit-power noise of the given kind. Deterministic in `seed`.
pub fn synth_noise(kind: NoiseKind, duration: f64, fs: f64, seed: u64) -> Result<Vec<f64>> {
    if !(duration > 0.0) || !(fs > 0.0) {
        return Err(domain("noise duration and sample rate must be positive"));
    }
    let n = (duration * fs).round() as usize;
    if n < 2 {
        return Err(domain("noise must span at least two samples"));
    }
    let mut rng = substream(seed, 0);
    if kind != NoiseKind::BabbleSurrogate {
        return Ok(shaped_noise(n, fs, |f| kind.psd_shape(f), &mut rng));
    }
    let mut out = vec![0.0; n];
    for v in 0..BABBLE_VOICES {
        let mut voice_rng = substream(seed, 1 + v as u64);
        let voice = shaped_noise(n, fs, speech_psd, &mut voice_rng);
        let phase = voice_rng.random::<f64>() * 2.0 * PI;
        for (t, (o, x)) in out.iter_mut().zip(&voice).enumerate() {
            let env = 0.5 * (1.0 + (2.0 * PI * BABBLE_MOD_HZ * t as f64 / fs + phase).sin());
            *o += env * x;
        }
    }
    let p = out.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let g = 1.0 / p.sqrt();
    out.iter_mut().for_each(|v| *v *= g);
    Ok(out)
}

/// Mean periodogram power over `[lo, hi)` Hz.
pub fn band_power(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut sum, mut count) = (0.0, 0usize);
    for (k, v) in buf.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * fs / n as f64;
        if f >= lo && f < hi {
            sum += v.norm_sqr();
            count += 1;
        }
    }
    sum / count.max(1) as f64
}
