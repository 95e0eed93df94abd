//! Complex-modulated oversampled DFT filter bank.
//!
//! Analysis of frame `k` (newest input sample `t_k = k L + L - 1`):
//!
//! ```text
//! x_m(k) = sum_j x(t_k - j) h(j) exp(i 2 pi m j / M)
//! ```
//!
//! which is the modulated-prototype decomposition `x_m(k) = sum_n x(n) h_m(t_k - n)`
//! evaluated with one polyphase fold and an M-point FFT. Synthesis uses a
//! second windowed-sinc `g` with twice the analysis cutoff, so `g` is flat
//! wherever `h` passes energy; with `M >= 2L` the product response is
//! Nyquist and alias images fall into the `h` stopband. The round trip is
//! the input delayed by `N - 1` samples for a prototype of length `N`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::SubbandState;
use crate::dsp::{kaiser_beta, windowed_sinc_lowpass};
use crate::error::{config, Error, Result};

/// Stopband attenuation targeted by [`FilterBankSpec::design`].
pub const PROTOTYPE_ATTENUATION_DB: f64 = 75.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBankSpec {
    pub m_bands: usize,
    pub hop: usize,
    /// Analysis lowpass prototype `h`.
    pub prototype: Vec<f64>,
    /// Synthesis lowpass prototype `g`, scaled for unit round-trip gain.
    pub synthesis: Vec<f64>,
    pub fs: f64,
}

impl FilterBankSpec {
    /// Designs a bank with `taps_per_band * m_bands` prototype taps.
    pub fn design(m_bands: usize, hop: usize, taps_per_band: usize, fs: f64) -> Result<Self> {
        if m_bands < 2 || hop == 0 || taps_per_band == 0 {
            return Err(config("filter bank needs m_bands >= 2, hop >= 1 and taps_per_band >= 1"));
        }
        let n = taps_per_band * m_bands;
        let beta = kaiser_beta(PROTOTYPE_ATTENUATION_DB);
        let h = windowed_sinc_lowpass(n, 0.5 / m_bands as f64, beta);
        let mut g = windowed_sinc_lowpass(n, 1.0 / m_bands as f64, beta);
        let overlap: f64 = h.iter().zip(&g).map(|(a, b)| a * b).sum();
        let scale = hop as f64 / (m_bands as f64 * overlap);
        for v in &mut g {
            *v *= scale;
        }
        let spec = Self { m_bands, hop, prototype: h, synthesis: g, fs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_bands < 2 * self.hop {
            return Err(config(format!(
                "bank must be oversampled: m_bands = {} < 2 * hop = {}",
                self.m_bands,
                2 * self.hop
            )));
        }
        if self.hop == 0 {
            return Err(config("hop must be positive"));
        }
        let n = self.prototype.len();
        if n == 0 || !n.is_multiple_of(self.m_bands) {
            return Err(config(format!(
                "prototype length {n} is not a multiple of m_bands = {}",
                self.m_bands
            )));
        }
        if self.synthesis.len() != n {
            return Err(config("analysis and synthesis prototypes differ in length"));
        }
        if !(self.fs > 0.0) {
            return Err(config("sample rate must be positive"));
        }
        Ok(())
    }

    pub fn prototype_len(&self) -> usize {
        self.prototype.len()
    }

    /// Samples of delay introduced by an analysis/synthesis round trip.
    pub fn latency(&self) -> usize {
        self.prototype.len() - 1
    }

    /// Centre frequency of band `m`, Hz.
    pub fn band_center(&self, m: usize) -> f64 {
        m as f64 * self.fs / self.m_bands as f64
    }
}

/// Streaming analysis: push `hop` samples, receive one frame of `m_bands` subband samples.
#[derive(Clone)]
pub struct Analyzer {
    spec: Arc<FilterBankSpec>,
    history: Vec<f64>,
    fold: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Analyzer {
    pub fn new(spec: Arc<FilterBankSpec>) -> Result<Self> {
        spec.validate()?;
        let fft = FftPlanner::new().plan_fft_inverse(spec.m_bands);
        Ok(Self {
            history: vec![0.0; spec.prototype_len()],
            fold: vec![Complex64::default(); spec.m_bands],
            fft,
            spec,
        })
    }

    pub fn spec(&self) -> &FilterBankSpec {
        &self.spec
    }

    /// `hop` new samples in, one frame out (written to `frame`, length `m_bands`).
    pub fn push(&mut self, input: &[f64], frame: &mut [Complex64]) {
        let l = self.spec.hop;
        let n = self.history.len();
        debug_assert_eq!(input.len(), l);
        // history[n - 1] is the newest sample
        self.history.copy_within(l.., 0);
        self.history[n - l..].copy_from_slice(input);
        let m = self.spec.m_bands;
        for f in self.fold.iter_mut() {
            *f = Complex64::default();
        }
        for (j, &h) in self.spec.prototype.iter().enumerate() {
            self.fold[j % m].re += self.history[n - 1 - j] * h;
        }
        self.fft.process(&mut self.fold);
        frame.copy_from_slice(&self.fold);
    }

    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Streaming synthesis: one frame in, `hop` output samples out.
#[derive(Clone)]
pub struct Synthesizer {
    spec: Arc<FilterBankSpec>,
    acc: Vec<f64>,
    spectrum: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Synthesizer {
    pub fn new(spec: Arc<FilterBankSpec>) -> Result<Self> {
        spec.validate()?;
        let fft = FftPlanner::new().plan_fft_inverse(spec.m_bands);
        Ok(Self {
            acc: vec![0.0; spec.prototype_len() + spec.hop - 1],
            spectrum: vec![Complex64::default(); spec.m_bands],
            fft,
            spec,
        })
    }

    pub fn push(&mut self, frame: &[Complex64], out: &mut [f64]) {
        let m = self.spec.m_bands;
        let l = self.spec.hop;
        let d = self.spec.latency();
        self.spectrum.copy_from_slice(frame);
        self.fft.process(&mut self.spectrum);
        // acc[l - 1 + r] is output position t_k + r
        for (r, &g) in self.spec.synthesis.iter().enumerate() {
            let idx = (r + m - d % m) % m;
            self.acc[l - 1 + r] += g * self.spectrum[idx].re;
        }
        out.copy_from_slice(&self.acc[..l]);
        self.acc.copy_within(l.., 0);
        let len = self.acc.len();
        self.acc[len - l..].iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn reset(&mut self) {
        self.acc.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Batch analysis of a whole stream. The tail is zero-padded so every input
/// sample reaches every frame that depends on it.
pub fn fb_analyze(spec: &FilterBankSpec, x: &[f64]) -> Result<SubbandState> {
    spec.validate()?;
    if x.len() < spec.prototype_len() {
        return Err(Error::Framing(format!(
            "stream of {} samples is shorter than the {}-tap prototype",
            x.len(),
            spec.prototype_len()
        )));
    }
    let l = spec.hop;
    let frames = (x.len() + spec.prototype_len() - 1).div_ceil(l);
    let mut an = Analyzer::new(Arc::new(spec.clone()))?;
    let mut bands = vec![vec![Complex64::default(); frames]; spec.m_bands];
    let mut block = vec![0.0; l];
    let mut frame = vec![Complex64::default(); spec.m_bands];
    for k in 0..frames {
        for (i, b) in block.iter_mut().enumerate() {
            *b = x.get(k * l + i).copied().unwrap_or(0.0);
        }
        an.push(&block, &mut frame);
        for (m, v) in frame.iter().enumerate() {
            bands[m][k] = *v;
        }
    }
    Ok(SubbandState { bands, frame_index: frames })
}

/// Batch synthesis; returns `frames * hop` samples (the input delayed by
/// [`FilterBankSpec::latency`]).
pub fn fb_synthesize(spec: &FilterBankSpec, s: &SubbandState) -> Result<Vec<f64>> {
    spec.validate()?;
    if s.n_bands() != spec.m_bands {
        return Err(config(format!(
            "subband state has {} bands, filter bank has {}",
            s.n_bands(),
            spec.m_bands
        )));
    }
    let l = spec.hop;
    let frames = s.n_frames();
    let mut syn = Synthesizer::new(Arc::new(spec.clone()))?;
    let mut out = vec![0.0; frames * l];
    let mut frame = vec![Complex64::default(); spec.m_bands];
    for k in 0..frames {
        for (m, f) in frame.iter_mut().enumerate() {
            *f = s.bands[m][k];
        }
        syn.push(&frame, &mut out[k * l..(k + 1) * l]);
    }
    Ok(out)
}
