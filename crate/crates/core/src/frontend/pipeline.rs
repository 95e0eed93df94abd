//! Streaming chain: delay-and-sum beam, subband analysis, echo cancellation
//! against the far-end reference, per-band gains, synthesis.

use std::sync::Arc;

use num_complex::Complex64;

use super::aec::{aec_process, SubbandAecState};
use super::array::{add_delayed, BeamformerWeights, MicArrayGeometry};
use super::filterbank::{Analyzer, FilterBankSpec, Synthesizer};
use super::SubbandState;
use crate::dsp::FRAC_HALF_TAPS;
use crate::error::{config, domain, Error, Result};

/// Extra beam delay so the interpolator never reads past the end of a chunk.
const LOOKAHEAD: usize = FRAC_HALF_TAPS as usize;

/// Tunable parameters of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndParams {
    pub mu: f64,
    /// Linear gains for bands `0..=m_bands / 2`; band `m` and its mirror
    /// `m_bands - m` share a gain so real input stays real.
    pub gains: Vec<f64>,
    pub steer_deg: f64,
}

impl FrontEndParams {
    pub fn unity(spec: &FilterBankSpec, mu: f64, steer_deg: f64) -> Self {
        Self { mu, gains: vec![1.0; spec.m_bands / 2 + 1], steer_deg }
    }
}

#[derive(Clone)]
pub struct FrontEnd {
    spec: Arc<FilterBankSpec>,
    geom: MicArrayGeometry,
    history: Vec<Vec<f64>>,
    hist_len: usize,
    beam_an: Analyzer,
    far_an: Analyzer,
    syn: Synthesizer,
    aec: SubbandAecState,
}

impl FrontEnd {
    pub fn new(spec: FilterBankSpec, geom: MicArrayGeometry, aec_taps: usize, eps_reg: f64) -> Result<Self> {
        spec.validate()?;
        geom.validate()?;
        if (spec.fs - geom.fs).abs() > 1e-9 {
            return Err(config("filter bank and array sample rates differ"));
        }
        let spec = Arc::new(spec);
        let mut span: f64 = 0.0;
        for a in &geom.positions {
            for b in &geom.positions {
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                span = span.max(d);
            }
        }
        let hist_len = (span / geom.c * geom.fs).ceil() as usize + 4 * LOOKAHEAD;
        Ok(Self {
            history: vec![vec![0.0; hist_len]; geom.n_mics()],
            hist_len,
            beam_an: Analyzer::new(spec.clone())?,
            far_an: Analyzer::new(spec.clone())?,
            syn: Synthesizer::new(spec.clone())?,
            aec: SubbandAecState::new(spec.m_bands, aec_taps, 0.0, eps_reg)?,
            spec,
            geom,
        })
    }

    pub fn spec(&self) -> &FilterBankSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &MicArrayGeometry {
        &self.geom
    }

    pub fn aec_state(&self) -> &SubbandAecState {
        &self.aec
    }

    /// Samples of delay between input and output.
    pub fn latency(&self) -> usize {
        self.spec.latency() + LOOKAHEAD
    }

    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(|h| h.iter_mut().for_each(|v| *v = 0.0));
        self.beam_an.reset();
        self.far_an.reset();
        self.syn.reset();
        let taps = self.aec.taps();
        self.aec = SubbandAecState::new(self.spec.m_bands, taps, 0.0, self.aec.eps_reg).expect("validated at construction");
    }

    fn check(&self, params: &FrontEndParams, mics: &[Vec<f64>], far: Option<&[f64]>) -> Result<usize> {
        if params.gains.len() != self.spec.m_bands / 2 + 1 {
            return Err(config(format!("expected {} band gains, got {}", self.spec.m_bands / 2 + 1, params.gains.len())));
        }
        if params.gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(domain("band gains must be finite and non-negative"));
        }
        if !(0.0..=2.0).contains(&params.mu) || !params.steer_deg.is_finite() {
            return Err(domain("step size outside [0, 2] or non-finite steering"));
        }
        if mics.len() != self.geom.n_mics() {
            return Err(config(format!("{} channels for a {}-mic array", mics.len(), self.geom.n_mics())));
        }
        let len = mics[0].len();
        if mics.iter().any(|m| m.len() != len) || far.is_some_and(|f| f.len() != len) {
            return Err(Error::Data("chunk channels differ in length".into()));
        }
        if !len.is_multiple_of(self.spec.hop) {
            return Err(Error::Framing(format!("chunk of {len} samples is not a multiple of the hop {}", self.spec.hop)));
        }
        if mics.iter().flatten().chain(far.into_iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite input sample".into()));
        }
        Ok(len)
    }

    /// Processes one chunk (length a multiple of the hop). Output is delayed
    /// by [`FrontEnd::latency`] samples.
    pub fn process_chunk(&mut self, params: &FrontEndParams, mics: &[Vec<f64>], far: Option<&[f64]>) -> Result<Vec<f64>> {
        let len = self.check(params, mics, far)?;
        let l = self.spec.hop;
        let m_bands = self.spec.m_bands;

        let weights = BeamformerWeights::steer(&self.geom, params.steer_deg);
        let mut beam = vec![0.0; self.hist_len + len];
        let mut ext = vec![0.0; self.hist_len + len];
        for ((x, hist), (&w, &tau)) in mics.iter().zip(self.history.iter_mut()).zip(weights.w.iter().zip(&weights.tau)) {
            ext[..self.hist_len].copy_from_slice(hist);
            ext[self.hist_len..].copy_from_slice(x);
            add_delayed(&mut beam, &ext, tau * self.geom.fs + LOOKAHEAD as f64, w);
            hist.copy_from_slice(&ext[len..]);
        }
        let beam = &beam[self.hist_len..];

        let frames = len / l;
        let mut beam_sub = SubbandState::zeros(m_bands, frames);
        let mut far_sub = SubbandState::zeros(m_bands, frames);
        let mut frame = vec![Complex64::default(); m_bands];
        for k in 0..frames {
            self.beam_an.push(&beam[k * l..(k + 1) * l], &mut frame);
            for (m, v) in frame.iter().enumerate() {
                beam_sub.bands[m][k] = *v;
            }
            if let Some(f) = far {
                self.far_an.push(&f[k * l..(k + 1) * l], &mut frame);
                for (m, v) in frame.iter().enumerate() {
                    far_sub.bands[m][k] = *v;
                }
            }
        }
        let mut clean = if far.is_some() {
            self.aec.mu = params.mu;
            aec_process(&mut self.aec, &far_sub, &beam_sub)?
        } else {
            beam_sub
        };
        for (m, band) in clean.bands.iter_mut().enumerate() {
            let g = params.gains[m.min(m_bands - m)];
            band.iter_mut().for_each(|v| *v *= g);
        }
        let mut out = vec![0.0; len];
        for k in 0..frames {
            for (m, f) in frame.iter_mut().enumerate() {
                *f = clean.bands[m][k];
            }
            self.syn.push(&frame, &mut out[k * l..(k + 1) * l]);
        }
        Ok(out)
    }

    /// Runs a whole recording from a fresh state and removes the chain
    /// latency, so `out[t]` lines up with `mics[..][t]`. Input is zero-padded
    /// to whole hops; output has the input length.
    pub fn process_aligned(&mut self, params: &FrontEndParams, mics: &[Vec<f64>], far: Option<&[f64]>) -> Result<Vec<f64>> {
        self.reset();
        let len = mics.first().map_or(0, Vec::len);
        let d = self.latency();
        let padded = (len + d).div_ceil(self.spec.hop) * self.spec.hop;
        let pad = |x: &[f64]| -> Vec<f64> {
            let mut v = x.to_vec();
            v.resize(padded, 0.0);
            v
        };
        let mics: Vec<Vec<f64>> = mics.iter().map(|m| pad(m)).collect();
        let far = far.map(pad);
        let out = self.process_chunk(params, &mics, far.as_deref())?;
        Ok(out[d..d + len].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{energy, fft_convolve};
    use crate::frontend::beamform_das;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn setup() -> FrontEnd {
        let spec = FilterBankSpec::design(32, 16, 12, 16_000.0).unwrap();
        let geom = MicArrayGeometry::circular(4, 0.05, [0.0; 3], 16_000.0, 343.0).unwrap();
        FrontEnd::new(spec, geom, 16, 1e-6).unwrap()
    }

    #[test]
    fn unity_chain_reproduces_beam() {
        let mut fe = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mics: Vec<Vec<f64>> = (0..4).map(|_| white(4000, &mut rng)).collect();
        let params = FrontEndParams::unity(fe.spec(), 0.5, 40.0);
        let out = fe.process_aligned(&params, &mics, None).unwrap();
        let beam = beamform_das(fe.geometry(), &BeamformerWeights::steer(fe.geometry(), 40.0), &mics).unwrap();
        let err: Vec<f64> = out.iter().zip(&beam).map(|(a, b)| a - b).collect();
        assert!(10.0 * (energy(&err) / energy(&beam)).log10() < -40.0);
    }

    #[test]
    fn chunked_equals_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mics: Vec<Vec<f64>> = (0..4).map(|_| white(3200, &mut rng)).collect();
        let far = white(3200, &mut rng);
        let params = FrontEndParams::unity(&FilterBankSpec::design(32, 16, 12, 16_000.0).unwrap(), 0.5, 10.0);
        let mut a = setup();
        let whole = a.process_chunk(&params, &mics, Some(&far)).unwrap();
        let mut b = setup();
        let mut pieces = Vec::new();
        for c in 0..4 {
            let r = c * 800..(c + 1) * 800;
            let chunk: Vec<Vec<f64>> = mics.iter().map(|m| m[r.clone()].to_vec()).collect();
            pieces.extend(b.process_chunk(&params, &chunk, Some(&far[r])).unwrap());
        }
        for (x, y) in whole.iter().zip(&pieces) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cancels_echo() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 48_000;
        let far = white(n, &mut rng);
        let path: Vec<f64> = (0..48).map(|j| 0.3 * rng.sample::<f64, _>(StandardNormal) * (-(j as f64) / 12.0).exp()).collect();
        let mut echo = fft_convolve(&far, &path);
        echo.truncate(n);
        let mics = vec![echo; 4];
        let mut fe = setup();
        let params = FrontEndParams::unity(fe.spec(), 0.5, 0.0);
        let out = fe.process_aligned(&params, &mics, Some(&far)).unwrap();
        let tail = n - 8000..n - 1000;
        let erle = 10.0 * (energy(&mics[0][tail.clone()]) / energy(&out[tail])).log10();
        assert!(erle > 15.0, "ERLE {erle}");
    }

    #[test]
    fn rejects_bad_chunks() {
        let mut fe = setup();
        let p = FrontEndParams::unity(fe.spec(), 0.5, 0.0);
        assert!(matches!(fe.process_chunk(&p, &vec![vec![0.0; 17]; 4], None), Err(Error::Framing(_))));
        assert!(fe.process_chunk(&p, &vec![vec![0.0; 16]; 3], None).is_err());
        let mut bad = p.clone();
        bad.gains.pop();
        assert!(fe.process_chunk(&bad, &vec![vec![0.0; 16]; 4], None).is_err());
    }
}
