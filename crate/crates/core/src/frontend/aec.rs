//! Per-band NLMS echo canceller.
//!
//! For band `m` at frame `k` with far-end delay line `d_m = [far_m(k), far_m(k-1), ...]`:
//!
//! ```text
//! e_m(k) = mic_m(k) - sum_j W_m[j] d_m[j]
//! W_m   += mu * conj(d_m) e_m(k) / (|d_m|^2 + eps_reg)
//! ```

use num_complex::Complex64;

use super::SubbandState;
use crate::error::{config, domain, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SubbandAecState {
    /// `weights[m][j]`: tap `j` of band `m`.
    pub weights: Vec<Vec<Complex64>>,
    /// `far_history[m][j]`: far-end sample of band `m`, `j` frames ago.
    pub far_history: Vec<Vec<Complex64>>,
    pub mu: f64,
    pub eps_reg: f64,
}

impl SubbandAecState {
    pub fn new(m_bands: usize, taps: usize, mu: f64, eps_reg: f64) -> Result<Self> {
        if m_bands == 0 || taps == 0 {
            return Err(config("echo canceller needs at least one band and one tap"));
        }
        let s = Self {
            weights: vec![vec![Complex64::default(); taps]; m_bands],
            far_history: vec![vec![Complex64::default(); taps]; m_bands],
            mu,
            eps_reg,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.mu) {
            return Err(domain(format!("step size {} outside [0, 2]", self.mu)));
        }
        if !(self.eps_reg > 0.0) || !self.eps_reg.is_finite() {
            return Err(domain(format!("regularization floor must be positive, got {}", self.eps_reg)));
        }
        if self.weights.len() != self.far_history.len()
            || self.weights.iter().zip(&self.far_history).any(|(w, d)| w.len() != d.len())
        {
            return Err(config("weights and far-end history shapes differ"));
        }
        if self.weights.iter().flatten().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::Numerical("non-finite echo-canceller weight".into()));
        }
        Ok(())
    }

    pub fn n_bands(&self) -> usize {
        self.weights.len()
    }

    pub fn taps(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Cancels the far-end echo from `mic`, adapting `state` frame by frame.
/// Returns the residual. Inputs are checked before the state is touched.
pub fn aec_process(state: &mut SubbandAecState, far: &SubbandState, mic: &SubbandState) -> Result<SubbandState> {
    state.validate()?;
    let m_bands = state.n_bands();
    if far.n_bands() != m_bands || mic.n_bands() != m_bands {
        return Err(config(format!(
            "band counts differ: state {m_bands}, far {}, mic {}",
            far.n_bands(),
            mic.n_bands()
        )));
    }
    if far.n_frames() != mic.n_frames() {
        return Err(Error::Data(format!(
            "far-end has {} frames, mic has {}",
            far.n_frames(),
            mic.n_frames()
        )));
    }
    far.validate()?;
    mic.validate()?;
    let frames = mic.n_frames();
    let mut out = SubbandState::zeros(m_bands, frames);
    out.frame_index = mic.frame_index;
    let mu = state.mu;
    let eps = state.eps_reg;
    for m in 0..m_bands {
        let w = &mut state.weights[m];
        let d = &mut state.far_history[m];
        // running |d|^2 keeps each frame O(taps)
        let mut power: f64 = d.iter().map(|v| v.norm_sqr()).sum();
        for k in 0..frames {
            let oldest = d[d.len() - 1];
            d.rotate_right(1);
            d[0] = far.bands[m][k];
            power += d[0].norm_sqr() - oldest.norm_sqr();
            if power < 0.0 {
                power = d.iter().map(|v| v.norm_sqr()).sum();
            }
            let mut y = Complex64::default();
            for (wj, dj) in w.iter().zip(d.iter()) {
                y += wj * dj;
            }
            let e = mic.bands[m][k] - y;
            out.bands[m][k] = e;
            if mu != 0.0 {
                let g = e * (mu / (power + eps));
                for (wj, dj) in w.iter_mut().zip(d.iter()) {
                    *wj += dj.conj() * g;
                }
            }
        }
    }
    Ok(out)
}

/// Echo return loss enhancement over frames `[from, to)`: mic power over residual power, dB.
pub fn erle_db(mic: &SubbandState, residual: &SubbandState, from: usize, to: usize) -> f64 {
    let sum = |s: &SubbandState| -> f64 { s.bands.iter().map(|b| b[from..to].iter().map(|v| v.norm_sqr()).sum::<f64>()).sum() };
    10.0 * (sum(mic) / sum(residual)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::fft_convolve;
    use crate::frontend::{fb_analyze, FilterBankSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn echo_path(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..64)
            .map(|j| {
                let g: f64 = rng.sample(StandardNormal);
                0.5 * g * (-(j as f64) / 16.0).exp()
            })
            .collect()
    }

    #[test]
    fn converges_on_known_echo_path() {
        let fs = 16_000.0;
        let spec = FilterBankSpec::design(32, 16, 12, fs).unwrap();
        let far = white(5 * 16_000, 11);
        let mut mic = fft_convolve(&far, &echo_path(12));
        mic.truncate(far.len());
        let fa = fb_analyze(&spec, &far).unwrap();
        let ma = fb_analyze(&spec, &mic).unwrap();
        let mut st = SubbandAecState::new(32, 16, 0.5, 1e-6).unwrap();
        let res = aec_process(&mut st, &fa, &ma).unwrap();
        let k = res.n_frames();
        let erle = erle_db(&ma, &res, k - 1000, k - 30);
        assert!(erle >= 20.0, "ERLE {erle} dB");
    }

    #[test]
    fn zero_step_freezes_weights() {
        let spec = FilterBankSpec::design(16, 8, 8, 8000.0).unwrap();
        let fa = fb_analyze(&spec, &white(2000, 1)).unwrap();
        let ma = fb_analyze(&spec, &white(2000, 2)).unwrap();
        let mut st = SubbandAecState::new(16, 4, 0.0, 1e-6).unwrap();
        st.weights[3][1] = Complex64::new(0.25, -0.5);
        let before = st.weights.clone();
        aec_process(&mut st, &fa, &ma).unwrap();
        assert_eq!(st.weights, before);
    }

    #[test]
    fn silent_far_end_passes_mic_through() {
        let spec = FilterBankSpec::design(16, 8, 8, 8000.0).unwrap();
        let ma = fb_analyze(&spec, &white(2000, 2)).unwrap();
        let fa = SubbandState::zeros(16, ma.n_frames());
        let mut st = SubbandAecState::new(16, 4, 0.7, 1e-6).unwrap();
        let out = aec_process(&mut st, &fa, &ma).unwrap();
        assert_eq!(out, ma);
        assert_eq!(st.weight_norm(), 0.0);
    }

    #[test]
    fn shape_and_value_errors() {
        let mut st = SubbandAecState::new(4, 2, 0.5, 1e-6).unwrap();
        let a = SubbandState::zeros(4, 10);
        let b = SubbandState::zeros(5, 10);
        assert!(matches!(aec_process(&mut st, &a, &b), Err(Error::Config(_))));
        let mut bad = SubbandState::zeros(4, 10);
        bad.bands[0][0] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(aec_process(&mut st, &a, &bad), Err(Error::Data(_))));
        assert!(SubbandAecState::new(4, 2, 2.5, 1e-6).is_err());
        assert!(SubbandAecState::new(4, 2, 0.5, 0.0).is_err());
    }

    #[test]
    fn weights_stay_bounded_under_long_excitation() {
        // Direct subband excitation: long runs without the bank overhead.
        let frames = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut far = SubbandState::zeros(2, frames);
        let mut mic = SubbandState::zeros(2, frames);
        for m in 0..2 {
            for k in 0..frames {
                far.bands[m][k] = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                mic.bands[m][k] = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
        }
        let mut st = SubbandAecState::new(2, 8, 1.0, 1e-6).unwrap();
        aec_process(&mut st, &far, &mic).unwrap();
        assert!(st.weight_norm().is_finite() && st.weight_norm() < 10.0);
    }
}
