//! Streaming multi-microphone front end.

mod aec;
mod array;
mod filterbank;
mod gain;
mod localize;
mod mask;
mod mix;
mod pipeline;

pub use aec::{aec_process, erle_db, SubbandAecState};
pub use array::{beamform_das, BeamformerWeights, MicArrayGeometry};
pub use filterbank::{fb_analyze, fb_synthesize, Analyzer, FilterBankSpec, Synthesizer};
pub use gain::{band_gain, BandGainProfile};
pub use localize::{angular_error, srp_curve_csv, srp_localize, AzimuthGrid, Localization};
pub use mask::{apply_spectral_mask, ideal_binary_mask};
pub use mix::{dynamic_mix, snr_tracking_weights, MixtureWeights, SNR_SMOOTHING};
pub use pipeline::{FrontEnd, FrontEndParams};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex subband samples, `bands[m][k]` for band `m` and frame `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandState {
    pub bands: Vec<Vec<Complex64>>,
    pub frame_index: usize,
}

impl SubbandState {
    pub fn zeros(m_bands: usize, frames: usize) -> Self {
        Self { bands: vec![vec![Complex64::default(); frames]; m_bands], frame_index: frames }
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn n_frames(&self) -> usize {
        self.bands.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_frames();
        if self.bands.iter().any(|b| b.len() != k) {
            return Err(Error::Data("subband rows have unequal frame counts".into()));
        }
        if self.bands.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Data("non-finite subband sample".into()));
        }
        Ok(())
    }

    pub fn band_energy(&self, m: usize) -> f64 {
        self.bands[m].iter().map(|v| v.norm_sqr()).sum()
    }
}
