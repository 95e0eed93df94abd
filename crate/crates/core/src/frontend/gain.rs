use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

/// Per-band gain state. `gains` holds the last output of [`band_gain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandGainProfile {
    pub gains: Vec<f64>,
    pub noise_var: Vec<f64>,
    /// Listener or affect feature; 0 is neutral, -1 mutes.
    pub state_feat: f64,
    pub prefs: Vec<f64>,
    pub g_min: f64,
    pub g_max: f64,
    /// Noise power at which the preference gain is halved.
    pub noise_ref: f64,
}

impl BandGainProfile {
    pub fn new(prefs: Vec<f64>, g_min: f64, g_max: f64, noise_ref: f64) -> Result<Self> {
        let n = prefs.len();
        let p = Self {
            gains: prefs.clone(),
            noise_var: vec![0.0; n],
            state_feat: 0.0,
            prefs,
            g_min,
            g_max,
            noise_ref,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_min <= self.g_max) || self.g_min < 0.0 {
            return Err(domain(format!("invalid clamp bounds [{}, {}]", self.g_min, self.g_max)));
        }
        if !(self.noise_ref > 0.0) {
            return Err(domain("reference noise power must be positive"));
        }
        if self.noise_var.len() != self.prefs.len() {
            return Err(config("noise variance and preference lengths differ"));
        }
        if let Some(v) = self.noise_var.iter().find(|v| !(**v >= 0.0)) {
            return Err(domain(format!("noise variance {v} is negative")));
        }
        if let Some(p) = self.prefs.iter().find(|p| !(self.g_min..=self.g_max).contains(*p)) {
            return Err(domain(format!("preference {p} outside [{}, {}]", self.g_min, self.g_max)));
        }
        if !(self.state_feat >= -1.0) || !self.state_feat.is_finite() {
            return Err(domain(format!("state feature {} must be finite and at least -1", self.state_feat)));
        }
        Ok(())
    }
}

/// `G_i = clamp(pref_i (1 + state_feat) / (1 + noise_var_i / noise_ref), g_min, g_max)`.
/// Infinite noise variance yields `g_min`.
pub fn band_gain(profile: &BandGainProfile) -> Result<Vec<f64>> {
    profile.validate()?;
    Ok(profile
        .prefs
        .iter()
        .zip(&profile.noise_var)
        .map(|(&w, &v)| {
            let raw = if v.is_infinite() { 0.0 } else { w * (1.0 + profile.state_feat) / (1.0 + v / profile.noise_ref) };
            raw.clamp(profile.g_min, profile.g_max)
        })
        .collect())
}
