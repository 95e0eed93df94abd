//! Nonlinear wave propagation: the plane-wave Westervelt solver, the
//! axisymmetric KZK solver, and the closed-form oracles used to check them.
//!
//! Both solvers work in retarded time `tau = t - z/c` and march in `z`.

mod dump;
mod kzk;
mod oracle;
mod plane;
mod spectrum;

pub use dump::{harmonic_curve_csv, FIELD_MAGIC};
pub use kzk::{simulate_kzk_axisym, AxisymGrid, HarmonicField, KzkSolver, SourceProfile, Splitting};
pub use oracle::{analytic_gaussian_axis, bessel_j, fubini_harmonics, rayleigh_distance, shock_formation_distance};
pub use plane::{march_westervelt_plane, simulate_westervelt_plane, PlaneWaveGrid};
pub use spectrum::harmonic_spectrum;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Physical constants of the propagation medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medium {
    /// Ambient density, kg/m^3.
    pub rho0: f64,
    /// Small-signal sound speed, m/s.
    pub c: f64,
    /// Coefficient of nonlinearity, `1 + B/2A`.
    pub beta: f64,
    /// Sound diffusivity, m^2/s.
    pub delta: f64,
}

impl Medium {
    pub fn new(rho0: f64, c: f64, beta: f64, delta: f64) -> Result<Self> {
        let m = Self { rho0, c, beta, delta };
        m.validate()?;
        Ok(m)
    }

    /// Water at room temperature.
    pub fn water() -> Self {
        Self { rho0: 1000.0, c: 1500.0, beta: 3.5, delta: 4.33e-6 }
    }

    /// Air at 20 C.
    pub fn air() -> Self {
        Self { rho0: 1.21, c: 343.0, beta: 1.2, delta: 4.0e-5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(domain(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(domain(format!("sound speed must be positive, got {}", self.c)));
        }
        // beta = 0 is admitted as the linear reference medium.
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(domain(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(domain(format!("delta must be non-negative, got {}", self.delta)));
        }
        Ok(())
    }

    /// Westervelt nonlinearity coefficient `beta / (rho0 c^2)`, 1/Pa.
    pub fn alpha_nl(&self) -> f64 {
        self.beta / (self.rho0 * self.c * self.c)
    }

    /// Thermoviscous amplitude attenuation `delta omega^2 / (2 c^3)` at `omega`, 1/m.
    pub fn attenuation(&self, omega: f64) -> f64 {
        self.delta * omega * omega / (2.0 * self.c.powi(3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    Sine,
    /// Gaussian-windowed tone burst centred in a frame of
    /// [`GAUSSIAN_FRAME_CYCLES`] carrier periods.
    GaussianPulse,
}

/// Carrier periods spanned by one frame of a Gaussian pulse.
pub const GAUSSIAN_FRAME_CYCLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceWaveform {
    /// Peak pressure amplitude, Pa.
    pub p0: f64,
    /// Fundamental (carrier) frequency, Hz.
    pub f0: f64,
    pub kind: WaveKind,
    #[serde(default)]
    pub phase: f64,
}

impl SourceWaveform {
    pub fn sine(p0: f64, f0: f64) -> Self {
        Self { p0, f0, kind: WaveKind::Sine, phase: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0.is_finite()) {
            return Err(domain(format!("p0 must be positive, got {}", self.p0)));
        }
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(domain(format!("f0 must be positive, got {}", self.f0)));
        }
        if !self.phase.is_finite() {
            return Err(domain("phase must be finite"));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f0
    }

    /// Number of fundamental periods in one simulation frame.
    pub fn frame_periods(&self) -> usize {
        match self.kind {
            WaveKind::Sine => 1,
            WaveKind::GaussianPulse => GAUSSIAN_FRAME_CYCLES,
        }
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_periods() as f64 / self.f0
    }

    /// Source pressure at retarded time `tau` within the frame `[0, frame_duration)`.
    pub fn sample(&self, tau: f64) -> f64 {
        match self.kind {
            WaveKind::Sine => self.p0 * (self.omega() * tau + self.phase).sin(),
            WaveKind::GaussianPulse => {
                let t = tau - 0.5 * self.frame_duration();
                let width = 1.5 / self.f0;
                self.p0 * (-(t / width).powi(2)).exp() * (self.omega() * t + self.phase).sin()
            }
        }
    }
}

/// Uniformly sampled pressure waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeWaveform {
    pub samples: Vec<f64>,
    /// Sample interval, s.
    pub dt: f64,
}

impl TimeWaveform {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(domain("waveform needs at least two samples"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain(format!("sample interval must be positive, got {dt}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Data("waveform contains non-finite samples".into()));
        }
        Ok(Self { samples, dt })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn max_slope(&self) -> f64 {
        let n = self.samples.len();
        (0..n)
            .map(|i| (self.samples[(i + 1) % n] - self.samples[i]).abs() / self.dt)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_nl_is_derived() {
        let mut m = Medium::water();
        assert_eq!(m.alpha_nl(), 3.5 / (1000.0 * 1500.0 * 1500.0));
        m.beta = 7.0;
        assert_eq!(m.alpha_nl(), 7.0 / (1000.0 * 1500.0 * 1500.0));
    }

    #[test]
    fn medium_rejects_bad_values() {
        assert!(Medium::new(0.0, 1500.0, 3.5, 0.0).is_err());
        assert!(Medium::new(1000.0, -1.0, 3.5, 0.0).is_err());
        assert!(Medium::new(1000.0, 1500.0, -0.1, 0.0).is_err());
        assert!(Medium::new(1000.0, 1500.0, 3.5, -1e-6).is_err());
        assert!(Medium::new(1000.0, 1500.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn waveform_rejects_short_or_nonfinite() {
        assert!(TimeWaveform::new(vec![1.0], 1.0).is_err());
        assert!(TimeWaveform::new(vec![1.0, f64::NAN], 1.0).is_err());
    }
}
