use serde::{Deserialize, Serialize};

use crate::dsp::{frac_delay_taps, FRAC_HALF_TAPS};
use crate::error::{config, domain, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicArrayGeometry {
    pub positions: Vec<[f64; 3]>,
    pub fs: f64,
    pub c: f64,
}

impl MicArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>, fs: f64, c: f64) -> Result<Self> {
        let g = Self { positions, fs, c };
        g.validate()?;
        Ok(g)
    }

    /// Uniform circular array in the horizontal plane around `center`, first mic at azimuth 0.
    pub fn circular(n: usize, radius: f64, center: [f64; 3], fs: f64, c: f64) -> Result<Self> {
        let positions = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin(), center[2]]
            })
            .collect();
        Self::new(positions, fs, c)
    }

    /// Uniform linear array along +x starting at `origin`.
    pub fn linear(n: usize, spacing: f64, origin: [f64; 3], fs: f64, c: f64) -> Result<Self> {
        let positions = (0..n).map(|i| [origin[0] + spacing * i as f64, origin[1], origin[2]]).collect();
        Self::new(positions, fs, c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(config("array needs at least one microphone"));
        }
        if !(self.fs > 0.0) || !(self.c > 0.0) {
            return Err(config("array sample rate and sound speed must be positive"));
        }
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(config("non-finite microphone coordinate"));
        }
        for i in 0..self.positions.len() {
            for j in 0..i {
                if self.positions[i] == self.positions[j] {
                    return Err(config(format!("microphones {j} and {i} share a position")));
                }
            }
        }
        Ok(())
    }

    pub fn n_mics(&self) -> usize {
        self.positions.len()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.n_mics() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for i in 0..3 {
                c[i] += p[i] / n;
            }
        }
        c
    }
}

/// Unit vector pointing toward azimuth `deg` in the horizontal plane.
/// Mirror azimuths `a` and `360 - a` give bit-identical x components.
pub(crate) fn direction(deg: f64) -> [f64; 3] {
    let a = deg.rem_euclid(360.0);
    let (folded, sign) = if a > 180.0 { (360.0 - a, -1.0) } else { (a, 1.0) };
    let r = folded.to_radians();
    [r.cos(), sign * r.sin(), 0.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub w: Vec<f64>,
    /// Per-mic delays, seconds.
    pub tau: Vec<f64>,
}

impl BeamformerWeights {
    /// Uniform weights with non-negative delays aligning a far-field plane
    /// wave arriving from azimuth `deg`.
    pub fn steer(geom: &MicArrayGeometry, deg: f64) -> Self {
        let u = direction(deg);
        let lead: Vec<f64> = geom.positions.iter().map(|p| (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / geom.c).collect();
        let min = lead.iter().copied().fold(f64::INFINITY, f64::min);
        let n = geom.n_mics();
        Self { w: vec![1.0 / n as f64; n], tau: lead.iter().map(|l| l - min).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.len() != self.tau.len() {
            return Err(config("weight and delay counts differ"));
        }
        let sum: f64 = self.w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(domain(format!("beamformer weights sum to {sum}, expected 1")));
        }
        if self.tau.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(domain("steering delays must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Delay-and-sum: `y(t) = sum_m w_m x_m(t - tau_m)`, samples before the
/// start of each channel treated as zero. Output has the channel length.
pub fn beamform_das(geom: &MicArrayGeometry, weights: &BeamformerWeights, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    weights.validate()?;
    if frames.len() != geom.n_mics() || weights.w.len() != geom.n_mics() {
        return Err(config(format!(
            "{} channels and {} weights for a {}-mic array",
            frames.len(),
            weights.w.len(),
            geom.n_mics()
        )));
    }
    let len = frames[0].len();
    if frames.iter().any(|f| f.len() != len) {
        return Err(Error::Data("channels differ in length".into()));
    }
    let mut y = vec![0.0; len];
    for ((x, &w), &tau) in frames.iter().zip(&weights.w).zip(&weights.tau) {
        let shift = tau * geom.fs;
        if shift + FRAC_HALF_TAPS as f64 >= len as f64 {
            return Err(Error::Framing(format!(
                "delay of {shift:.2} samples exceeds the {len}-sample frame"
            )));
        }
        if w != 0.0 {
            add_delayed(&mut y, x, shift, w);
        }
    }
    Ok(y)
}

/// `y[t] += w * x(t - shift)` with 8-tap fractional interpolation.
pub(crate) fn add_delayed(y: &mut [f64], x: &[f64], shift: f64, w: f64) {
    let whole = shift.floor();
    let frac = shift - whole;
    let whole = whole as isize;
    // x(t - shift) = x(t - whole - 1 + (1 - frac)); taps index floor + i - 3
    let (base_off, taps) = if frac == 0.0 { (-whole, frac_delay_taps(0.0)) } else { (-whole - 1, frac_delay_taps(1.0 - frac)) };
    let taps: Vec<f64> = taps.iter().map(|t| t * w).collect();
    let n = x.len() as isize;
    for (t, out) in y.iter_mut().enumerate() {
        let start = t as isize + base_off - 3;
        let mut acc = 0.0;
        if start >= 0 && start + 8 <= n {
            let s = &x[start as usize..start as usize + 8];
            for i in 0..8 {
                acc += taps[i] * s[i];
            }
        } else {
            for (i, tap) in taps.iter().enumerate() {
                let idx = start + i as isize;
                if idx >= 0 && idx < n {
                    acc += tap * x[idx as usize];
                }
            }
        }
        *out += acc;
    }
}
