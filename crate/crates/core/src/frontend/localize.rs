use std::fmt::Write as _;

use super::array::{beamform_das, BeamformerWeights, MicArrayGeometry};
use crate::dsp::energy;
use crate::error::{config, Error, Result};

/// Uniform azimuth grid over `[0, 360)` degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthGrid {
    pub n_points: usize,
}

impl AzimuthGrid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(config("azimuth grid needs at least 3 points"));
        }
        Ok(Self { n_points })
    }

    pub fn step(&self) -> f64 {
        360.0 / self.n_points as f64
    }

    pub fn angle(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    /// Refined azimuth in `[0, 360)`.
    pub azimuth_deg: f64,
    /// `(angle, power)` per grid point.
    pub curve: Vec<(f64, f64)>,
    /// Grid index of the raw maximum.
    pub peak_index: usize,
}

impl Localization {
    /// Peak SRP over mean SRP; 1 for a flat curve.
    pub fn peak_to_mean(&self) -> f64 {
        let mean = self.curve.iter().map(|c| c.1).sum::<f64>() / self.curve.len() as f64;
        self.curve[self.peak_index].1 / mean
    }
}

/// Steered-response-power scan: delay-and-sum output energy at every grid
/// azimuth, then a parabola through the peak and its two circular
/// neighbours. Equal maxima resolve to the lowest grid index.
pub fn srp_localize(geom: &MicArrayGeometry, frames: &[Vec<f64>], grid: &AzimuthGrid) -> Result<Localization> {
    if geom.n_mics() < 2 {
        return Err(config("localization needs at least two microphones"));
    }
    if frames.iter().all(|f| f.iter().all(|v| *v == 0.0)) {
        return Err(Error::Data("no source: all channels are silent".into()));
    }
    let n = grid.n_points;
    let mut curve = Vec::with_capacity(n);
    for i in 0..n {
        let az = grid.angle(i);
        let y = beamform_das(geom, &BeamformerWeights::steer(geom, az), frames)?;
        curve.push((az, energy(&y)));
    }
    let mut peak = 0;
    for i in 1..n {
        if curve[i].1 > curve[peak].1 {
            peak = i;
        }
    }
    let left = curve[(peak + n - 1) % n].1;
    let mid = curve[peak].1;
    let right = curve[(peak + 1) % n].1;
    let denom = left - 2.0 * mid + right;
    let offset = if denom < 0.0 { (0.5 * (left - right) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let azimuth_deg = (grid.angle(peak) + offset * grid.step()).rem_euclid(360.0);
    Ok(Localization { azimuth_deg, curve, peak_index: peak })
}

/// CSV with header `angle,srp`.
pub fn srp_curve_csv(loc: &Localization) -> String {
    let mut s = String::from("angle,srp\n");
    for (a, p) in &loc.curve {
        let _ = writeln!(s, "{a:.6},{p:.9e}");
    }
    s
}

/// Smallest absolute angular difference, degrees.
pub fn angular_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
