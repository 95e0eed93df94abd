use std::f64::consts::PI;

use super::{Medium, SourceWaveform};
use crate::error::{domain, Error, Result};

/// Plane-wave shock formation distance `rho0 c^3 / (beta omega p0)`.
///
/// Returns infinity for a linear medium (`beta == 0`).
pub fn shock_formation_distance(medium: &Medium, src: &SourceWaveform) -> Result<f64> {
    medium.validate()?;
    src.validate()?;
    if medium.beta == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(medium.rho0 * medium.c.powi(3) / (medium.beta * src.omega() * src.p0))
}

/// Bessel function of the first kind of integer order.
///
/// Power series for moderate arguments; beyond that the integral
/// representation is evaluated with the periodic trapezoid rule.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x.abs() <= 20.0 && n <= 120 {
        let half = 0.5 * x;
        let mut term = 1.0;
        for k in 1..=n {
            term *= half / k as f64;
        }
        let mut sum = term;
        let q = half * half;
        let mut k = 0u32;
        loop {
            term *= -q / ((k + 1) as f64 * (n + k + 1) as f64);
            sum += term;
            k += 1;
            if term.abs() <= 1e-17 * sum.abs().max(1e-300) && k as f64 > half {
                break;
            }
        }
        sum
    } else {
        let m = (2 * (n as usize + x.abs().ceil() as usize) + 64).next_power_of_two();
        let mut acc = 0.0;
        for i in 0..m {
            let t = 2.0 * PI * i as f64 / m as f64;
            acc += (n as f64 * t - x * t.sin()).cos();
        }
        acc / m as f64
    }
}

/// Fubini amplitude ratio `B_n(sigma) = 2 J_n(n sigma) / (n sigma)` of the
/// n-th harmonic of an initially sinusoidal lossless plane wave.
pub fn fubini_harmonics(n: u32, sigma: f64) -> Result<f64> {
    if n == 0 {
        return Err(domain("harmonic index starts at 1"));
    }
    if !(sigma >= 0.0) {
        return Err(domain(format!("normalized distance must be non-negative, got {sigma}")));
    }
    if sigma >= 1.0 {
        return Err(Error::Validity(format!(
            "sigma = {sigma} is at or beyond shock formation; the Fubini series only holds for sigma < 1"
        )));
    }
    if sigma == 0.0 {
        return Ok(if n == 1 { 1.0 } else { 0.0 });
    }
    let x = n as f64 * sigma;
    Ok(2.0 * bessel_j(n, x) / x)
}

/// Rayleigh distance `k a^2 / 2` of a Gaussian source of 1/e radius `a`.
pub fn rayleigh_distance(src: &SourceWaveform, a: f64, medium: &Medium) -> f64 {
    let k = src.omega() / medium.c;
    0.5 * k * a * a
}

/// Linear paraxial on-axis amplitude of a Gaussian beam, `p0 / sqrt(1 + (z/z_R)^2)`.
pub fn analytic_gaussian_axis(src: &SourceWaveform, a: f64, medium: &Medium, z: f64) -> Result<f64> {
    src.validate()?;
    medium.validate()?;
    if !(a > 0.0) {
        return Err(domain(format!("source radius must be positive, got {a}")));
    }
    if !(z >= 0.0) {
        return Err(domain(format!("axial distance must be non-negative, got {z}")));
    }
    let zr = rayleigh_distance(src, a, medium);
    Ok(src.p0 / (1.0 + (z / zr).powi(2)).sqrt())
}
