use std::f64::consts::PI;

use super::TimeWaveform;
use crate::error::{domain, Error, Result};

/// Magnitudes of the Fourier coefficients at `n f0`, `n = 1..=n_max`.
///
/// Normalized so a unit-amplitude sine at `f0` yields `[1, 0, ...]`. The
/// waveform must span an integer number of `f0` periods.
pub fn harmonic_spectrum(w: &TimeWaveform, f0: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(f0 > 0.0) {
        return Err(domain(format!("f0 must be positive, got {f0}")));
    }
    let len = w.samples.len();
    let periods = w.duration() * f0;
    let whole = periods.round();
    if whole < 1.0 || (periods - whole).abs() > 1e-6 * whole.max(1.0) {
        return Err(Error::Framing(format!(
            "waveform spans {periods} periods of f0, expected a whole number"
        )));
    }
    let whole = whole as usize;
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let bin = n * whole;
        if 2 * bin >= len {
            out.push(0.0);
            continue;
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (k, &x) in w.samples.iter().enumerate() {
            // Reduce the phase index exactly before converting to an angle.
            let idx = (bin * k) % len;
            let ang = 2.0 * PI * idx as f64 / len as f64;
            re += x * ang.cos();
            im -= x * ang.sin();
        }
        out.push(2.0 * (re * re + im * im).sqrt() / len as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::fubini_harmonics;

    fn periodic(n: usize, f: impl Fn(f64) -> f64) -> TimeWaveform {
        let dt = 1.0 / n as f64;
        TimeWaveform::new((0..n).map(|i| f(i as f64 * dt)).collect(), dt).unwrap()
    }

    #[test]
    fn pure_sine() {
        let w = periodic(256, |t| 2.0 * (2.0 * PI * t).sin());
        let s = harmonic_spectrum(&w, 1.0, 3).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-9 && s[1].abs() < 1e-9 && s[2].abs() < 1e-9);
    }

    #[test]
    fn sine_plus_second_harmonic() {
        let w = periodic(256, |t| (2.0 * PI * t).sin() + 0.5 * (4.0 * PI * t + 0.3).cos());
        let s = harmonic_spectrum(&w, 1.0, 3).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-9);
        assert!((s[1] - 0.5).abs() < 1e-9);
        assert!(s[2].abs() < 1e-9);
    }

    #[test]
    fn fubini_waveform() {
        // Implicit simple-wave solution p = sin(phi + sigma p), solved per sample by Newton.
        let sigma = 0.5;
        let w = periodic(2048, |t| {
            let phi = 2.0 * PI * t;
            let mut p = phi.sin();
            for _ in 0..60 {
                let g = p - (phi + sigma * p).sin();
                let dg = 1.0 - sigma * (phi + sigma * p).cos();
                p -= g / dg;
            }
            p
        });
        let s = harmonic_spectrum(&w, 1.0, 3).unwrap();
        for n in 1..=3 {
            let b = fubini_harmonics(n as u32, sigma).unwrap();
            assert!((s[n - 1] - b).abs() < 1e-3, "n={n}: {} vs {b}", s[n - 1]);
        }
    }

    #[test]
    fn non_integer_periods_rejected() {
        let w = periodic(100, |t| t);
        assert!(matches!(harmonic_spectrum(&w, 1.5, 2), Err(Error::Framing(_))));
    }
}
