//! Small signal-processing building blocks shared across modules.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Half-width of the fractional-delay interpolator (8 taps total).
pub const FRAC_HALF_TAPS: isize = 4;

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Kaiser window of length `n`.
pub fn kaiser(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let half = (n - 1) as f64 / 2.0;
    (0..n)
        .map(|i| {
            let t = (i as f64 - half) / half;
            bessel_i0(beta * (1.0 - t * t).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Kaiser beta giving roughly `atten_db` of stopband attenuation.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Linear-phase lowpass by the window method. `cutoff` is in cycles/sample
/// (0.5 is Nyquist); the DC gain is `2 * cutoff * sum(window)`-normalized to one.
pub fn windowed_sinc_lowpass(n_taps: usize, cutoff: f64, beta: f64) -> Vec<f64> {
    let win = kaiser(n_taps, beta);
    let center = (n_taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..n_taps)
        .map(|i| 2.0 * cutoff * sinc(2.0 * cutoff * (i as f64 - center)) * win[i])
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    h
}

/// Taps of the 8-tap Hann-windowed sinc interpolator for fractional offset
/// `frac` in [0, 1). Tap `i` multiplies sample `floor + i - 3`.
pub fn frac_delay_taps(frac: f64) -> [f64; 8] {
    let mut taps = [0.0; 8];
    if frac == 0.0 {
        taps[3] = 1.0;
        return taps;
    }
    let mut sum = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        let u = (i as isize - 3) as f64 - frac;
        let w = 0.5 * (1.0 + (PI * u / FRAC_HALF_TAPS as f64).cos());
        *t = sinc(u) * w;
        sum += *t;
    }
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Reads `x` at fractional index `pos`, treating samples outside the slice as zero.
pub fn sample_at(x: &[f64], pos: f64) -> f64 {
    let base = pos.floor();
    let frac = pos - base;
    let base = base as isize;
    let taps = frac_delay_taps(frac);
    let n = x.len() as isize;
    let mut acc = 0.0;
    for (i, t) in taps.iter().enumerate() {
        let idx = base + i as isize - 3;
        if idx >= 0 && idx < n {
            acc += t * x[idx as usize];
        }
    }
    acc
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        energy(x) / x.len() as f64
    }
}

pub fn db10(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full linear convolution via FFT. Output length is `a.len() + b.len() - 1`.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(n, Complex64::default());
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(n, Complex64::default());
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.iter().take(out_len).map(|c| c.re * scale).collect()
}

/// Compensated (Kahan-Babuska) summation.
pub fn kahan_sum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_delay_is_exact() {
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        for i in 4..28 {
            assert_eq!(sample_at(&x, i as f64), x[i]);
        }
    }

    #[test]
    fn half_sample_interpolation_of_slow_sine() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.1).sin()).collect();
        let v = sample_at(&x, 30.5);
        assert!((v - (30.5f64 * 0.1).sin()).abs() < 2e-3);
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let a: Vec<f64> = (0..100).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let b: Vec<f64> = (0..50).map(|i| ((i * 5) % 11) as f64 - 5.0).collect();
        let fast = fft_convolve(&a, &b);
        for (n, v) in fast.iter().enumerate() {
            let mut d = 0.0;
            for (i, &x) in a.iter().enumerate() {
                if n >= i && n - i < b.len() {
                    d += x * b[n - i];
                }
            }
            assert!((v - d).abs() < 1e-9);
        }
    }

    #[test]
    fn lowpass_has_unit_dc_gain() {
        let h = windowed_sinc_lowpass(129, 0.1, kaiser_beta(70.0));
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
