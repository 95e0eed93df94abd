use std::f64::consts::PI;

use rand::Rng;

use super::substream;

/// Formant triples (Hz) cycled through by the synthetic talker.
const VOWELS: [[f64; 3]; 5] = [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0], [530.0, 1840.0, 2480.0], [570.0, 840.0, 2410.0], [300.0, 870.0, 2240.0]];

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .map(|&fc| {
            let bw = 80.0 + 0.05 * fc;
            1.0 / (1.0 + ((f - fc) / bw).powi(2))
        })
        .sum::<f64>()
        + 0.02
}

/// Speech-like test signal: voiced syllables of 120-320 ms separated by
/// 40-200 ms pauses, each a harmonic series on a drifting pitch with
/// vowel formant weighting and a raised-cosine envelope. Peak-normalized
/// to 0.5. Deterministic in `seed`.
pub fn speech_like(duration: f64, fs: f64, seed: u64) -> Vec<f64> {
    let n = (duration * fs).round() as usize;
    let mut out = vec![0.0; n];
    let mut rng = substream(seed, 0);
    let mut t0 = (rng.random::<f64>() * 0.1 * fs) as usize;
    while t0 < n {
        let len = ((0.12 + 0.2 * rng.random::<f64>()) * fs) as usize;
        let pause = ((0.04 + 0.16 * rng.random::<f64>()) * fs) as usize;
        let f0 = 100.0 + 120.0 * rng.random::<f64>();
        let glide = 0.8 + 0.4 * rng.random::<f64>();
        let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
        let level = 0.5 + rng.random::<f64>();
        let n_harm = ((0.45 * fs) / f0) as usize;
        let amps: Vec<f64> = (1..=n_harm).map(|h| formant_gain(h as f64 * f0, &vowel) / (h as f64).sqrt()).collect();
        let mut phase = 0.0;
        for i in 0..len.min(n - t0) {
            let u = i as f64 / len as f64;
            let f = f0 * (1.0 + (glide - 1.0) * u);
            phase += 2.0 * PI * f / fs;
            let env = level * 0.5 * (1.0 - (2.0 * PI * u).cos());
            let mut s = 0.0;
            for (h, a) in amps.iter().enumerate() {
                if (h + 1) as f64 * f < 0.45 * fs {
                    s += a * ((h + 1) as f64 * phase).sin();
                }
            }
            out[t0 + i] += env * s;
        }
        t0 += len + pause;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = speech_like(1.0, 16_000.0, 4);
        assert_eq!(a, speech_like(1.0, 16_000.0, 4));
        assert_eq!(a.len(), 16_000);
        assert!(a.iter().all(|v| v.abs() <= 0.5 + 1e-12));
        assert!(a.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn has_pauses() {
        let a = speech_like(2.0, 16_000.0, 5);
        let silent = a.chunks(160).filter(|c| c.iter().all(|v| *v == 0.0)).count();
        assert!(silent > 5);
    }
}
