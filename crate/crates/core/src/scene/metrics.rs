use std::fmt::Write as _;

use crate::dsp::{db10, dot, energy, mean_power};
use crate::error::{domain, Error, Result};

/// Cap applied to SI-SNR in both directions, dB.
pub const SI_SNR_CAP_DB: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub si_snr_db: f64,
    pub snr_gain_db: f64,
    pub rtf: f64,
    pub doa_err_deg: f64,
}

impl Metrics {
    pub fn validate(&self) -> Result<()> {
        let all = [self.si_snr_db, self.snr_gain_db, self.rtf, self.doa_err_deg];
        if all.iter().any(|v| !v.is_finite()) || self.rtf < 0.0 {
            return Err(Error::Validity(format!("invalid metrics {self:?}")));
        }
        Ok(())
    }
}

/// Rows of `scenario_id,si_snr_db,snr_gain_db,rtf,doa_err_deg`.
pub fn metrics_csv(rows: &[(String, Metrics)]) -> String {
    let mut s = String::from("scenario_id,si_snr_db,snr_gain_db,rtf,doa_err_deg\n");
    for (id, m) in rows {
        let _ = writeln!(s, "{id},{:.6},{:.6},{:.6},{:.6}", m.si_snr_db, m.snr_gain_db, m.rtf, m.doa_err_deg);
    }
    s
}

/// Scales `noise` so that `clean` over scaled noise has power ratio
/// `snr_db`; returns the mixture and the applied noise gain.
pub fn mix_at_snr(clean: &[f64], noise: &[f64], snr_db: f64) -> Result<(Vec<f64>, f64)> {
    if clean.len() != noise.len() {
        return Err(Error::Data(format!("clean has {} samples, noise {}", clean.len(), noise.len())));
    }
    let pc = mean_power(clean);
    let pn = mean_power(noise);
    if !(pc > 0.0) {
        return Err(domain("clean signal has zero power"));
    }
    if !(pn > 0.0) {
        return Err(domain("noise has zero power"));
    }
    let gain = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok((clean.iter().zip(noise).map(|(c, n)| c + gain * n).collect(), gain))
}

/// Power-ratio SNR in dB.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    db10(energy(signal) / energy(noise))
}

/// Scale-invariant SNR of `estimate` against `reference`, clamped to ±60 dB.
pub fn si_snr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::Data(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let rr = energy(reference);
    if !(rr > 0.0) {
        return Err(domain("reference has zero energy"));
    }
    let a = dot(estimate, reference) / rr;
    let target = rr * a * a;
    let resid: f64 = estimate.iter().zip(reference).map(|(e, r)| (e - a * r).powi(2)).sum();
    // floating-point residue of an exact multiple is treated as zero
    let noise_floor = 1e-24 * energy(estimate);
    if resid <= noise_floor {
        return Ok(if target > 0.0 { SI_SNR_CAP_DB } else { -SI_SNR_CAP_DB });
    }
    if target == 0.0 {
        return Ok(-SI_SNR_CAP_DB);
    }
    Ok(db10(target / resid).clamp(-SI_SNR_CAP_DB, SI_SNR_CAP_DB))
}

/// Processing time over audio time.
pub fn measure_rtf(processing_s: f64, audio_s: f64) -> Result<f64> {
    if !(audio_s > 0.0) {
        return Err(domain(format!("audio duration must be positive, got {audio_s}")));
    }
    if !(processing_s >= 0.0) {
        return Err(domain(format!("processing time must be non-negative, got {processing_s}")));
    }
    Ok(processing_s / audio_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.1).sin() + 0.3 * (i as f64 * 0.37).cos()).collect()
    }

    #[test]
    fn si_snr_cap_and_scale() {
        let x = tone(1000);
        assert_eq!(si_snr(&x, &x).unwrap(), 60.0);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_snr(&x, &y).unwrap(), 60.0);
        assert!(si_snr(&[0.0; 10], &x[..10]).is_err());
    }

    #[test]
    fn si_snr_orthogonal_noise() {
        // alternating +-1 is orthogonal to a constant; scale it to equal power
        let n = 1000;
        let r = vec![1.0; n];
        let e: Vec<f64> = (0..n).map(|i| 1.0 + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(si_snr(&r, &e).unwrap().abs() < 0.1);
    }

    #[test]
    fn mix_hits_requested_snr() {
        let clean = tone(4000);
        let noise: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
        for target in [0.0, 5.0, 20.0] {
            let (mix, g) = mix_at_snr(&clean, &noise, target).unwrap();
            let scaled: Vec<f64> = noise.iter().map(|v| v * g).collect();
            assert!((snr_db(&clean, &scaled) - target).abs() < 0.01);
            let resid: Vec<f64> = mix.iter().zip(&clean).map(|(m, c)| m - c).collect();
            assert!((snr_db(&clean, &resid) - target).abs() < 0.01);
        }
        let (_, g) = mix_at_snr(&clean, &noise, 20.0).unwrap();
        let pn = mean_power(&noise) * g * g;
        assert!((pn - mean_power(&clean) / 100.0).abs() < 1e-12);
        assert!(mix_at_snr(&vec![0.0; 4000], &noise, 0.0).is_err());
    }

    #[test]
    fn rtf_definition() {
        assert_eq!(measure_rtf(0.5, 10.0).unwrap(), 0.05);
        assert_eq!(measure_rtf(3.0, 3.0).unwrap(), 1.0);
        assert!(measure_rtf(1.0, 0.0).is_err());
    }

    #[test]
    fn csv_header() {
        let m = Metrics { si_snr_db: 1.0, snr_gain_db: 2.0, rtf: 0.1, doa_err_deg: 0.5 };
        assert!(metrics_csv(&[("a".into(), m)]).starts_with("scenario_id,si_snr_db,snr_gain_db,rtf,doa_err_deg\na,1.000000"));
    }

    proptest! {
        #[test]
        fn si_snr_scale_invariant(a in 0.01f64..100.0, seed in 0u64..1000) {
            let r: Vec<f64> = (0..256).map(|i| ((i as u64 * 2654435761 + seed) % 1024) as f64 / 512.0 - 1.0).collect();
            let e: Vec<f64> = r.iter().enumerate().map(|(i, v)| v + 0.3 * ((i * 31 % 17) as f64 / 8.0 - 1.0)).collect();
            let scaled: Vec<f64> = e.iter().map(|v| a * v).collect();
            prop_assert!((si_snr(&r, &e).unwrap() - si_snr(&r, &scaled).unwrap()).abs() < 1e-9);
        }
    }
}
