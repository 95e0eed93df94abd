use super::SubbandState;
use crate::error::{config, domain, Result};

/// Elementwise gain `mask[m][k]` in `[0, 1]` applied to `noisy`.
pub fn apply_spectral_mask(noisy: &SubbandState, mask: &[Vec<f64>]) -> Result<SubbandState> {
    if mask.len() != noisy.n_bands() || mask.iter().zip(&noisy.bands).any(|(a, b)| a.len() != b.len()) {
        return Err(config("mask shape does not match the subband state"));
    }
    if let Some(v) = mask.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(domain(format!("mask value {v} outside [0, 1]")));
    }
    let bands = noisy
        .bands
        .iter()
        .zip(mask)
        .map(|(b, g)| b.iter().zip(g).map(|(x, g)| x * g).collect())
        .collect();
    Ok(SubbandState { bands, frame_index: noisy.frame_index })
}

/// Oracle binary mask: 1 where the target exceeds the interferer by
/// `threshold_db`, else 0.
pub fn ideal_binary_mask(target: &SubbandState, interferer: &SubbandState, threshold_db: f64) -> Result<Vec<Vec<f64>>> {
    if target.n_bands() != interferer.n_bands() || target.n_frames() != interferer.n_frames() {
        return Err(config("target and interferer subband shapes differ"));
    }
    let ratio = 10f64.powf(threshold_db / 10.0);
    Ok(target
        .bands
        .iter()
        .zip(&interferer.bands)
        .map(|(t, n)| t.iter().zip(n).map(|(t, n)| if t.norm_sqr() > ratio * n.norm_sqr() { 1.0 } else { 0.0 }).collect())
        .collect())
}
