use crate::error::{config, domain, Error, Result};

/// Decision-directed smoothing constant of the a-priori SNR tracker.
pub const SNR_SMOOTHING: f64 = 0.98;

/// Minimum-statistics window, in frames.
const NOISE_WINDOW: usize = 64;

/// Per-frame convex weights: `alpha[k][m]` applies to samples
/// `k * frame_len .. (k + 1) * frame_len` of channel `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    pub alpha: Vec<Vec<f64>>,
    pub frame_len: usize,
}

impl MixtureWeights {
    pub fn uniform(channels: usize, frames: usize, frame_len: usize) -> Self {
        Self { alpha: vec![vec![1.0 / channels as f64; channels]; frames], frame_len }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 {
            return Err(config("mixture frame length must be positive"));
        }
        for (k, row) in self.alpha.iter().enumerate() {
            if row.iter().any(|a| !(*a >= 0.0)) {
                return Err(domain(format!("negative mixture weight in frame {k}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(domain(format!("mixture weights of frame {k} sum to {s}")));
            }
        }
        Ok(())
    }
}

/// `y = sum_m alpha_m(k) x_m` frame by frame.
pub fn dynamic_mix(weights: &MixtureWeights, channels: &[Vec<f64>]) -> Result<Vec<f64>> {
    weights.validate()?;
    let len = channels.first().map_or(0, Vec::len);
    if channels.is_empty() || channels.iter().any(|c| c.len() != len) {
        return Err(Error::Data("mixture channels must be non-empty and equally long".into()));
    }
    let frames = len.div_ceil(weights.frame_len);
    if weights.alpha.len() != frames || weights.alpha.iter().any(|r| r.len() != channels.len()) {
        return Err(config(format!(
            "weights cover {} frames, signal needs {frames} frames of {} channels",
            weights.alpha.len(),
            channels.len()
        )));
    }
    let mut y = vec![0.0; len];
    for (k, row) in weights.alpha.iter().enumerate() {
        let span = k * weights.frame_len..((k + 1) * weights.frame_len).min(len);
        for (a, x) in row.iter().zip(channels) {
            if *a == 0.0 {
                continue;
            }
            for (out, v) in y[span.clone()].iter_mut().zip(&x[span.clone()]) {
                *out += a * v;
            }
        }
    }
    Ok(y)
}

/// Weights proportional to each channel's a-priori SNR estimate.
///
/// Noise power per channel is the minimum of the recent frame powers
/// (minimum statistics). The a-priori SNR is smoothed recursively,
/// `xi(k) = a * xi(k-1) + (1 - a) * max(P(k) / N(k) - 1, 0)` with
/// `a = SNR_SMOOTHING`, so weights hold through short pauses. Both
/// estimates start from the first noise window (the noise minimum over that
/// window, the recursion from the mean of its input there). Frames where
/// every estimate is zero fall back to equal weights.
pub fn snr_tracking_weights(channels: &[Vec<f64>], frame_len: usize) -> Result<MixtureWeights> {
    if frame_len == 0 || channels.is_empty() {
        return Err(config("need at least one channel and a positive frame length"));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Data("mixture channels must be equally long".into()));
    }
    let frames = len.div_ceil(frame_len);
    let n = channels.len();
    let power: Vec<Vec<f64>> = channels
        .iter()
        .map(|x| {
            x.chunks(frame_len).map(|c| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).collect()
        })
        .collect();
    let mut alpha = vec![vec![0.0; n]; frames];
    for m in 0..n {
        let p = &power[m];
        let warm = NOISE_WINDOW.min(frames);
        let noise_at = |k: usize| {
            let lo = k.saturating_sub(NOISE_WINDOW - 1);
            let hi = k.max(warm - 1);
            p[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min).max(f64::MIN_POSITIVE)
        };
        let ml = |k: usize| (p[k] / noise_at(k) - 1.0).max(0.0);
        let mut xi = (0..warm).map(ml).sum::<f64>() / warm as f64;
        for k in 0..frames {
            xi = SNR_SMOOTHING * xi + (1.0 - SNR_SMOOTHING) * ml(k);
            alpha[k][m] = xi;
        }
    }
    for row in &mut alpha {
        let s: f64 = row.iter().sum();
        if s > 0.0 && s.is_finite() {
            row.iter_mut().for_each(|a| *a /= s);
        } else {
            row.iter_mut().for_each(|a| *a = 1.0 / n as f64);
        }
    }
    Ok(MixtureWeights { alpha, frame_len })
}
