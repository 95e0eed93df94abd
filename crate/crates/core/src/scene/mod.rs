//! Synthetic acoustic scenes and evaluation metrics.

mod metrics;
mod noise;
mod rir;
mod speech;

pub use metrics::{measure_rtf, metrics_csv, mix_at_snr, si_snr, snr_db, Metrics, SI_SNR_CAP_DB};
pub use noise::{band_power, shaped_noise, speech_psd, synth_noise, NoiseKind, BABBLE_MOD_HZ, BABBLE_VOICES};
pub use rir::{direct_delay, image_source_rir};
pub use speech::speech_like;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::fft_convolve;
use crate::error::{config, domain, Result};
use crate::frontend::MicArrayGeometry;

/// Independent generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for scene `index` of a set rooted at `seed`; lets scenes be
/// rendered in any order or in parallel with identical results.
pub fn scene_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed, 0x5CE4_E000 + index).next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub dims: [f64; 3],
    pub reflection: f64,
    pub max_order: u32,
    pub c: f64,
    pub fs: f64,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(config(format!("room dimensions must be positive, got {:?}", self.dims)));
        }
        if !(0.0..1.0).contains(&self.reflection) {
            return Err(config(format!("reflection {} outside [0, 1)", self.reflection)));
        }
        if !(self.c > 0.0) || !(self.fs > 0.0) {
            return Err(config("room sound speed and sample rate must be positive"));
        }
        Ok(())
    }

    pub(crate) fn check_inside(&self, p: [f64; 3], what: &str) -> Result<()> {
        if p.iter().zip(&self.dims).all(|(x, d)| *x > 0.0 && x < d) {
            Ok(())
        } else {
            Err(domain(format!("{what} at {p:?} is not strictly inside the room {:?}", self.dims)))
        }
    }
}

/// Far-end loudspeaker playing an independent talker into the room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchoSpec {
    pub loudspeaker_pos: [f64; 3],
    /// Echo power relative to the target at mic 0, dB.
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub room: RoomSpec,
    pub source_pos: [f64; 3],
    pub mic_positions: Vec<[f64; 3]>,
    pub noise_kind: NoiseKind,
    /// Target-to-noise power ratio at mic 0, dB.
    pub snr_db: f64,
    pub seed: u64,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo: Option<EchoSpec>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(config(format!("duration must be positive, got {}", self.duration)));
        }
        if !self.snr_db.is_finite() {
            return Err(config("snr_db must be finite"));
        }
        self.room.check_inside(self.source_pos, "source").map_err(|e| config(e.to_string()))?;
        for (i, m) in self.mic_positions.iter().enumerate() {
            self.room.check_inside(*m, &format!("mic {i}")).map_err(|e| config(e.to_string()))?;
        }
        if let Some(e) = &self.echo {
            self.room.check_inside(e.loudspeaker_pos, "loudspeaker").map_err(|e| config(e.to_string()))?;
            if !e.level_db.is_finite() {
                return Err(config("echo level must be finite"));
            }
        }
        self.geometry()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<MicArrayGeometry> {
        MicArrayGeometry::new(self.mic_positions.clone(), self.room.fs, self.room.c)
    }

    /// Source azimuth seen from the array centroid, degrees in `[0, 360)`.
    pub fn true_azimuth(&self) -> Result<f64> {
        let c = self.geometry()?.centroid();
        Ok((self.source_pos[1] - c[1]).atan2(self.source_pos[0] - c[0]).to_degrees().rem_euclid(360.0))
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.room.fs).round() as usize
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A rendered scene; every multichannel field is indexed `[mic][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub fs: f64,
    pub dry: Vec<f64>,
    /// Reverberant target at each mic.
    pub target: Vec<Vec<f64>>,
    /// Scaled noise at each mic.
    pub noise: Vec<Vec<f64>>,
    pub echo: Option<Vec<Vec<f64>>>,
    pub far: Option<Vec<f64>>,
    /// Sum of target, noise and echo.
    pub mics: Vec<Vec<f64>>,
    pub noise_gain: f64,
}

const STREAM_SOURCE: u64 = 1;
const STREAM_FAR: u64 = 2;
const STREAM_LAYOUT: u64 = 0x1A70_0000;

fn noise_seed(seed: u64, variant: u64, mic: usize) -> u64 {
    use rand::RngCore;
    substream(seed, (variant << 20) | (1 << 16) | mic as u64).next_u64()
}

/// Renders `cfg` with its noise drawn from `variant` (0 for the canonical scene).
pub fn render_scene_variant(cfg: &ScenarioConfig, variant: u64) -> Result<RenderedScene> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let fs = cfg.room.fs;
    use rand::RngCore;
    let dry = speech_like(cfg.duration, fs, substream(cfg.seed, STREAM_SOURCE).next_u64());
    let convolve = |sig: &[f64], from: [f64; 3], to: [f64; 3]| -> Result<Vec<f64>> {
        let h = image_source_rir(&cfg.room, from, to)?;
        let mut y = fft_convolve(sig, &h);
        y.truncate(n);
        Ok(y)
    };
    let target: Vec<Vec<f64>> =
        cfg.mic_positions.iter().map(|m| convolve(&dry, cfg.source_pos, *m)).collect::<Result<_>>()?;
    let (noise, noise_gain) = render_noise(cfg, &target[0], variant)?;
    let (echo, far) = match &cfg.echo {
        Some(e) => {
            let far = speech_like(cfg.duration, fs, substream(cfg.seed, STREAM_FAR).next_u64());
            let raw: Vec<Vec<f64>> =
                cfg.mic_positions.iter().map(|m| convolve(&far, e.loudspeaker_pos, *m)).collect::<Result<_>>()?;
            let pt = crate::dsp::mean_power(&target[0]);
            let pe = crate::dsp::mean_power(&raw[0]);
            let g = if pe > 0.0 { (pt * 10f64.powf(e.level_db / 10.0) / pe).sqrt() } else { 0.0 };
            let echo: Vec<Vec<f64>> = raw.iter().map(|x| x.iter().map(|v| v * g).collect()).collect();
            (Some(echo), Some(far))
        }
        None => (None, None),
    };
    let mics = (0..target.len())
        .map(|i| {
            let mut x: Vec<f64> = target[i].iter().zip(&noise[i]).map(|(a, b)| a + b).collect();
            if let Some(e) = &echo {
                x.iter_mut().zip(&e[i]).for_each(|(v, e)| *v += e);
            }
            x
        })
        .collect();
    Ok(RenderedScene { fs, dry, target, noise, echo, far, mics, noise_gain })
}

/// Noise for every mic, scaled so that `target_ref` over the first channel
/// meets the configured SNR. Returns the noise and the applied gain.
pub fn render_noise(cfg: &ScenarioConfig, target_ref: &[f64], variant: u64) -> Result<(Vec<Vec<f64>>, f64)> {
    let fs = cfg.room.fs;
    let raw: Vec<Vec<f64>> = (0..cfg.mic_positions.len())
        .map(|i| synth_noise(cfg.noise_kind, cfg.duration, fs, noise_seed(cfg.seed, variant, i)))
        .collect::<Result<_>>()?;
    let (_, gain) = mix_at_snr(target_ref, &raw[0], cfg.snr_db)?;
    Ok((raw.iter().map(|x| x.iter().map(|v| v * gain).collect()).collect(), gain))
}

/// Variant `index` of `base` with the array translated to a random spot and
/// the source at a random azimuth, 1 to 2 m away on the array's plane. The
/// array shape, room and noise settings are kept; the seed is re-derived.
pub fn randomized_scenario(base: &ScenarioConfig, index: u64) -> Result<ScenarioConfig> {
    use rand::Rng;
    base.validate()?;
    let centre = base.geometry()?.centroid();
    let offsets: Vec<[f64; 3]> =
        base.mic_positions.iter().map(|m| [m[0] - centre[0], m[1] - centre[1], m[2] - centre[2]]).collect();
    let reach = offsets.iter().map(|o| o[0].hypot(o[1])).fold(0.0, f64::max);
    let dims = base.room.dims;
    let margin = 0.5;
    let mut rng = substream(base.seed, STREAM_LAYOUT + index);
    for _ in 0..10_000 {
        let c = [
            rng.random_range(margin + reach..dims[0] - margin - reach),
            rng.random_range(margin + reach..dims[1] - margin - reach),
            centre[2],
        ];
        let az = rng.random_range(0.0..std::f64::consts::TAU);
        let r = rng.random_range(1.0..2.0);
        let src = [c[0] + r * az.cos(), c[1] + r * az.sin(), c[2]];
        if src[0] < margin || src[0] > dims[0] - margin || src[1] < margin || src[1] > dims[1] - margin {
            continue;
        }
        let mut cfg = base.clone();
        cfg.mic_positions = offsets.iter().map(|o| [c[0] + o[0], c[1] + o[1], c[2] + o[2]]).collect();
        cfg.source_pos = src;
        cfg.seed = scene_seed(base.seed, index);
        if let Some(e) = &cfg.echo {
            if cfg.room.check_inside(e.loudspeaker_pos, "loudspeaker").is_err() {
                cfg.echo = None;
            }
        }
        cfg.validate()?;
        return Ok(cfg);
    }
    Err(config("room too small to place a randomized source 1 to 2 m from the array"))
}

pub fn render_scene(cfg: &ScenarioConfig) -> Result<RenderedScene> {
    render_scene_variant(cfg, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn demo() -> ScenarioConfig {
        let room = RoomSpec { dims: [6.0, 5.0, 3.0], reflection: 0.6, max_order: 2, c: 343.0, fs: 16_000.0 };
        let geom = MicArrayGeometry::circular(4, 0.05, [3.0, 2.5, 1.2], 16_000.0, 343.0).unwrap();
        ScenarioConfig {
            room,
            source_pos: [4.5, 3.5, 1.2],
            mic_positions: geom.positions,
            noise_kind: NoiseKind::Pink,
            snr_db: 5.0,
            seed: 42,
            duration: 0.5,
            echo: Some(EchoSpec { loudspeaker_pos: [1.0, 1.0, 1.0], level_db: 0.0 }),
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = demo();
        let text = cfg.to_toml();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
        let mut bad = text.replace("noise_kind = \"pink\"", "noise_kind = \"traffic\"");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
        bad = format!("{text}\nunexpected = 1\n");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn render_is_reproducible_and_hits_snr() {
        let cfg = demo();
        let a = render_scene(&cfg).unwrap();
        assert_eq!(a, render_scene(&cfg).unwrap());
        assert!((snr_db(&a.target[0], &a.noise[0]) - 5.0).abs() < 0.01);
        assert_ne!(a.noise, render_scene_variant(&cfg, 1).unwrap().noise);
        assert_eq!(a.target, render_scene_variant(&cfg, 1).unwrap().target);
    }

    #[test]
    fn positions_outside_room_rejected() {
        let mut cfg = demo();
        cfg.source_pos = [7.0, 1.0, 1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = demo();
        cfg.duration = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn randomized_layouts_keep_shape_and_range() {
        let base = demo();
        let shape = |c: &ScenarioConfig| {
            let g = c.geometry().unwrap().centroid();
            c.mic_positions.iter().map(|m| [m[0] - g[0], m[1] - g[1], m[2] - g[2]]).collect::<Vec<_>>()
        };
        for i in 0..20 {
            let c = randomized_scenario(&base, i).unwrap();
            assert_eq!(c, randomized_scenario(&base, i).unwrap());
            let g = c.geometry().unwrap().centroid();
            let d = (c.source_pos[0] - g[0]).hypot(c.source_pos[1] - g[1]);
            assert!((1.0..2.0).contains(&d));
            for (a, b) in shape(&c).iter().zip(shape(&base)) {
                assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12));
            }
        }
        assert_ne!(randomized_scenario(&base, 0).unwrap(), randomized_scenario(&base, 1).unwrap());
    }

    #[test]
    fn azimuth_from_centroid() {
        let cfg = demo();
        assert!((cfg.true_azimuth().unwrap() - 1f64.atan2(1.5).to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn reverberation_then_mixing_keeps_measured_snr() {
        let cfg = demo();
        let s = render_scene(&cfg).unwrap();
        // mixing the dry source at the measured reverberant powers gives the same SNR
        let pt = crate::dsp::mean_power(&s.target[0]);
        let pd = crate::dsp::mean_power(&s.dry);
        let dry_scaled: Vec<f64> = s.dry.iter().map(|v| v * (pt / pd).sqrt()).collect();
        assert!((snr_db(&dry_scaled, &s.noise[0]) - snr_db(&s.target[0], &s.noise[0])).abs() < 0.01);
    }
}
