//! Front-end tuning environment: each step applies parameter increments,
//! runs the chain on the next chunk of a rendered scene and scores it.

use serde::{Deserialize, Serialize};

use crate::dsp::energy;
use crate::error::{config, domain, Error, Result};
use crate::frontend::{srp_localize, AzimuthGrid, FilterBankSpec, FrontEnd, FrontEndParams, MicArrayGeometry};
use crate::scene::{band_power, render_noise, render_scene, si_snr, ScenarioConfig};

/// Lowest and highest band gain, dB.
pub const GAIN_RANGE_DB: (f64, f64) = (-12.0, 6.0);
/// Largest step size the environment will set.
pub const MU_MAX: f64 = 1.0;
/// SI-SNR gain range mapped onto `[0, 1]` for the quality term, dB.
pub const QUALITY_RANGE_DB: (f64, f64) = (-10.0, 30.0);
/// Arithmetic throughput assumed by the latency model, operations per second.
pub const NOMINAL_OPS_PER_S: f64 = 1e9;

/// Bands for the observation's output/input power ratios, Hz.
const OBS_BANDS: [(f64, f64); 4] = [(0.0, 1000.0), (1000.0, 2000.0), (2000.0, 4000.0), (4000.0, f64::INFINITY)];
/// Samples of each chunk scanned for the localization confidence.
const SRP_WINDOW: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub w_quality: f64,
    pub w_latency: f64,
    pub w_energy: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { w_quality: 0.8, w_latency: 0.1, w_energy: 0.1 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_quality, self.w_latency, self.w_energy];
        if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(config(format!("reward weights {w:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

/// Largest magnitude of each increment per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBounds {
    pub mu_step: f64,
    pub gain_step_db: f64,
    pub steer_step_deg: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self { mu_step: 0.25, gain_step_db: 1.5, steer_step_deg: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    /// Samples per step; a multiple of `hop`.
    pub chunk: usize,
    pub episode_steps: usize,
    pub m_bands: usize,
    pub hop: usize,
    pub taps_per_band: usize,
    pub aec_taps: usize,
    pub eps_reg: f64,
    /// Step size at the start of each episode.
    pub mu_init: f64,
    /// Initial steering error relative to the true source azimuth, degrees.
    pub steer_offset_deg: f64,
    /// Band gains are trimmed in this many contiguous groups.
    pub gain_groups: usize,
    pub srp_points: usize,
    pub weights: RewardWeights,
    pub bounds: ActionBounds,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            chunk: 2000,
            episode_steps: 8,
            m_bands: 32,
            hop: 16,
            taps_per_band: 12,
            aec_taps: 16,
            eps_reg: 1e-6,
            mu_init: 0.0,
            steer_offset_deg: 40.0,
            gain_groups: 4,
            srp_points: 36,
            weights: RewardWeights::default(),
            bounds: ActionBounds::default(),
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.hop == 0 || self.chunk == 0 || !self.chunk.is_multiple_of(self.hop) {
            return Err(config(format!("chunk {} must be a positive multiple of hop {}", self.chunk, self.hop)));
        }
        if self.episode_steps == 0 || self.gain_groups == 0 || self.gain_groups > self.m_bands / 2 + 1 {
            return Err(config("episode_steps and gain_groups must be positive, gain_groups at most m_bands/2 + 1"));
        }
        if !(0.0..=MU_MAX).contains(&self.mu_init) || !self.steer_offset_deg.is_finite() {
            return Err(config("mu_init outside [0, 1] or non-finite steering offset"));
        }
        let b = &self.bounds;
        if [b.mu_step, b.gain_step_db, b.steer_step_deg].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(config("action bounds must be positive"));
        }
        if self.srp_points < 3 {
            return Err(config("srp_points must be at least 3"));
        }
        Ok(())
    }

    pub fn act_dim(&self) -> usize {
        self.gain_groups + 2
    }

    pub fn obs_dim(&self) -> usize {
        OBS_BANDS.len() + 1 + self.gain_groups + 4
    }

    /// Per-component bound, in action order `[mu, gain groups.., steer]`.
    pub fn bound_vector(&self) -> Vec<f64> {
        let mut v = vec![self.bounds.mu_step];
        v.extend(std::iter::repeat_n(self.bounds.gain_step_db, self.gain_groups));
        v.push(self.bounds.steer_step_deg);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub obs: Vec<f64>,
}

/// Increments `[d_mu, d_gain_db per group.., d_steer_deg]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub deltas: Vec<f64>,
}

impl Action {
    pub fn zero(cfg: &TuningConfig) -> Self {
        Self { deltas: vec![0.0; cfg.act_dim()] }
    }

    /// Maps `[-1, 1]` components onto the bounds, clipping first.
    pub fn from_unit(cfg: &TuningConfig, unit: &[f64]) -> Self {
        Self { deltas: unit.iter().zip(cfg.bound_vector()).map(|(u, b)| u.clamp(-1.0, 1.0) * b).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub si_snr_gain_db: f64,
    pub rtf: f64,
}

/// Holds a rendered scenario and the running chain; noise is redrawn per episode.
#[derive(Clone)]
pub struct TuningEnv {
    cfg: TuningConfig,
    scenario: ScenarioConfig,
    geom: MicArrayGeometry,
    true_az: f64,
    target: Vec<Vec<f64>>,
    echo: Option<Vec<Vec<f64>>>,
    far: Option<Vec<f64>>,
    mics: Vec<Vec<f64>>,
    fe: FrontEnd,
    fe_ref: FrontEnd,
    params: FrontEndParams,
    gain_db: Vec<f64>,
    step: usize,
    obs: Vec<f64>,
}

impl TuningEnv {
    pub fn new(scenario: &ScenarioConfig, cfg: &TuningConfig) -> Result<Self> {
        cfg.validate()?;
        scenario.validate()?;
        let need = cfg.chunk * cfg.episode_steps;
        if scenario.n_samples() < need {
            return Err(config(format!(
                "scenario has {} samples, an episode needs {need}",
                scenario.n_samples()
            )));
        }
        let geom = scenario.geometry()?;
        if geom.n_mics() < 2 {
            return Err(config("tuning needs at least two microphones"));
        }
        let scene = render_scene(scenario)?;
        let spec = FilterBankSpec::design(cfg.m_bands, cfg.hop, cfg.taps_per_band, scenario.room.fs)?;
        let fe = FrontEnd::new(spec, geom.clone(), cfg.aec_taps, cfg.eps_reg)?;
        let true_az = scenario.true_azimuth()?;
        let mut env = Self {
            cfg: cfg.clone(),
            scenario: scenario.clone(),
            params: FrontEndParams::unity(fe.spec(), cfg.mu_init, true_az + cfg.steer_offset_deg),
            gain_db: vec![0.0; cfg.gain_groups],
            fe_ref: fe.clone(),
            fe,
            geom,
            true_az,
            target: scene.target,
            echo: scene.echo,
            far: scene.far,
            mics: scene.mics,
            step: 0,
            obs: Vec::new(),
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn config(&self) -> &TuningConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn params(&self) -> &FrontEndParams {
        &self.params
    }

    pub fn true_azimuth(&self) -> f64 {
        self.true_az
    }

    pub fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.cfg.act_dim()
    }

    /// Starts an episode on noise draw `variant`, with the mistuned initial parameters.
    pub fn reset(&mut self, variant: u64) -> Result<EnvState> {
        let (noise, _) = render_noise(&self.scenario, &self.target[0], variant)?;
        self.mics = (0..self.target.len())
            .map(|i| {
                let mut x: Vec<f64> = self.target[i].iter().zip(&noise[i]).map(|(a, b)| a + b).collect();
                if let Some(e) = &self.echo {
                    x.iter_mut().zip(&e[i]).for_each(|(v, e)| *v += e);
                }
                x
            })
            .collect();
        self.fe.reset();
        self.fe_ref.reset();
        self.params = FrontEndParams::unity(self.fe.spec(), self.cfg.mu_init, self.true_az + self.cfg.steer_offset_deg);
        self.gain_db = vec![0.0; self.cfg.gain_groups];
        self.step = 0;
        let band_ratio = vec![0.0; OBS_BANDS.len()];
        self.obs = self.observe(&band_ratio, 0)?;
        Ok(EnvState { obs: self.obs.clone() })
    }

    pub fn state(&self) -> EnvState {
        EnvState { obs: self.obs.clone() }
    }

    fn chunk_range(&self, k: usize) -> std::ops::Range<usize> {
        k * self.cfg.chunk..(k + 1) * self.cfg.chunk
    }

    fn observe(&self, band_ratio_db: &[f64], chunk: usize) -> Result<Vec<f64>> {
        let r = self.chunk_range(chunk.min(self.cfg.episode_steps - 1));
        let start = r.start;
        let window: Vec<Vec<f64>> = self.mics.iter().map(|m| m[start..start + SRP_WINDOW.min(r.len())].to_vec()).collect();
        let (rel, conf) = match srp_localize(&self.geom, &window, &AzimuthGrid::new(self.cfg.srp_points)?) {
            Ok(loc) => ((self.params.steer_deg - loc.azimuth_deg).to_radians(), loc.peak_to_mean().log10()),
            Err(Error::Data(_)) => (0.0, 0.0),
            Err(e) => return Err(e),
        };
        let mut obs: Vec<f64> = band_ratio_db.iter().map(|d| (d / 20.0).clamp(-3.0, 3.0)).collect();
        obs.push(self.params.mu);
        obs.extend(self.gain_db.iter().map(|g| g / 12.0));
        obs.extend([rel.sin(), rel.cos(), conf.clamp(0.0, 3.0)]);
        // episode progress lets the value estimate follow the scene's fixed script
        obs.push(chunk as f64 / self.cfg.episode_steps as f64);
        Ok(obs)
    }

    fn check_action(&self, action: &Action) -> Result<()> {
        let bounds = self.cfg.bound_vector();
        if action.deltas.len() != bounds.len() {
            return Err(Error::Bounds(format!("action has {} components, expected {}", action.deltas.len(), bounds.len())));
        }
        for (i, (d, b)) in action.deltas.iter().zip(&bounds).enumerate() {
            if !d.is_finite() || d.abs() > *b {
                return Err(Error::Bounds(format!("action component {i} = {d} outside [-{b}, {b}]")));
            }
        }
        Ok(())
    }

    /// Operation count of one chunk mapped to a real-time factor.
    fn modelled_rtf(&self) -> f64 {
        let spec = self.fe.spec();
        let frames = (self.cfg.chunk / spec.hop) as f64;
        let m = spec.m_bands as f64;
        let fft = 5.0 * m * m.log2();
        let bank = 2.0 * spec.prototype_len() as f64 + fft;
        let streams = if self.far.is_some() { 2.0 } else { 1.0 };
        let adapt = if self.far.is_some() { 1.0 + f64::from(u8::from(self.params.mu > 0.0)) } else { 0.0 };
        let ops = 16.0 * (self.geom.n_mics() * self.cfg.chunk) as f64
            + frames * (streams * bank + bank + m)
            + frames * m * self.cfg.aec_taps as f64 * 8.0 * adapt;
        ops / NOMINAL_OPS_PER_S / (self.cfg.chunk as f64 / self.scenario.room.fs)
    }

    /// Applies `action`, processes the next chunk and scores it. An
    /// out-of-bounds action leaves the environment untouched.
    pub fn step(&mut self, action: &Action) -> Result<(EnvState, StepOutcome)> {
        self.check_action(action)?;
        if self.step >= self.cfg.episode_steps {
            return Err(domain("episode finished; reset before stepping"));
        }
        let g = self.cfg.gain_groups;
        let d = &action.deltas;
        self.params.mu = (self.params.mu + d[0]).clamp(0.0, MU_MAX);
        for (gd, delta) in self.gain_db.iter_mut().zip(&d[1..=g]) {
            *gd = (*gd + delta).clamp(GAIN_RANGE_DB.0, GAIN_RANGE_DB.1);
        }
        let n_gains = self.params.gains.len();
        for (i, gain) in self.params.gains.iter_mut().enumerate() {
            *gain = 10f64.powf(self.gain_db[i * g / n_gains] / 20.0);
        }
        self.params.steer_deg = (self.params.steer_deg + d[g + 1]).rem_euclid(360.0);

        let r = self.chunk_range(self.step);
        let mics: Vec<Vec<f64>> = self.mics.iter().map(|m| m[r.clone()].to_vec()).collect();
        let target: Vec<Vec<f64>> = self.target.iter().map(|m| m[r.clone()].to_vec()).collect();
        let far = self.far.as_ref().map(|f| &f[r.clone()]);
        let out = self.fe.process_chunk(&self.params, &mics, far)?;
        let reference = self.fe_ref.process_chunk(&self.params, &target, None)?;

        let gain_db = if energy(&reference) > 0.0 && energy(&target[0]) > 0.0 {
            si_snr(&reference, &out)? - si_snr(&target[0], &mics[0])?
        } else {
            0.0
        };
        let quality = (gain_db.clamp(QUALITY_RANGE_DB.0, QUALITY_RANGE_DB.1) - QUALITY_RANGE_DB.0)
            / (QUALITY_RANGE_DB.1 - QUALITY_RANGE_DB.0);
        let rtf = self.modelled_rtf();
        let change = (d.iter().zip(self.cfg.bound_vector()).map(|(x, b)| (x / b).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        let w = &self.cfg.weights;
        let reward = w.w_quality * quality - w.w_latency * rtf.min(1.0) - w.w_energy * change;

        let fs = self.scenario.room.fs;
        let band_ratio: Vec<f64> = OBS_BANDS
            .iter()
            .map(|(lo, hi)| {
                let hi = hi.min(fs / 2.0 + 1.0);
                let po = band_power(&out, fs, *lo, hi);
                let pi = band_power(&mics[0], fs, *lo, hi);
                if po > 0.0 && pi > 0.0 { 10.0 * (po / pi).log10() } else { 0.0 }
            })
            .collect();
        self.step += 1;
        let done = self.step == self.cfg.episode_steps;
        self.obs = self.observe(&band_ratio, self.step)?;
        if self.obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite observation".into()));
        }
        Ok((EnvState { obs: self.obs.clone() }, StepOutcome { reward, done, si_snr_gain_db: gain_db, rtf }))
    }
}

/// Free-function form of [`TuningEnv::step`].
pub fn env_step(env: &mut TuningEnv, action: &Action) -> Result<(EnvState, f64, bool)> {
    let (s, o) = env.step(action)?;
    Ok((s, o.reward, o.done))
}
