//! The run configuration: one TOML file with a section per command.

use nars_core::error::{Error, Result};
use nars_core::frontend::{AzimuthGrid, FilterBankSpec, FrontEnd, FrontEndParams};
use nars_core::rl::RlConfig;
use nars_core::scene::ScenarioConfig;
use nars_core::wavefield::{
    shock_formation_distance, AxisymGrid, KzkSolver, Medium, PlaneWaveGrid, SourceProfile, SourceWaveform,
};
use serde::{Deserialize, Serialize};

use crate::Command;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed for training, randomized layouts and the benchmark corpus.
    /// Scenes keep their own `scenario.seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave: Option<WaveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kzk: Option<KzkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontend: Option<FrontendSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localize: Option<LocalizeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rl: Option<RlConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSection {
    pub medium: Medium,
    pub source: SourceWaveform,
    pub n_time: usize,
    pub n_steps: usize,
    pub z_max: f64,
    #[serde(default = "default_harmonics")]
    pub n_harmonics: usize,
}

fn default_harmonics() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KzkSection {
    pub medium: Medium,
    pub source: SourceWaveform,
    pub profile: SourceProfile,
    pub grid: AxisymGrid,
    /// Write a field dump every this many steps; 0 keeps only the last plane.
    #[serde(default)]
    pub dump_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendSection {
    pub m_bands: usize,
    pub hop: usize,
    pub taps_per_band: usize,
    pub aec_taps: usize,
    pub mu: f64,
    #[serde(default = "default_eps")]
    pub eps_reg: f64,
    /// Beam direction in degrees; the scenario's true azimuth when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer_deg: Option<f64>,
    /// Linear gains for bands `0..=m_bands / 2`; unity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    /// Samples per streaming call.
    #[serde(default = "default_chunk")]
    pub chunk: usize,
}

fn default_eps() -> f64 {
    1e-6
}

fn default_chunk() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeSection {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Additional randomized layouts of the scenario to localize; 0 runs
    /// only the configured scene.
    #[serde(default)]
    pub random_scenes: usize,
}

fn default_grid_points() -> usize {
    360
}

impl Default for LocalizeSection {
    fn default() -> Self {
        Self { grid_points: default_grid_points(), random_scenes: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// One corpus clip per entry, seconds.
    pub durations: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_repeats() -> usize {
    1
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require<'a, T>(section: &'a Option<T>, name: &str, cmd: Command) -> Result<&'a T> {
    section.as_ref().ok_or_else(|| cfg_err(format!("command `{}` needs a [{name}] section", cmd.name())))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn wave(&self) -> Result<&WaveSection> {
        require(&self.wave, "wave", Command::Wave)
    }

    pub fn kzk(&self) -> Result<&KzkSection> {
        require(&self.kzk, "kzk", Command::Kzk)
    }

    pub fn scenario(&self, cmd: Command) -> Result<&ScenarioConfig> {
        require(&self.scenario, "scenario", cmd)
    }

    pub fn frontend(&self, cmd: Command) -> Result<&FrontendSection> {
        require(&self.frontend, "frontend", cmd)
    }

    pub fn rl(&self) -> Result<&RlConfig> {
        require(&self.rl, "rl", Command::Train)
    }

    pub fn bench(&self) -> Result<&BenchSection> {
        require(&self.bench, "bench", Command::Bench)
    }

    pub fn localize(&self) -> LocalizeSection {
        self.localize.clone().unwrap_or_default()
    }

    /// Checks everything `cmd` will use, without running it.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        match cmd {
            Command::Wave => {
                let w = self.wave()?;
                w.grid()?;
                w.medium.validate()?;
                w.source.validate()?;
                if w.n_harmonics == 0 {
                    return Err(cfg_err("n_harmonics must be positive"));
                }
                let sigma = w.z_max / shock_formation_distance(&w.medium, &w.source)?;
                if sigma >= 1.0 {
                    return Err(Error::Validity(format!("z_max reaches the shock formation distance (sigma = {sigma:.3})")));
                }
            }
            Command::Kzk => {
                let k = self.kzk()?;
                KzkSolver::new(&k.medium, &k.source, &k.profile, &k.grid)?;
            }
            Command::Scene => {
                self.scenario(cmd)?.validate()?;
            }
            Command::Frontend => {
                let s = self.scenario(cmd)?;
                s.validate()?;
                self.frontend(cmd)?.build(s)?;
            }
            Command::Localize => {
                let s = self.scenario(cmd)?;
                s.validate()?;
                if s.mic_positions.len() < 2 {
                    return Err(cfg_err("localization needs at least two microphones"));
                }
                AzimuthGrid::new(self.localize().grid_points)?;
            }
            Command::Train => {
                self.scenario(cmd)?.validate()?;
                self.rl()?.validate()?;
            }
            Command::Bench => {
                let s = self.scenario(cmd)?;
                s.validate()?;
                self.frontend(cmd)?.build(s)?;
                let b = self.bench()?;
                if let Some(d) = b.durations.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
                    return Err(cfg_err(format!("bench durations must be positive, got {d}")));
                }
                if b.repeats == 0 {
                    return Err(cfg_err("bench repeats must be positive"));
                }
            }
        }
        Ok(())
    }
}

impl WaveSection {
    pub fn grid(&self) -> Result<PlaneWaveGrid> {
        PlaneWaveGrid::new(self.n_time, self.n_steps, self.z_max)
    }
}

impl FrontendSection {
    /// Front end and parameters for `scene`.
    pub fn build(&self, scene: &ScenarioConfig) -> Result<(FrontEnd, FrontEndParams)> {
        let spec = FilterBankSpec::design(self.m_bands, self.hop, self.taps_per_band, scene.room.fs)?;
        let fe = FrontEnd::new(spec, scene.geometry()?, self.aec_taps, self.eps_reg)?;
        if self.chunk == 0 || !self.chunk.is_multiple_of(self.hop) {
            return Err(cfg_err(format!("chunk {} must be a positive multiple of hop {}", self.chunk, self.hop)));
        }
        if !(0.0..=2.0).contains(&self.mu) {
            return Err(cfg_err(format!("mu {} outside [0, 2]", self.mu)));
        }
        let steer = match self.steer_deg {
            Some(s) if s.is_finite() => s,
            Some(s) => return Err(cfg_err(format!("steer_deg must be finite, got {s}"))),
            None => scene.true_azimuth()?,
        };
        let mut params = FrontEndParams::unity(fe.spec(), self.mu, steer);
        if let Some(g) = &self.gains {
            if g.len() != params.gains.len() {
                return Err(cfg_err(format!("gains needs {} entries (bands 0..=m_bands/2), got {}", params.gains.len(), g.len())));
            }
            if g.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(cfg_err("gains must be finite and non-negative"));
            }
            params.gains = g.clone();
        }
        Ok((fe, params))
    }
}
