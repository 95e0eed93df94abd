//! PPO training of the tuning policy, evaluation and checkpoints.

use std::fmt::Write as _;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::env::{Action, TuningConfig, TuningEnv};
use super::policy::{PolicyParams, PpoConfig};
use super::ppo::{ppo_update, Step, Trajectory};
use crate::error::{config, Error, Result};
use crate::scene::{substream, EchoSpec, NoiseKind, RoomSpec, ScenarioConfig};

const STREAM_INIT: u64 = 0x1417;
const STREAM_SHUFFLE: u64 = 0x5407;
const STREAM_ROLLOUT: u64 = 0x2011_0000;
const STREAM_RANDOM: u64 = 0x3A4D_0000;

/// Smallest accepted training budget, environment steps.
pub const MIN_BUDGET: usize = 1000;
/// Noise draws at or above this index are reserved for evaluation.
pub const EVAL_VARIANT_BASE: u64 = 1 << 32;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NARSPOL1";

/// The `[rl]` section of a training config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub budget: usize,
    pub batch_episodes: usize,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
    pub clip_eps: f64,
    pub lr: f64,
    pub gamma: f64,
    pub lam: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub init_log_std: f64,
    pub env: TuningConfig,
}

impl Default for RlConfig {
    fn default() -> Self {
        let p = PpoConfig::default();
        Self {
            budget: 12_000,
            batch_episodes: 4,
            eval_episodes: 25,
            hidden: p.hidden,
            clip_eps: p.clip_eps,
            lr: p.lr,
            gamma: p.gamma,
            lam: p.lam,
            value_coef: p.value_coef,
            epochs: p.epochs,
            minibatch: p.minibatch,
            init_log_std: p.init_log_std,
            env: TuningConfig::default(),
        }
    }
}

impl RlConfig {
    /// Parses the fields of an `[rl]` section and validates them.
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            hidden: self.hidden.clone(),
            clip_eps: self.clip_eps,
            lr: self.lr,
            gamma: self.gamma,
            lam: self.lam,
            value_coef: self.value_coef,
            epochs: self.epochs,
            minibatch: self.minibatch,
            init_log_std: self.init_log_std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.batch_episodes == 0 || self.eval_episodes == 0 {
            return Err(config("batch_episodes and eval_episodes must be positive"));
        }
        check_budget(self.budget, self.env.episode_steps)?;
        // hyperparameter ranges are checked by the policy itself
        let mut rng = substream(0, 0);
        PolicyParams::init(self.env.obs_dim(), self.env.act_dim(), &self.ppo(), &mut rng).map_err(|e| config(e.to_string()))?;
        Ok(())
    }
}

/// The fixed mistuned scenario: an 8-mic circular array in a reverberant
/// room, the beam aimed at the loudspeaker instead of the talker and the
/// echo canceller's step size at zero.
pub fn mistuned_scenario() -> (ScenarioConfig, RlConfig) {
    let fs = 16_000.0;
    let c = 343.0;
    let mic_positions = (0..8)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 8.0;
            [3.0 + 0.1 * a.cos(), 2.5 + 0.1 * a.sin(), 1.2]
        })
        .collect();
    let scenario = ScenarioConfig {
        room: RoomSpec { dims: [6.0, 5.0, 3.0], reflection: 0.5, max_order: 2, c, fs },
        source_pos: [4.6, 3.3, 1.2],
        mic_positions,
        noise_kind: NoiseKind::White,
        snr_db: 5.0,
        seed: 5,
        duration: 1.0,
        echo: Some(EchoSpec { loudspeaker_pos: [3.0, 4.3, 1.2], level_db: 5.0 }),
    };
    // talker at atan2(0.8, 1.6), loudspeaker straight along +y
    let offset = 90.0 - 0.8f64.atan2(1.6).to_degrees();
    let rl = RlConfig { env: TuningConfig { mu_init: 0.0, steer_offset_deg: offset, ..TuningConfig::default() }, ..RlConfig::default() };
    (scenario, rl)
}

fn check_budget(budget: usize, episode_steps: usize) -> Result<()> {
    if budget < episode_steps {
        return Err(config(format!("budget of {budget} steps is below one episode ({episode_steps} steps)")));
    }
    if budget < MIN_BUDGET {
        return Err(config(format!("budget of {budget} steps is below the minimum of {MIN_BUDGET}")));
    }
    Ok(())
}

/// Fresh policy sized for `cfg`, drawn from the seed's init substream.
pub fn init_policy(cfg: &RlConfig, seed: u64) -> Result<PolicyParams> {
    PolicyParams::init(cfg.env.obs_dim(), cfg.env.act_dim(), &cfg.ppo(), &mut substream(seed, STREAM_INIT))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_reward: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

/// `episode,mean_reward,clip_fraction,mean_ratio`.
pub fn learning_curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("episode,mean_reward,clip_fraction,mean_ratio\n");
    for p in curve {
        let _ = writeln!(s, "{},{:.9},{:.6},{:.9}", p.episode, p.mean_reward, p.clip_fraction, p.mean_ratio);
    }
    s
}

/// Runs one episode. With a policy, actions are sampled from it (or its mean
/// when `rng` is `None`); without one they are uniform over the action box.
fn run_episode(env: &mut TuningEnv, variant: u64, policy: Option<&PolicyParams>, mut rng: Option<&mut dyn RngCore>) -> Result<Trajectory> {
    let mut state = env.reset(variant)?;
    let cfg = env.config().clone();
    let mut steps = Vec::with_capacity(cfg.episode_steps);
    loop {
        let (unit, log_prob, value) = match (policy, rng.as_deref_mut()) {
            (Some(p), Some(r)) => {
                let (a, lp) = p.sample(&state.obs, &mut RngAdapter(r));
                (a, lp, p.value(&state.obs))
            }
            (Some(p), None) => (p.mean(&state.obs), 0.0, p.value(&state.obs)),
            (None, Some(r)) => ((0..cfg.act_dim()).map(|_| RngAdapter(&mut *r).random_range(-1.0..=1.0)).collect(), 0.0, 0.0),
            (None, None) => unreachable!("random policy needs a generator"),
        };
        let (next, out) = env.step(&Action::from_unit(&cfg, &unit))?;
        steps.push(Step { obs: state.obs, action: unit, log_prob, reward: out.reward, value, done: out.done });
        state = next;
        if out.done {
            return Ok(Trajectory { steps, bootstrap_value: 0.0 });
        }
    }
}

struct RngAdapter<'a>(&'a mut dyn RngCore);

impl RngCore for RngAdapter<'_> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

fn mean_reward(t: &Trajectory) -> f64 {
    t.steps.iter().map(|s| s.reward).sum::<f64>() / t.steps.len() as f64
}

pub struct TrainOutcome {
    pub policy: PolicyParams,
    pub curve: Vec<CurvePoint>,
}

/// Trains on `envs` (episode `e` uses `envs[e % len]` with noise draw `e`)
/// until `budget` steps are spent. Episodes of one batch are collected on up
/// to `parallel` threads, each with its own substream, so the result does
/// not depend on `parallel`.
pub fn train_tuning_policy(envs: &[TuningEnv], policy: &PolicyParams, rl: &RlConfig, seed: u64, parallel: usize) -> Result<TrainOutcome> {
    if envs.is_empty() {
        return Err(config("training needs at least one scenario"));
    }
    let steps_per_ep = envs[0].config().episode_steps;
    if envs.iter().any(|e| e.config().episode_steps != steps_per_ep || e.obs_dim() != policy.obs_dim || e.act_dim() != policy.act_dim) {
        return Err(config("scenarios disagree on episode length or policy dimensions"));
    }
    check_budget(rl.budget, steps_per_ep)?;
    policy.validate()?;
    let episodes = rl.budget / steps_per_ep;
    let mut shuffle = substream(seed, STREAM_SHUFFLE);
    let mut policy = policy.clone();
    let mut curve = Vec::with_capacity(episodes);
    let mut first = 0;
    while first < episodes {
        let batch: Vec<usize> = (first..(first + rl.batch_episodes).min(episodes)).collect();
        let collect = |env: &mut TuningEnv, e: usize, p: &PolicyParams| -> Result<Trajectory> {
            let mut rng = substream(seed, STREAM_ROLLOUT + e as u64);
            run_episode(env, e as u64 + 1, Some(p), Some(&mut rng)).map_err(|err| with_episode(err, e))
        };
        let trajs: Vec<Trajectory> = if parallel <= 1 || batch.len() == 1 {
            batch.iter().map(|&e| collect(&mut envs[e % envs.len()].clone(), e, &policy)).collect::<Result<_>>()?
        } else {
            let per = batch.len().div_ceil(parallel);
            let p = &policy;
            let collect = &collect;
            std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .chunks(per)
                    .map(|group| {
                        s.spawn(move || {
                            group.iter().map(|&e| collect(&mut envs[e % envs.len()].clone(), e, p)).collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("rollout worker panicked")).collect::<Result<_>>()
            })?
        };
        let (next, diag) = ppo_update(&policy, &trajs, &mut shuffle).map_err(|err| with_episode(err, *batch.last().unwrap()))?;
        policy = next;
        for (t, &e) in trajs.iter().zip(&batch) {
            curve.push(CurvePoint { episode: e, mean_reward: mean_reward(t), clip_fraction: diag.clip_fraction, mean_ratio: diag.mean_ratio });
        }
        first += batch.len();
    }
    Ok(TrainOutcome { policy, curve })
}

fn with_episode(err: Error, e: usize) -> Error {
    let ctx = |m: String| format!("episode {e}: {m}");
    match err {
        Error::Domain(m) => Error::Domain(ctx(m)),
        Error::Config(m) => Error::Config(ctx(m)),
        Error::Framing(m) => Error::Framing(ctx(m)),
        Error::Data(m) => Error::Data(ctx(m)),
        Error::Numerical(m) => Error::Numerical(ctx(m)),
        Error::Validity(m) => Error::Validity(ctx(m)),
        Error::Bounds(m) => Error::Bounds(ctx(m)),
        other => other,
    }
}

/// Mean per-step reward of each evaluation episode under the policy's mean action.
pub fn evaluate_policy(env: &TuningEnv, policy: &PolicyParams, episodes: usize) -> Result<Vec<f64>> {
    let mut env = env.clone();
    (0..episodes).map(|i| run_episode(&mut env, EVAL_VARIANT_BASE + i as u64, Some(policy), None).map(|t| mean_reward(&t))).collect()
}

/// Same episodes as [`evaluate_policy`] with uniformly random actions.
pub fn evaluate_random(env: &TuningEnv, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let mut env = env.clone();
    (0..episodes)
        .map(|i| {
            let mut rng = substream(seed, STREAM_RANDOM + i as u64);
            run_episode(&mut env, EVAL_VARIANT_BASE + i as u64, None, Some(&mut rng)).map(|t| mean_reward(&t))
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Magic, little-endian `u64` count, then the parameters as little-endian `f64`.
pub fn checkpoint_bytes(policy: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * policy.theta.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(policy.theta.len() as u64).to_le_bytes());
    for v in &policy.theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Loads parameters into a policy with the same layout as `template`.
pub fn load_checkpoint(bytes: &[u8], template: &PolicyParams) -> Result<PolicyParams> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Data("not a policy checkpoint".into()));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if n != template.len() || bytes.len() != 16 + 8 * n {
        return Err(Error::Data(format!("checkpoint holds {n} parameters, layout needs {}", template.len())));
    }
    let mut p = template.clone();
    p.theta = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    p.adam.m.iter_mut().chain(p.adam.v.iter_mut()).for_each(|v| *v = 0.0);
    p.adam.t = 0;
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::tests::scenario;

    fn small() -> RlConfig {
        RlConfig { budget: 1000, env: TuningConfig { episode_steps: 4, ..TuningConfig::default() }, ..RlConfig::default() }
    }

    #[test]
    fn rl_section_parses_with_defaults() {
        let cfg = RlConfig::from_toml("budget = 3000\n[env]\nmu_init = 0.25\n").unwrap();
        assert_eq!(cfg.budget, 3000);
        assert_eq!(cfg.env.mu_init, 0.25);
        assert_eq!(cfg.lr, RlConfig::default().lr);
        assert!(RlConfig::from_toml("budgt = 3000").is_err());
        assert!(RlConfig::from_toml("budget = 10").is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = init_policy(&RlConfig::default(), 3).unwrap();
        let bytes = checkpoint_bytes(&p);
        assert_eq!(&bytes[..8], b"NARSPOL1");
        assert_eq!(bytes.len(), 16 + 8 * p.len());
        assert_eq!(load_checkpoint(&bytes, &p).unwrap().theta, p.theta);
        assert!(load_checkpoint(&bytes[..bytes.len() - 8], &p).is_err());
    }

    #[test]
    fn budget_preconditions() {
        let cfg = small();
        let env = TuningEnv::new(&scenario(4, 0.05, true), &cfg.env).unwrap();
        let p = init_policy(&cfg, 1).unwrap();
        for budget in [3, 999] {
            let r = train_tuning_policy(std::slice::from_ref(&env), &p, &RlConfig { budget, ..cfg.clone() }, 1, 1);
            assert!(matches!(r, Err(Error::Config(_))));
        }
        assert!(train_tuning_policy(&[], &p, &cfg, 1, 1).is_err());
    }

    #[test]
    fn same_seed_same_curve_regardless_of_threads() {
        let cfg = small();
        let env = TuningEnv::new(&scenario(4, 0.05, true), &cfg.env).unwrap();
        let p = init_policy(&cfg, 9).unwrap();
        let a = train_tuning_policy(std::slice::from_ref(&env), &p, &cfg, 9, 1).unwrap();
        let b = train_tuning_policy(std::slice::from_ref(&env), &p, &cfg, 9, 3).unwrap();
        assert_eq!(a.curve.len(), 250);
        assert_eq!(learning_curve_csv(&a.curve), learning_curve_csv(&b.curve));
        assert_eq!(a.policy.theta, b.policy.theta);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
