//! Reinforcement learning for front-end tuning: PPO, tabular Q-learning and
//! the tuning environment.

mod env;
mod policy;
mod ppo;
mod qlearn;
mod train;

pub use env::{
    env_step, Action, ActionBounds, EnvState, RewardWeights, StepOutcome, TuningConfig, TuningEnv, GAIN_RANGE_DB, MU_MAX,
    NOMINAL_OPS_PER_S, QUALITY_RANGE_DB,
};
pub use policy::{AdamState, PolicyParams, PpoConfig};
pub use ppo::{compute_gae, normalize_advantages, ppo_objective, ppo_surrogate, ppo_update, ppo_update_batch, Batch, Step, Trajectory, UpdateDiagnostics};
pub use qlearn::{q_update, ChainMdp, QTable};
pub use train::{
    checkpoint_bytes, evaluate_policy, evaluate_random, init_policy, learning_curve_csv, load_checkpoint, median,
    mistuned_scenario, train_tuning_policy, CurvePoint, RlConfig, TrainOutcome, CHECKPOINT_MAGIC, EVAL_VARIANT_BASE, MIN_BUDGET,
};
