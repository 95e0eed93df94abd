//! Clipped-surrogate PPO with generalized advantage estimation.

use rand::seq::SliceRandom;
use rand::Rng;

use super::policy::{mlp_backward, PolicyParams};
use crate::error::{domain, Error, Result};

/// One recorded transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    /// Log-probability of `action` under the behaviour policy.
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Value of the state after the last step; ignored when it is terminal.
    pub bootstrap_value: f64,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(domain("empty trajectory"));
        }
        if let Some(i) = self.steps.iter().position(|s| !s.log_prob.is_finite()) {
            return Err(domain(format!("non-finite behaviour log-probability at step {i}")));
        }
        Ok(())
    }
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn ppo_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(domain(format!("likelihood ratio must be positive, got {ratio}")));
    }
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    Ok((ratio * advantage).min(clipped * advantage))
}

/// Raw (unnormalized) advantages and returns `A + V`.
///
/// `delta_t = r_t + gamma V_{t+1} - V_t` and `A_t = delta_t + gamma lam A_{t+1}`,
/// both cut at `done` steps.
pub fn compute_gae(traj: &Trajectory, gamma: f64, lam: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if traj.steps.is_empty() {
        return Err(domain("empty trajectory"));
    }
    let n = traj.steps.len();
    let mut adv = vec![0.0; n];
    let mut next_value = traj.bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let s = &traj.steps[t];
        let live = if s.done { 0.0 } else { 1.0 };
        let delta = s.reward + gamma * next_value * live - s.value;
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = s.value;
    }
    let returns = adv.iter().zip(&traj.steps).map(|(a, s)| a + s.value).collect();
    Ok((adv, returns))
}

/// Shifts and scales to zero mean and unit variance. An all-equal batch maps to zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 0.0 { (*a - mean) / (std + 1e-8) } else { 0.0 };
    }
}

/// Flattened training samples with normalized advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn from_trajectories(trajs: &[Trajectory], gamma: f64, lam: f64) -> Result<Self> {
        if trajs.is_empty() {
            return Err(domain("empty batch"));
        }
        let mut b = Batch { obs: vec![], actions: vec![], old_log_probs: vec![], advantages: vec![], returns: vec![] };
        for t in trajs {
            t.validate()?;
            let (adv, ret) = compute_gae(t, gamma, lam)?;
            for (s, (a, r)) in t.steps.iter().zip(adv.into_iter().zip(ret)) {
                b.obs.push(s.obs.clone());
                b.actions.push(s.action.clone());
                b.old_log_probs.push(s.log_prob);
                b.advantages.push(a);
                b.returns.push(r);
            }
        }
        normalize_advantages(&mut b.advantages);
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateDiagnostics {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub surrogate: f64,
    pub value_loss: f64,
}

/// Mean clipped surrogate minus `value_coef` times the mean squared value
/// error over `idx`, with its gradient when `grad` is given.
pub fn ppo_objective(policy: &PolicyParams, batch: &Batch, idx: &[usize], mut grad: Option<&mut [f64]>) -> (f64, UpdateDiagnostics) {
    let n = idx.len() as f64;
    let p_sizes = policy.policy_sizes();
    let v_sizes = policy.value_sizes();
    let p_len = policy.policy_len();
    let ls_range = policy.log_std_range();
    let v_range = policy.value_range();
    let log_std = policy.log_std().to_vec();
    let eps = policy.clip_eps;
    let mut g_log_std = vec![0.0; policy.act_dim];
    let (mut surr, mut vloss, mut ratio_sum, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    let mut g_out = vec![0.0; policy.act_dim];
    for &i in idx {
        let obs = &batch.obs[i];
        let act = &batch.actions[i];
        let adv = batch.advantages[i];
        let ptrace = policy.policy_trace(obs);
        let mean: Vec<f64> = ptrace.output().iter().map(|z| z.tanh()).collect();
        let lp = super::policy::gaussian_log_prob(&mean, &log_std, act);
        let ratio = (lp - batch.old_log_probs[i]).exp();
        let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
        let unclipped_active = ratio * adv <= clipped_ratio * adv;
        surr += (ratio * adv).min(clipped_ratio * adv);
        ratio_sum += ratio;
        if clipped_ratio != ratio {
            clipped += 1;
        }
        let vtrace = policy.value_trace(obs);
        let err = vtrace.output()[0] - batch.returns[i];
        vloss += err * err;

        if let Some(g) = grad.as_deref_mut() {
            if unclipped_active && adv != 0.0 {
                let coef = adv * ratio / n;
                for j in 0..policy.act_dim {
                    let var = (2.0 * log_std[j]).exp();
                    let diff = act[j] - mean[j];
                    g_out[j] = coef * diff / var * (1.0 - mean[j] * mean[j]);
                    g_log_std[j] += coef * (diff * diff / var - 1.0);
                }
                mlp_backward(&policy.theta[..p_len], &p_sizes, &ptrace, &g_out, &mut g[..p_len]);
            }
            let gv = [-2.0 * policy.value_coef * err / n];
            mlp_backward(&policy.theta[v_range.clone()], &v_sizes, &vtrace, &gv, &mut g[v_range.clone()]);
        }
    }
    if let Some(g) = grad {
        for (dst, src) in g[ls_range].iter_mut().zip(&g_log_std) {
            *dst += src;
        }
    }
    let diag = UpdateDiagnostics {
        mean_ratio: ratio_sum / n,
        clip_fraction: clipped as f64 / n,
        surrogate: surr / n,
        value_loss: vloss / n,
    };
    (diag.surrogate - policy.value_coef * diag.value_loss, diag)
}

fn check_gradient(policy: &PolicyParams, grad: &[f64]) -> Result<()> {
    let parts = [
        ("policy network", 0..policy.policy_len()),
        ("log_std", policy.log_std_range()),
        ("value network", policy.value_range()),
    ];
    for (name, range) in parts {
        if let Some(k) = grad[range.clone()].iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient in {name} at index {}", range.start + k)));
        }
    }
    Ok(())
}

/// `epochs` passes of shuffled minibatch Adam ascent on [`ppo_objective`].
/// Diagnostics are recomputed over the whole batch with the updated parameters.
pub fn ppo_update<R: Rng>(policy: &PolicyParams, batch: &[Trajectory], rng: &mut R) -> Result<(PolicyParams, UpdateDiagnostics)> {
    policy.validate()?;
    let data = Batch::from_trajectories(batch, policy.gamma, policy.lam)?;
    ppo_update_batch(policy, &data, rng)
}

pub fn ppo_update_batch<R: Rng>(policy: &PolicyParams, data: &Batch, rng: &mut R) -> Result<(PolicyParams, UpdateDiagnostics)> {
    if data.is_empty() {
        return Err(domain("empty batch"));
    }
    let mut p = policy.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; p.len()];
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    for _ in 0..p.epochs {
        order.shuffle(rng);
        for mb in order.chunks(p.minibatch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            ppo_objective(&p, data, mb, Some(&mut grad));
            check_gradient(&p, &grad)?;
            p.adam.t += 1;
            let t = p.adam.t as i32;
            let (c1, c2) = (1.0 - B1.powi(t), 1.0 - B2.powi(t));
            for k in 0..grad.len() {
                let m = &mut p.adam.m[k];
                let v = &mut p.adam.v[k];
                *m = B1 * *m + (1.0 - B1) * grad[k];
                *v = B2 * *v + (1.0 - B2) * grad[k] * grad[k];
                p.theta[k] += p.lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
            }
        }
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let (_, diag) = ppo_objective(&p, data, &all, None);
    if !diag.mean_ratio.is_finite() {
        return Err(Error::Numerical("post-update likelihood ratios are not finite".into()));
    }
    Ok((p, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::policy::PpoConfig;
    use proptest::prelude::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(reward: f64, value: f64, done: bool) -> Step {
        Step { obs: vec![0.0], action: vec![0.0], log_prob: 0.0, reward, value, done }
    }

    #[test]
    fn surrogate_unit_cases() {
        assert_eq!(ppo_surrogate(1.0, 2.0, 0.2).unwrap(), 2.0);
        assert!((ppo_surrogate(1.5, 1.0, 0.2).unwrap() - 1.2).abs() < 1e-15);
        assert!((ppo_surrogate(0.5, -1.0, 0.2).unwrap() + 0.8).abs() < 1e-15);
        assert!(matches!(ppo_surrogate(0.0, 1.0, 0.2), Err(Error::Domain(_))));
        assert!(ppo_surrogate(-1.0, 1.0, 0.2).is_err());
    }

    #[test]
    fn gae_three_step_recursion() {
        let traj = Trajectory { steps: vec![step(1.0, 0.5, false), step(0.0, 0.5, false), step(1.0, 0.5, false)], bootstrap_value: 0.0 };
        let (adv, ret) = compute_gae(&traj, 0.9, 0.5).unwrap();
        // hand-rolled: deltas 0.95, -0.05, 0.5; A = delta + 0.45 A_next
        let d = [1.0 + 0.9 * 0.5 - 0.5, 0.0 + 0.9 * 0.5 - 0.5, 1.0 + 0.9 * 0.0 - 0.5];
        let a2 = d[2];
        let a1 = d[1] + 0.45 * a2;
        let a0 = d[0] + 0.45 * a1;
        for (got, want) in adv.iter().zip([a0, a1, a2]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((adv[0] - 1.02875).abs() < 1e-12);
        assert!((ret[1] - 0.675).abs() < 1e-12);
    }

    #[test]
    fn gae_limits() {
        let traj = Trajectory { steps: vec![step(1.0, 0.2, false), step(2.0, 0.7, false), step(3.0, 0.1, false)], bootstrap_value: 0.4 };
        let (adv, _) = compute_gae(&traj, 0.8, 0.0).unwrap();
        assert!((adv[0] - (1.0 + 0.8 * 0.7 - 0.2)).abs() < 1e-15);
        assert!((adv[2] - (3.0 + 0.8 * 0.4 - 0.1)).abs() < 1e-15);
        let mc = Trajectory { steps: vec![step(1.0, 0.0, false), step(2.0, 0.0, false), step(3.0, 0.0, true)], bootstrap_value: 9.0 };
        let (adv, _) = compute_gae(&mc, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![6.0, 5.0, 3.0]);
        assert!(matches!(compute_gae(&Trajectory { steps: vec![], bootstrap_value: 0.0 }, 0.9, 0.9), Err(Error::Domain(_))));
    }

    fn random_batch(policy: &PolicyParams, n: usize, rng: &mut ChaCha8Rng) -> Batch {
        let mut b = Batch { obs: vec![], actions: vec![], old_log_probs: vec![], advantages: vec![], returns: vec![] };
        for _ in 0..n {
            let obs: Vec<f64> = (0..policy.obs_dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let (a, lp) = policy.sample(&obs, rng);
            b.obs.push(obs);
            b.actions.push(a);
            // perturb so some ratios sit away from 1 without touching the clip edges
            b.old_log_probs.push(lp + 0.05 * (rng.random::<f64>() - 0.5));
            b.advantages.push(rng.random::<f64>() * 2.0 - 1.0);
            b.returns.push(rng.random::<f64>());
        }
        b
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = PpoConfig { hidden: vec![6], ..PpoConfig::default() };
        let policy = PolicyParams::init(3, 2, &cfg, &mut rng).unwrap();
        let batch = random_batch(&policy, 10, &mut rng);
        let idx: Vec<usize> = (0..10).collect();
        let mut grad = vec![0.0; policy.len()];
        ppo_objective(&policy, &batch, &idx, Some(&mut grad));
        let h = 1e-6;
        for k in 0..policy.len() {
            let mut hi = policy.clone();
            let mut lo = policy.clone();
            hi.theta[k] += h;
            lo.theta[k] -= h;
            let fd = (ppo_objective(&hi, &batch, &idx, None).0 - ppo_objective(&lo, &batch, &idx, None).0) / (2.0 * h);
            let scale = fd.abs().max(grad[k].abs()).max(1e-6);
            assert!((fd - grad[k]).abs() / scale < 1e-4, "param {k}: fd {fd} analytic {}", grad[k]);
        }
    }

    #[test]
    fn zero_advantage_moves_only_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let policy = PolicyParams::init(2, 1, &PpoConfig::default(), &mut rng).unwrap();
        let mut batch = random_batch(&policy, 16, &mut rng);
        batch.advantages.iter_mut().for_each(|a| *a = 0.0);
        let (new, _) = ppo_update_batch(&policy, &batch, &mut rng).unwrap();
        let v = policy.value_range();
        assert_eq!(new.theta[..v.start], policy.theta[..v.start]);
        assert_ne!(new.theta[v.clone()], policy.theta[v]);
    }

    #[test]
    fn fresh_rollout_ratios_are_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let policy = PolicyParams::init(3, 2, &PpoConfig::default(), &mut rng).unwrap();
        for _ in 0..50 {
            let obs: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let (a, lp) = policy.sample(&obs, &mut rng);
            assert!(((policy.log_prob(&obs, &a) - lp).exp() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_gradient_names_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let policy = PolicyParams::init(1, 1, &PpoConfig::default(), &mut rng).unwrap();
        let mut batch = random_batch(&policy, 4, &mut rng);
        batch.returns[0] = f64::INFINITY;
        match ppo_update_batch(&policy, &batch, &mut rng) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("value network"), "{msg}"),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    /// Arm 1 (action > 0) pays 1, arm 0 pays 0.
    fn bandit_run(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = PpoConfig { hidden: vec![8], lr: 0.02, init_log_std: 0.0, minibatch: 32, epochs: 4, ..PpoConfig::default() };
        let mut policy = PolicyParams::init(1, 1, &cfg, &mut rng).unwrap();
        let obs = vec![1.0];
        for _ in 0..200 {
            let trajs: Vec<Trajectory> = (0..64)
                .map(|_| {
                    let (a, lp) = policy.sample(&obs, &mut rng);
                    let reward = if a[0] > 0.0 { 1.0 } else { 0.0 };
                    Trajectory { steps: vec![Step { obs: obs.clone(), action: a, log_prob: lp, reward, value: policy.value(&obs), done: true }], bootstrap_value: 0.0 }
                })
                .collect();
            policy = ppo_update(&policy, &trajs, &mut rng).unwrap().0;
        }
        // P(a > 0) for a ~ N(mean, sigma)
        let z = policy.mean(&obs)[0] / policy.log_std()[0].exp();
        0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
    }

    fn erf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26, |error| < 1.5e-7
        let t = 1.0 / (1.0 + 0.327_591_1 * x.abs());
        let y = 1.0 - (((((1.061_405_429 * t - 1.453_152_027) * t) + 1.421_413_741) * t - 0.284_496_736) * t + 0.254_829_592) * t * (-x * x).exp();
        y.copysign(x)
    }

    #[test]
    fn bandit_prefers_paying_arm() {
        for seed in 0..5 {
            let p = bandit_run(seed);
            assert!(p >= 0.95, "seed {seed}: P(better arm) = {p}");
        }
    }

    proptest! {
        #[test]
        fn surrogate_bounds(r in 1e-3f64..10.0, a in -10.0f64..10.0, eps in 0.01f64..0.99) {
            let s = ppo_surrogate(r, a, eps).unwrap();
            prop_assert!(s <= r * a + 1e-12);
            prop_assert!(s.abs() <= (r * a).abs().max((1.0 + eps) * a.abs()) + 1e-12);
        }
    }
}
