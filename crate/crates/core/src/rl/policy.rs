//! Diagonal-Gaussian policy with a tanh-squashed mean and a separate value
//! network, both small tanh perceptrons over one flat parameter vector.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{config, domain, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameter count of a dense network with the given layer sizes.
pub(crate) fn mlp_len(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Activations of every layer, input first.
pub(crate) struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty")
    }
}

/// Tanh hidden layers, linear output. Weights are row-major `[out][in]`, then biases.
pub(crate) fn mlp_forward(params: &[f64], sizes: &[usize], x: &[f64]) -> Trace {
    let mut acts = Vec::with_capacity(sizes.len());
    acts.push(x.to_vec());
    let mut off = 0;
    for (l, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[off..off + n_in * n_out];
        let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let input = &acts[l];
        let last = l + 2 == sizes.len();
        let out: Vec<f64> = (0..n_out)
            .map(|o| {
                let z = bias[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                if last {
                    z
                } else {
                    z.tanh()
                }
            })
            .collect();
        acts.push(out);
    }
    Trace { acts }
}

/// Accumulates `d(output . grad_out)/d(params)` into `grad`.
pub(crate) fn mlp_backward(params: &[f64], sizes: &[usize], trace: &Trace, grad_out: &[f64], grad: &mut [f64]) {
    let n_layers = sizes.len() - 1;
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    let mut delta = grad_out.to_vec();
    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let off = offsets[l];
        if l + 1 < n_layers {
            // through tanh
            for (d, a) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                *d *= 1.0 - a * a;
            }
        }
        let input = &trace.acts[l];
        for o in 0..n_out {
            let row = off + o * n_in;
            for i in 0..n_in {
                grad[row + i] += delta[o] * input[i];
            }
            grad[off + n_in * n_out + o] += delta[o];
        }
        if l > 0 {
            let weights = &params[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                for i in 0..n_in {
                    next[i] += weights[o * n_in + i] * delta[o];
                }
            }
            delta = next;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

/// Policy and value parameters plus PPO hyperparameters.
///
/// `theta` layout: `[policy network | log_std (act_dim) | value network]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub theta: Vec<f64>,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub clip_eps: f64,
    pub lr: f64,
    pub gamma: f64,
    pub lam: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub adam: AdamState,
}

/// Hyperparameters for [`PolicyParams::init`].
#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub hidden: Vec<usize>,
    pub clip_eps: f64,
    pub lr: f64,
    pub gamma: f64,
    pub lam: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            clip_eps: 0.2,
            lr: 3e-3,
            gamma: 0.9,
            lam: 0.9,
            value_coef: 0.5,
            epochs: 4,
            minibatch: 32,
            init_log_std: -0.5,
        }
    }
}

impl PolicyParams {
    pub fn init<R: Rng>(obs_dim: usize, act_dim: usize, cfg: &PpoConfig, rng: &mut R) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 || cfg.hidden.contains(&0) {
            return Err(config("policy dimensions must be positive"));
        }
        let mut p = Self {
            theta: Vec::new(),
            obs_dim,
            act_dim,
            hidden: cfg.hidden.clone(),
            clip_eps: cfg.clip_eps,
            lr: cfg.lr,
            gamma: cfg.gamma,
            lam: cfg.lam,
            value_coef: cfg.value_coef,
            epochs: cfg.epochs,
            minibatch: cfg.minibatch,
            adam: AdamState { m: Vec::new(), v: Vec::new(), t: 0 },
        };
        let mut theta = Vec::with_capacity(p.len());
        let init_net = |sizes: &[usize], out_scale: f64, theta: &mut Vec<f64>, rng: &mut R| {
            for (l, w) in sizes.windows(2).enumerate() {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let scale = if l + 2 == sizes.len() { out_scale } else { 1.0 };
                for _ in 0..w[0] * w[1] {
                    theta.push(scale * bound * (2.0 * rng.random::<f64>() - 1.0));
                }
                theta.extend(std::iter::repeat_n(0.0, w[1]));
            }
        };
        init_net(&p.policy_sizes(), 0.1, &mut theta, rng);
        theta.extend(std::iter::repeat_n(cfg.init_log_std, act_dim));
        init_net(&p.value_sizes(), 1.0, &mut theta, rng);
        p.adam = AdamState { m: vec![0.0; theta.len()], v: vec![0.0; theta.len()], t: 0 };
        p.theta = theta;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(domain(format!("clip_eps {} outside (0, 1)", self.clip_eps)));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return Err(domain("gamma and lambda must lie in [0, 1]"));
        }
        if !(self.lr > 0.0) || !(self.value_coef >= 0.0) || self.epochs == 0 || self.minibatch == 0 {
            return Err(domain("learning rate, epochs and minibatch must be positive"));
        }
        if self.theta.len() != self.len() {
            return Err(config(format!("theta has {} entries, layout needs {}", self.theta.len(), self.len())));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite policy parameter".into()));
        }
        Ok(())
    }

    pub(crate) fn policy_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs_dim];
        s.extend(&self.hidden);
        s.push(self.act_dim);
        s
    }

    pub(crate) fn value_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs_dim];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    pub(crate) fn policy_len(&self) -> usize {
        mlp_len(&self.policy_sizes())
    }

    pub fn len(&self) -> usize {
        self.policy_len() + self.act_dim + mlp_len(&self.value_sizes())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn log_std_range(&self) -> std::ops::Range<usize> {
        self.policy_len()..self.policy_len() + self.act_dim
    }

    pub(crate) fn value_range(&self) -> std::ops::Range<usize> {
        self.policy_len() + self.act_dim..self.len()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.theta[self.log_std_range()]
    }

    pub(crate) fn policy_trace(&self, obs: &[f64]) -> Trace {
        mlp_forward(&self.theta[..self.policy_len()], &self.policy_sizes(), obs)
    }

    pub(crate) fn value_trace(&self, obs: &[f64]) -> Trace {
        mlp_forward(&self.theta[self.value_range()], &self.value_sizes(), obs)
    }

    /// Action mean `tanh(net(obs))`.
    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.policy_trace(obs).output().iter().map(|z| z.tanh()).collect()
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.value_trace(obs).output()[0]
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean(obs), self.log_std(), action)
    }

    /// Draws an action; returns it with its log-probability.
    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let mean = self.mean(obs);
        let action: Vec<f64> = mean
            .iter()
            .zip(self.log_std())
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_prob(&mean, self.log_std(), &action);
        (action, lp)
    }
}

pub(crate) fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = PpoConfig { hidden: vec![5], ..PpoConfig::default() };
        let p = PolicyParams::init(3, 2, &cfg, &mut rng).unwrap();
        assert_eq!(p.policy_len(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(p.len(), p.policy_len() + 2 + 3 * 5 + 5 + 5 + 1);
        assert_eq!(p.theta.len(), p.len());
        assert_eq!(p.log_std(), &[-0.5, -0.5]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sizes = [3, 4, 4, 2];
        let params: Vec<f64> = (0..mlp_len(&sizes)).map(|_| rng.random::<f64>() - 0.5).collect();
        let x = [0.3, -0.7, 1.1];
        let g_out = [0.6, -1.3];
        let mut grad = vec![0.0; params.len()];
        mlp_backward(&params, &sizes, &mlp_forward(&params, &sizes, &x), &g_out, &mut grad);
        let f = |p: &[f64]| mlp_forward(p, &sizes, &x).output().iter().zip(&g_out).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..params.len() {
            let mut hi = params.clone();
            let mut lo = params.clone();
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            let fd = (f(&hi) - f(&lo)) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn log_prob_matches_density() {
        let lp = gaussian_log_prob(&[0.5], &[0.2f64.ln()], &[0.7]);
        let sigma: f64 = 0.2;
        let pdf = (-(0.2f64 * 0.2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        assert!((lp - pdf.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_hyperparameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cfg in [
            PpoConfig { clip_eps: 1.0, ..PpoConfig::default() },
            PpoConfig { gamma: 1.5, ..PpoConfig::default() },
            PpoConfig { lam: -0.1, ..PpoConfig::default() },
        ] {
            assert!(PolicyParams::init(2, 1, &cfg, &mut rng).is_err());
        }
    }
}
