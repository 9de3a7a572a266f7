//! Episodic REINFORCE for Jumping World policies.
//!
//! Gradients are computed by hand for the dense architectures in
//! [`crate::network`]; the objective for one trace is
//! `sum_t (G_t - b) log pi(a_t | s_t) + beta * H(pi(. | s_t))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{
    run_episode, softmax, EpisodeTrace, GridConfig, JumpingWorld, PolicyMode, Terminal,
    N_ACTIONS, OBS_DIM,
};
use crate::network::{Activation, Layer, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub entropy_bonus: f64,
    /// Episodes whose gradients are averaged into one update.
    pub batch_episodes: usize,
    /// Decay of the moving-average baseline.
    pub baseline_decay: f64,
    /// Training episodes in the running success-rate window.
    pub success_window: usize,
    pub grid: GridConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 20_000,
            learning_rate: 1e-3,
            gamma: 0.99,
            hidden_sizes: vec![32, 32],
            activation: Activation::Relu,
            seed: 0,
            checkpoint_every: 1000,
            entropy_bonus: 0.01,
            batch_episodes: 8,
            baseline_decay: 0.99,
            success_window: 500,
            grid: GridConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} outside [0, 1]", self.gamma)));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be finite and >= 0".into()));
        }
        if self.checkpoint_every == 0 || self.batch_episodes == 0 || self.success_window == 0 {
            return Err(Error::Config(
                "checkpoint_every, batch_episodes and success_window must be positive".into(),
            ));
        }
        self.activation.validate()?;
        self.grid.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub episode_index: usize,
    pub running_success_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Network,
    pub meta: CheckpointMeta,
}

/// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// zero biases.
pub fn init_network<R: Rng + ?Sized>(
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    activation: Activation,
    rng: &mut R,
) -> Result<Network> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut fan_in = input_dim;
    let widths = hidden.iter().copied().chain(std::iter::once(output_dim));
    let last = hidden.len();
    for (i, width) in widths.enumerate() {
        let scale = 1.0 / (fan_in as f64).sqrt();
        let weights = (0..width * fan_in)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        let act = if i == last { Activation::Linear } else { activation };
        layers.push(Layer::from_flat(weights, fan_in, vec![0.0; width], act)?);
        fan_in = width;
    }
    Network::new(input_dim, layers)
}

/// Discounted return-to-go for each step of a reward sequence.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Parameter-shaped gradient: one `(weights, bias)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradient {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl NetworkGradient {
    pub fn zeros(net: &Network) -> Self {
        NetworkGradient {
            layers: net
                .layers()
                .iter()
                .map(|l| (vec![0.0; l.weights().len()], vec![0.0; l.out_dim()]))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b))
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &NetworkGradient, scale: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-step inputs to the gradient: observation, action and the weight on
/// its log-probability.
struct WeightedStep<'a> {
    obs: &'a [f64],
    action: usize,
    advantage: f64,
}

/// Value of the surrogate objective for one trace. Used as the
/// finite-difference target of [`policy_gradient`].
pub fn surrogate_objective(
    net: &Network,
    trace: &EpisodeTrace,
    gamma: f64,
    baseline: f64,
    entropy_bonus: f64,
) -> f64 {
    let rewards: Vec<f64> = trace.steps.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, gamma);
    trace
        .steps
        .iter()
        .zip(&returns)
        .map(|(s, g)| {
            let p = softmax(&net.eval(&s.observation));
            let entropy: f64 = -p.iter().map(|q| q * q.ln()).sum::<f64>();
            (g - baseline) * p[s.action].ln() + entropy_bonus * entropy
        })
        .sum()
}

/// Gradient of [`surrogate_objective`] with respect to every parameter.
pub fn policy_gradient(
    net: &Network,
    trace: &EpisodeTrace,
    gamma: f64,
    baseline: f64,
    entropy_bonus: f64,
) -> Result<NetworkGradient> {
    if trace.is_empty() {
        return Err(Error::Contract("policy gradient of an empty trace".into()));
    }
    let rewards: Vec<f64> = trace.steps.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, gamma);
    let steps = trace.steps.iter().zip(&returns).map(|(s, g)| WeightedStep {
        obs: &s.observation,
        action: s.action,
        advantage: g - baseline,
    });
    let mut grad = NetworkGradient::zeros(net);
    let mut pass = Backprop::new(net);
    for step in steps {
        pass.accumulate(net, &step, entropy_bonus, &mut grad);
    }
    if !grad.is_finite() {
        return Err(Error::Numeric {
            layer: net.layers().len() - 1,
        });
    }
    Ok(grad)
}

/// One plain gradient-ascent step on a single trace (no entropy term).
pub fn policy_gradient_step(
    net: &Network,
    trace: &EpisodeTrace,
    gamma: f64,
    baseline: f64,
    lr: f64,
) -> Result<Network> {
    let grad = policy_gradient(net, trace, gamma, baseline, 0.0)?;
    let mut out = net.clone();
    apply_update(&mut out, &grad, |_, g| lr * g);
    Ok(out)
}

fn apply_update(net: &mut Network, grad: &NetworkGradient, mut f: impl FnMut(usize, f64) -> f64) {
    let mut idx = 0;
    for (layer, (gw, gb)) in net.layers_mut().iter_mut().zip(&grad.layers) {
        let (w, b) = layer.params_mut();
        for (p, g) in w.iter_mut().chain(b.iter_mut()).zip(gw.iter().chain(gb)) {
            *p += f(idx, *g);
            idx += 1;
        }
    }
}

/// Buffers for the forward/backward pass through a network.
struct Backprop {
    /// Per layer: input activations and pre-activations.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl Backprop {
    fn new(net: &Network) -> Self {
        let n = net.layers().len();
        Backprop {
            inputs: vec![Vec::new(); n],
            pre: vec![Vec::new(); n],
            delta: Vec::new(),
            next_delta: Vec::new(),
        }
    }

    fn accumulate(
        &mut self,
        net: &Network,
        step: &WeightedStep<'_>,
        entropy_bonus: f64,
        grad: &mut NetworkGradient,
    ) {
        let layers = net.layers();
        let mut cur = step.obs.to_vec();
        for (l, layer) in layers.iter().enumerate() {
            self.inputs[l].clone_from(&cur);
            let mut pre = Vec::new();
            layer.affine_into(&cur, &mut pre);
            cur = pre.iter().map(|v| layer.activation().apply(*v)).collect();
            self.pre[l] = pre;
        }
        let p = softmax(&cur);
        let entropy: f64 = -p.iter().map(|q| q * q.ln()).sum::<f64>();
        // d/dz of A log p_a + beta H
        self.delta.clear();
        self.delta.extend(p.iter().enumerate().map(|(i, &pi)| {
            let onehot = if i == step.action { 1.0 } else { 0.0 };
            step.advantage * (onehot - pi) - entropy_bonus * pi * (pi.ln() + entropy)
        }));
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let act = layer.activation();
            for (d, z) in self.delta.iter_mut().zip(&self.pre[l]) {
                *d *= act.derivative(*z);
            }
            let (gw, gb) = &mut grad.layers[l];
            let in_dim = layer.in_dim();
            for (i, &d) in self.delta.iter().enumerate() {
                gb[i] += d;
                if d != 0.0 {
                    let row = &mut gw[i * in_dim..(i + 1) * in_dim];
                    for (g, x) in row.iter_mut().zip(&self.inputs[l]) {
                        *g += d * x;
                    }
                }
            }
            if l > 0 {
                self.next_delta.clear();
                self.next_delta.resize(in_dim, 0.0);
                for (i, &d) in self.delta.iter().enumerate() {
                    if d != 0.0 {
                        for (nd, w) in self.next_delta.iter_mut().zip(layer.row(i)) {
                            *nd += d * w;
                        }
                    }
                }
                std::mem::swap(&mut self.delta, &mut self.next_delta);
            }
        }
    }
}

/// Adam state for gradient ascent.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grad: &NetworkGradient, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let (m, v) = (&mut self.m, &mut self.v);
        apply_update(net, grad, |i, g| {
            m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g;
            v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g * g;
            lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS)
        });
    }
}

fn initial_state(cfg: &TrainConfig) -> Result<(Network, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = init_network(OBS_DIM, &cfg.hidden_sizes, N_ACTIONS, cfg.activation, &mut rng)?;
    Ok((net, rng))
}

/// The network `train` starts from.
pub fn initial_network(cfg: &TrainConfig) -> Result<Network> {
    cfg.validate()?;
    Ok(initial_state(cfg)?.0)
}

/// Trains a policy, returning a checkpoint every `checkpoint_every` episodes
/// plus the final model.
pub fn train(cfg: &TrainConfig) -> Result<Vec<Checkpoint>> {
    train_with_progress(cfg, |_| {})
}

pub fn train_with_progress(
    cfg: &TrainConfig,
    mut progress: impl FnMut(&CheckpointMeta),
) -> Result<Vec<Checkpoint>> {
    cfg.validate()?;
    let (mut net, mut rng) = initial_state(cfg)?;
    let world = JumpingWorld::new(cfg.grid.clone())?;
    let mut adam = Adam::new(net.parameter_count());
    let mut baseline = 0.0;
    let mut baseline_ready = false;
    let mut batch = NetworkGradient::zeros(&net);
    let mut in_batch = 0usize;
    let mut window = std::collections::VecDeque::with_capacity(cfg.success_window);
    let mut checkpoints = Vec::new();

    for episode in 0..cfg.episodes {
        let (state, obs) = world.reset(&mut rng)?;
        let trace = run_episode(&net, &world, state, obs, PolicyMode::SoftmaxSample, &mut rng)
            .map_err(|_| Error::Divergence { episode })?;
        if window.len() == cfg.success_window {
            window.pop_front();
        }
        window.push_back(trace.terminal == Terminal::Goal);

        let rewards: Vec<f64> = trace.steps.iter().map(|s| s.reward).collect();
        let returns = discounted_returns(&rewards, cfg.gamma);
        let mean_return = returns.iter().sum::<f64>() / returns.len() as f64;
        if !baseline_ready {
            baseline = mean_return;
            baseline_ready = true;
        }
        let grad = policy_gradient(&net, &trace, cfg.gamma, baseline, cfg.entropy_bonus)
            .map_err(|_| Error::Divergence { episode })?;
        batch.add_scaled(&grad, 1.0 / trace.len() as f64);
        in_batch += 1;
        baseline = cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * mean_return;

        if in_batch == cfg.batch_episodes {
            let scale = 1.0 / in_batch as f64;
            let mut avg = NetworkGradient::zeros(&net);
            avg.add_scaled(&batch, scale);
            adam.step(&mut net, &avg, cfg.learning_rate);
            if net.layers().iter().any(|l| l.weights().iter().any(|w| !w.is_finite())) {
                return Err(Error::Divergence { episode });
            }
            batch = NetworkGradient::zeros(&net);
            in_batch = 0;
        }

        let done = episode + 1;
        if done % cfg.checkpoint_every == 0 || done == cfg.episodes {
            let meta = CheckpointMeta {
                episode_index: done,
                running_success_rate: window.iter().filter(|s| **s).count() as f64
                    / window.len() as f64,
                seed: cfg.seed,
            };
            progress(&meta);
            checkpoints.push(Checkpoint {
                net: net.clone(),
                meta,
            });
        }
    }
    if checkpoints.is_empty() {
        checkpoints.push(Checkpoint {
            net,
            meta: CheckpointMeta {
                episode_index: 0,
                running_success_rate: 0.0,
                seed: cfg.seed,
            },
        });
    }
    Ok(checkpoints)
}
