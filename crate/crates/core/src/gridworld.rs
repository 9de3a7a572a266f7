//! Jumping World: a gridworld with deterministic moves, noisy position
//! readings and four binary obstacle sensors.
//!
//! Observations are `[x + u, y + v, left, right, up, down, target_x, target_y]`
//! with `u, v ~ Uniform(-h, h)`. Grid walls behave like obstacles: moving
//! off the grid is a collision and the sensor facing a wall reads 1.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{argmax_unchecked, Network};

pub const OBS_DIM: usize = 8;
pub const N_ACTIONS: usize = 4;

pub const GOAL_REWARD: f64 = 1.0;
pub const COLLISION_REWARD: f64 = -1.0;
pub const STEP_REWARD: f64 = -0.01;

const LAYOUT_RETRIES: usize = 1000;

pub type Cell = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
    ];

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn delta(self) -> Cell {
        match self {
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
            Direction::Up => (0, 1),
            Direction::Down => (0, -1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

pub fn shift(c: Cell, d: Direction) -> Cell {
    let (dx, dy) = d.delta();
    (c.0 + dx, c.1 + dy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub n_obstacles: usize,
    pub noise_half_width: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            width: 9,
            height: 9,
            n_obstacles: 10,
            noise_half_width: 0.5,
            max_steps: 300,
            seed: 0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        if self.n_obstacles + 2 > self.width * self.height {
            return Err(Error::Config(format!(
                "{} obstacles plus agent and target do not fit in a {}x{} grid",
                self.n_obstacles, self.width, self.height
            )));
        }
        if !(0.0..=0.5).contains(&self.noise_half_width) {
            return Err(Error::Config(format!(
                "noise half-width {} outside [0, 0.5]",
                self.noise_half_width
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < self.width && (c.1 as usize) < self.height
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height as i32).flat_map(move |y| (0..self.width as i32).map(move |x| (x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminal {
    None,
    Goal,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub agent: Cell,
    pub target: Cell,
    pub obstacles: BTreeSet<Cell>,
    pub steps_elapsed: usize,
    pub terminal: Terminal,
}

impl WorldState {
    /// Blocked means off the grid or occupied by an obstacle.
    pub fn is_blocked(&self, cfg: &GridConfig, c: Cell) -> bool {
        !cfg.in_bounds(c) || self.obstacles.contains(&c)
    }

    /// Sensor readings in [`Direction::ALL`] order.
    pub fn sensors(&self, cfg: &GridConfig) -> [f64; 4] {
        Direction::ALL.map(|d| {
            if self.is_blocked(cfg, shift(self.agent, d)) {
                1.0
            } else {
                0.0
            }
        })
    }
}

pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: WorldState,
    pub observation: Observation,
    pub reward: f64,
    pub terminal: Terminal,
}

#[derive(Debug, Clone)]
pub struct JumpingWorld {
    cfg: GridConfig,
}

impl JumpingWorld {
    pub fn new(cfg: GridConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(JumpingWorld { cfg })
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    /// Samples a solvable layout uniformly: agent, target and obstacles on
    /// distinct cells, with the target reachable from the agent.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(WorldState, Observation)> {
        let mut cells: Vec<Cell> = self.cfg.cells().collect();
        for _ in 0..LAYOUT_RETRIES {
            let (chosen, _) = cells.partial_shuffle(rng, self.cfg.n_obstacles + 2);
            let agent = chosen[0];
            let target = chosen[1];
            let obstacles: BTreeSet<Cell> = chosen[2..].iter().copied().collect();
            if reachable(&self.cfg, &obstacles, agent, target) {
                let state = WorldState {
                    agent,
                    target,
                    obstacles,
                    steps_elapsed: 0,
                    terminal: Terminal::None,
                };
                let obs = self.observe(&state, rng);
                return Ok((state, obs));
            }
        }
        Err(Error::Config(format!(
            "no solvable layout found in {LAYOUT_RETRIES} attempts; grid too dense"
        )))
    }

    pub fn observe<R: Rng + ?Sized>(&self, state: &WorldState, rng: &mut R) -> Observation {
        let h = self.cfg.noise_half_width;
        let (u, v) = if h > 0.0 {
            (rng.gen_range(-h..=h), rng.gen_range(-h..=h))
        } else {
            (0.0, 0.0)
        };
        self.observe_at(state, [state.agent.0 as f64 + u, state.agent.1 as f64 + v])
    }

    /// Observation with an explicit continuous agent position.
    pub fn observe_at(&self, state: &WorldState, position: [f64; 2]) -> Observation {
        let s = state.sensors(&self.cfg);
        [
            position[0],
            position[1],
            s[0],
            s[1],
            s[2],
            s[3],
            state.target.0 as f64,
            state.target.1 as f64,
        ]
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &WorldState,
        action: Direction,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        if state.terminal != Terminal::None {
            return Err(Error::Contract(format!(
                "step called on a terminal state ({:?})",
                state.terminal
            )));
        }
        let mut next = state.clone();
        next.steps_elapsed += 1;
        let cell = shift(state.agent, action);
        let reward = if state.is_blocked(&self.cfg, cell) {
            if self.cfg.in_bounds(cell) {
                next.agent = cell;
            }
            next.terminal = Terminal::Collision;
            COLLISION_REWARD
        } else if cell == state.target {
            next.agent = cell;
            next.terminal = Terminal::Goal;
            GOAL_REWARD
        } else {
            next.agent = cell;
            if next.steps_elapsed >= self.cfg.max_steps {
                next.terminal = Terminal::Timeout;
            }
            STEP_REWARD
        };
        let observation = self.observe(&next, rng);
        let terminal = next.terminal;
        Ok(StepOutcome {
            state: next,
            observation,
            reward,
            terminal,
        })
    }
}

/// Breadth-first reachability avoiding obstacles.
pub fn reachable(cfg: &GridConfig, obstacles: &BTreeSet<Cell>, from: Cell, to: Cell) -> bool {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        if c == to {
            return true;
        }
        for d in Direction::ALL {
            let n = shift(c, d);
            if cfg.in_bounds(n) && !obstacles.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Argmax,
    SoftmaxSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub steps: Vec<StepRecord>,
    pub terminal: Terminal,
}

impl EpisodeTrace {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn select_action<R: Rng + ?Sized>(scores: &[f64], mode: PolicyMode, rng: &mut R) -> usize {
    match mode {
        PolicyMode::Argmax => argmax_unchecked(scores),
        PolicyMode::SoftmaxSample => {
            let probs = softmax(scores);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        }
    }
}

pub(crate) fn check_policy_shape(net: &Network) -> Result<()> {
    if net.input_dim() != OBS_DIM || net.output_dim() != N_ACTIONS {
        return Err(Error::InvalidNetwork(format!(
            "policy must map {OBS_DIM} inputs to {N_ACTIONS} outputs, got {} -> {}",
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(())
}

/// Runs one episode from a given state and first observation.
pub fn run_episode<R: Rng + ?Sized>(
    net: &Network,
    world: &JumpingWorld,
    mut state: WorldState,
    mut obs: Observation,
    mode: PolicyMode,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let mut steps = Vec::new();
    while state.terminal == Terminal::None {
        let scores = net.forward(&obs)?;
        let action = select_action(&scores, mode, rng);
        let out = world.step(&state, Direction::ALL[action], rng)?;
        steps.push(StepRecord {
            observation: obs.to_vec(),
            action,
            reward: out.reward,
        });
        state = out.state;
        obs = out.observation;
    }
    Ok(EpisodeTrace {
        episode: 0,
        steps,
        terminal: state.terminal,
    })
}

/// Runs `n_episodes` from fresh resets. Each episode draws its own seed from
/// `rng` up front, so results do not depend on scheduling.
pub fn rollout<R: Rng + ?Sized>(
    net: &Network,
    cfg: &GridConfig,
    n_episodes: usize,
    rng: &mut R,
    mode: PolicyMode,
) -> Result<Vec<EpisodeTrace>> {
    check_policy_shape(net)?;
    let world = JumpingWorld::new(cfg.clone())?;
    let seeds: Vec<u64> = (0..n_episodes).map(|_| rng.gen()).collect();
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let mut erng = ChaCha8Rng::seed_from_u64(seed);
            let (state, obs) = world.reset(&mut erng)?;
            let mut trace = run_episode(net, &world, state, obs, mode, &mut erng)?;
            trace.episode = i;
            Ok(trace)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Layer};

    fn world(n_obstacles: usize) -> JumpingWorld {
        JumpingWorld::new(GridConfig {
            n_obstacles,
            ..Default::default()
        })
        .unwrap()
    }

    fn state(agent: Cell, target: Cell, obstacles: &[Cell]) -> WorldState {
        WorldState {
            agent,
            target,
            obstacles: obstacles.iter().copied().collect(),
            steps_elapsed: 0,
            terminal: Terminal::None,
        }
    }

    pub(crate) fn constant_policy(action: usize) -> Network {
        let mut bias = vec![0.0; N_ACTIONS];
        bias[action] = 1.0;
        Network::new(
            OBS_DIM,
            vec![Layer::new(vec![vec![0.0; OBS_DIM]; N_ACTIONS], bias, Activation::Linear).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn step_rewards() {
        let w = world(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = state((2, 3), (6, 6), &[(3, 3)]);
        let out = w.step(&s, Direction::Right, &mut rng).unwrap();
        assert_eq!(out.terminal, Terminal::Collision);
        assert_eq!(out.reward, -1.0);

        let s = state((5, 6), (6, 6), &[]);
        let out = w.step(&s, Direction::Right, &mut rng).unwrap();
        assert_eq!((out.terminal, out.reward), (Terminal::Goal, 1.0));

        let s = state((4, 4), (6, 6), &[]);
        let out = w.step(&s, Direction::Up, &mut rng).unwrap();
        assert_eq!((out.terminal, out.reward), (Terminal::None, -0.01));
        assert_eq!(out.state.agent, (4, 5));
        assert!(w.step(&out.state, Direction::Up, &mut rng).is_ok());

        let s = state((0, 4), (6, 6), &[]);
        let out = w.step(&s, Direction::Left, &mut rng).unwrap();
        assert_eq!(out.terminal, Terminal::Collision);
        assert_eq!(out.state.agent, (0, 4));
        assert!(matches!(
            w.step(&out.state, Direction::Up, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn timeout_at_step_cap() {
        let w = JumpingWorld::new(GridConfig {
            n_obstacles: 0,
            max_steps: 2,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = state((4, 4), (8, 8), &[]);
        let s = w.step(&s, Direction::Up, &mut rng).unwrap().state;
        let out = w.step(&s, Direction::Down, &mut rng).unwrap();
        assert_eq!((out.terminal, out.reward), (Terminal::Timeout, STEP_REWARD));
    }

    #[test]
    fn reset_determinism_and_sensors() {
        let w = world(0);
        let a = w.reset(&mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = w.reset(&mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        for seed in 0..200 {
            let (s, obs) = w.reset(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let on_edge = [
                s.agent.0 == 0,
                s.agent.0 == 8,
                s.agent.1 == 8,
                s.agent.1 == 0,
            ];
            for d in 0..4 {
                assert_eq!(obs[2 + d] == 1.0, on_edge[d]);
            }
        }
    }

    #[test]
    fn dense_grid_rejected() {
        let cfg = GridConfig {
            width: 5,
            height: 5,
            n_obstacles: 24,
            ..Default::default()
        };
        assert!(matches!(JumpingWorld::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn layouts_are_solvable_and_distinct() {
        let w = world(10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (s, obs) = w.reset(&mut rng).unwrap();
            assert_eq!(s.obstacles.len(), 10);
            assert!(!s.obstacles.contains(&s.agent) && !s.obstacles.contains(&s.target));
            assert_ne!(s.agent, s.target);
            assert!(reachable(w.config(), &s.obstacles, s.agent, s.target));
            assert!((obs[0] - s.agent.0 as f64).abs() <= 0.5);
            assert!((obs[1] - s.agent.1 as f64).abs() <= 0.5);
        }
    }

    #[test]
    fn always_left_policy_hits_wall() {
        let traces = rollout(
            &constant_policy(0),
            &GridConfig {
                n_obstacles: 0,
                ..Default::default()
            },
            50,
            &mut ChaCha8Rng::seed_from_u64(5),
            PolicyMode::Argmax,
        )
        .unwrap();
        for t in &traces {
            assert!(t.steps.iter().all(|s| s.action == 0));
            assert!(matches!(t.terminal, Terminal::Collision | Terminal::Goal));
            if t.terminal == Terminal::Collision {
                assert_eq!(t.steps.last().unwrap().observation[2], 1.0);
            }
        }
    }

    #[test]
    fn rollout_is_reproducible() {
        let net = constant_policy(2);
        let cfg = GridConfig::default();
        let a = rollout(&net, &cfg, 20, &mut ChaCha8Rng::seed_from_u64(9), PolicyMode::Argmax).unwrap();
        let b = rollout(&net, &cfg, 20, &mut ChaCha8Rng::seed_from_u64(9), PolicyMode::Argmax).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rollout_rejects_wrong_shape() {
        let net = Network::new(
            2,
            vec![Layer::new(vec![vec![1.0, 1.0]], vec![0.0], Activation::Linear).unwrap()],
        )
        .unwrap();
        assert!(rollout(
            &net,
            &GridConfig::default(),
            1,
            &mut ChaCha8Rng::seed_from_u64(0),
            PolicyMode::Argmax
        )
        .is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -3.0, 2.5, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }
}
