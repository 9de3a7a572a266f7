use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{
    check_policy_shape, rollout, run_episode, shift, Cell, Direction, GridConfig, JumpingWorld,
    PolicyMode, Terminal, WorldState, OBS_DIM,
};
use crate::network::Network;

/// A proportion with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub rate: f64,
    pub stderr: f64,
}

impl Rate {
    pub fn from_counts(hits: usize, n: usize) -> Rate {
        if n == 0 {
            return Rate {
                rate: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let p = hits as f64 / n as f64;
        Rate {
            rate: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRates {
    pub success: Rate,
    pub collision: Rate,
    pub timeout: Rate,
    pub n_episodes: usize,
}

/// Argmax-policy rollouts from random resets, classified by how each
/// episode ended.
pub fn empirical_rates<R: Rng + ?Sized>(
    net: &Network,
    cfg: &GridConfig,
    n_episodes: usize,
    rng: &mut R,
) -> Result<EmpiricalRates> {
    let traces = rollout(net, cfg, n_episodes, rng, PolicyMode::Argmax)?;
    let count = |t: Terminal| traces.iter().filter(|e| e.terminal == t).count();
    Ok(EmpiricalRates {
        success: Rate::from_counts(count(Terminal::Goal), n_episodes),
        collision: Rate::from_counts(count(Terminal::Collision), n_episodes),
        timeout: Rate::from_counts(count(Terminal::Timeout), n_episodes),
        n_episodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvCollision {
    pub collision: Rate,
    pub n_episodes: usize,
    /// Counterexamples that could not be realized as a world state.
    pub skipped: usize,
    pub delta: f64,
}

/// Rounds a counterexample to the layout it describes: agent and target
/// cells, obstacles behind every active sensor. `None` when the sensors
/// contradict the walls or the target sits on the agent or an obstacle.
fn realizable_core(cfg: &GridConfig, x: &[f64]) -> Option<(Cell, Cell, BTreeSet<Cell>, BTreeSet<Cell>)> {
    if x.len() != OBS_DIM || x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cell = |a: f64, b: f64| (a.round() as i32, b.round() as i32);
    let agent = cell(x[0], x[1]);
    let target = cell(x[6], x[7]);
    if !cfg.in_bounds(agent) || !cfg.in_bounds(target) || agent == target {
        return None;
    }
    let mut obstacles = BTreeSet::new();
    let mut keep_free = BTreeSet::from([agent, target]);
    for d in Direction::ALL {
        let bit = x[2 + d.index()];
        if bit != 0.0 && bit != 1.0 {
            return None;
        }
        let n = shift(agent, d);
        match (bit == 1.0, cfg.in_bounds(n)) {
            (true, true) if n == target => return None,
            (true, true) => {
                obstacles.insert(n);
            }
            (false, false) => return None,
            (false, true) => {
                keep_free.insert(n);
            }
            (true, false) => {}
        }
    }
    Some((agent, target, obstacles, keep_free))
}

/// World state consistent with a counterexample; remaining obstacles are
/// drawn at random from cells that keep the sensor readings intact.
pub fn realize_counterexample<R: Rng + ?Sized>(
    cfg: &GridConfig,
    x: &[f64],
    rng: &mut R,
) -> Option<WorldState> {
    let (agent, target, mut obstacles, keep_free) = realizable_core(cfg, x)?;
    let mut free: Vec<Cell> = cfg
        .cells()
        .filter(|c| !keep_free.contains(c) && !obstacles.contains(c))
        .collect();
    let missing = cfg.n_obstacles.saturating_sub(obstacles.len()).min(free.len());
    let (extra, _) = free.partial_shuffle(rng, missing);
    obstacles.extend(extra.iter().copied());
    Some(WorldState {
        agent,
        target,
        obstacles,
        steps_elapsed: 0,
        terminal: Terminal::None,
    })
}

/// Counterexample with its continuous coordinates moved by up to `delta`,
/// clamped to the rounding cell of each coordinate.
fn perturb<R: Rng + ?Sized>(x: &[f64], delta: f64, rng: &mut R) -> [f64; OBS_DIM] {
    let mut out = [0.0; OBS_DIM];
    out.copy_from_slice(x);
    for i in [0, 1, 6, 7] {
        let c = x[i].round();
        let u = if delta > 0.0 { rng.gen_range(-delta..=delta) } else { 0.0 };
        out[i] = (x[i] + u).clamp(c - 0.5, c + 0.5);
    }
    out
}

/// Collision rate of argmax rollouts started next to counterexamples.
pub fn adv_collision_rate<R: Rng + ?Sized>(
    net: &Network,
    cfg: &GridConfig,
    counterexamples: &[Vec<f64>],
    delta: f64,
    n_episodes: usize,
    rng: &mut R,
) -> Result<AdvCollision> {
    check_policy_shape(net)?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("proximity radius {delta} must be >= 0")));
    }
    let usable: Vec<&Vec<f64>> = counterexamples
        .iter()
        .filter(|x| realizable_core(cfg, x).is_some())
        .collect();
    let skipped = counterexamples.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::Unrealizable(format!(
            "none of {} counterexamples maps to a world state",
            counterexamples.len()
        )));
    }
    let world = JumpingWorld::new(cfg.clone())?;
    let seeds: Vec<u64> = (0..n_episodes).map(|_| rng.gen()).collect();
    let collisions: Vec<bool> = seeds
        .par_iter()
        .map(|&seed| {
            let mut erng = ChaCha8Rng::seed_from_u64(seed);
            let x = usable[erng.gen_range(0..usable.len())];
            let state = realize_counterexample(cfg, x, &mut erng).expect("checked realizable");
            let obs = perturb(x, delta, &mut erng);
            let trace = run_episode(net, &world, state, obs, PolicyMode::Argmax, &mut erng)?;
            Ok(trace.terminal == Terminal::Collision)
        })
        .collect::<Result<_>>()?;
    Ok(AdvCollision {
        collision: Rate::from_counts(collisions.iter().filter(|c| **c).count(), n_episodes),
        n_episodes,
        skipped,
        delta,
    })
}

/// Model B rolled out next to model A's counterexamples.
pub fn cross_seed_adv_rate<R: Rng + ?Sized>(
    net_b: &Network,
    counterexamples_of_a: &[Vec<f64>],
    cfg: &GridConfig,
    delta: f64,
    n_episodes: usize,
    rng: &mut R,
) -> Result<AdvCollision> {
    adv_collision_rate(net_b, cfg, counterexamples_of_a, delta, n_episodes, rng)
}
