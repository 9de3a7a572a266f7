//! Randomized assignment-tree estimation of the adversarial rate.
//!
//! Each trial descends `s` levels, cutting the box so that sampled violations
//! fall evenly on both sides and keeping one side by a fair coin, then counts
//! the leaf exactly. A trial reports the leaf's violating volume, as a
//! fraction of the original precondition, times `2^s`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{InputBox, Interval};
use crate::network::Network;
use crate::verifier::{adversarial_rate_partitioned, Dnf, Property, VerifierConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterConfig {
    pub splits: u32,
    pub trials: usize,
    pub balance_samples: usize,
    pub leaf_epsilon: f64,
    pub seed: u64,
    /// Box budget for each leaf verification.
    pub leaf_max_boxes: usize,
}

impl Default for CounterConfig {
    fn default() -> Self {
        CounterConfig {
            splits: 4,
            trials: 15,
            balance_samples: 256,
            leaf_epsilon: 1.0 / 1024.0,
            seed: 0,
            leaf_max_boxes: crate::verifier::DEFAULT_MAX_BOXES,
        }
    }
}

impl CounterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 || self.trials == 0 || self.balance_samples == 0 {
            return Err(Error::Config(
                "splits, trials and balance_samples must be positive".into(),
            ));
        }
        if self.splits > 60 {
            return Err(Error::Config(format!("{} splits is too deep", self.splits)));
        }
        self.leaf_config().validate()
    }

    fn leaf_config(&self) -> VerifierConfig {
        VerifierConfig {
            epsilon: self.leaf_epsilon,
            max_boxes: self.leaf_max_boxes,
            workers: 0,
            max_stored: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountEstimate {
    pub property: String,
    pub median_rate: f64,
    pub trial_rates: Vec<f64>,
    pub mean_rate: f64,
    pub quantiles: (f64, f64),
    /// Trials whose leaf verification ran out of budget.
    pub degraded: Vec<bool>,
}

/// Picks the free dimension whose midpoint split divides the sampled
/// violations most evenly (ties go to the widest dimension, then the lowest
/// index) and cuts it at the median violating coordinate. With no violating
/// samples, or only violating ones, the cut is at the midpoint.
pub fn balanced_split<R: Rng + ?Sized>(
    net: &Network,
    post: &Dnf,
    bx: &InputBox,
    rng: &mut R,
    n_samples: usize,
) -> Result<(usize, InputBox, InputBox)> {
    let free = bx.free_dims();
    if free.is_empty() {
        return Err(Error::Contract("cannot split a degenerate box".into()));
    }
    let mids: Vec<f64> = free.iter().map(|&d| bx.dims()[d].mid()).collect();
    let mut left = vec![0i64; free.len()];
    let mut right = vec![0i64; free.len()];
    let mut hits: Vec<Vec<f64>> = Vec::new();
    let mut x = Vec::with_capacity(bx.dim_count());
    for _ in 0..n_samples {
        bx.sample_into(rng, &mut x);
        if !post.holds(&net.eval(&x)) {
            continue;
        }
        for (k, &d) in free.iter().enumerate() {
            if x[d] < mids[k] {
                left[k] += 1;
            } else {
                right[k] += 1;
            }
        }
        hits.push(x.clone());
    }
    let best = (0..free.len())
        .min_by(|&a, &b| {
            let ia = (left[a] - right[a]).abs();
            let ib = (left[b] - right[b]).abs();
            let wa = bx.dims()[free[a]].width();
            let wb = bx.dims()[free[b]].width();
            ia.cmp(&ib).then(wb.total_cmp(&wa)).then(a.cmp(&b))
        })
        .expect("at least one free dimension");
    let dim = free[best];
    let span = bx.dims()[dim];
    let cut = if hits.is_empty() || hits.len() == n_samples {
        span.mid()
    } else {
        let mut coords: Vec<f64> = hits.iter().map(|h| h[dim]).collect();
        coords.sort_by(f64::total_cmp);
        let m = quantile(&coords, 0.5);
        if span.lo < m && m < span.hi {
            m
        } else {
            span.mid()
        }
    };
    let l = bx.with_dim(dim, Interval { lo: span.lo, hi: cut });
    let r = bx.with_dim(dim, Interval { lo: cut, hi: span.hi });
    Ok((dim, l, r))
}

/// Share of `parent` kept by `child`, exact for midpoint cuts.
fn kept_share(parent: &InputBox, child: &InputBox, dim: usize) -> f64 {
    let p = parent.dims()[dim];
    let c = child.dims()[dim];
    if c.lo == p.mid() || c.hi == p.mid() {
        0.5
    } else {
        c.width() / p.width()
    }
}

struct Trial {
    rate: f64,
    degraded: bool,
}

fn run_trial(net: &Network, prop: &Property, cfg: &CounterConfig, index: usize) -> Result<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index as u64));
    let mut leaf = prop.pre.clone();
    let mut scale = 1.0;
    for _ in 0..cfg.splits {
        let (dim, l, r) = balanced_split(net, &prop.post, &leaf, &mut rng, cfg.balance_samples)?;
        let next = if rng.gen::<bool>() { l } else { r };
        scale *= 2.0 * kept_share(&leaf, &next, dim);
        leaf = next;
    }
    let report = adversarial_rate_partitioned(net, prop, &[leaf.clone()], &cfg.leaf_config())?;
    Ok(if report.complete {
        Trial {
            rate: report.rate_lower * scale,
            degraded: false,
        }
    } else {
        Trial {
            rate: report.rate_upper * scale,
            degraded: true,
        }
    })
}

pub fn estimate_rate(net: &Network, prop: &Property, cfg: &CounterConfig) -> Result<CountEstimate> {
    cfg.validate()?;
    prop.validate_for(net)?;
    let trials: Vec<Trial> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(net, prop, cfg, i))
        .collect::<Result<_>>()?;
    if trials.iter().all(|t| t.degraded) {
        return Err(Error::AllTrialsDegraded {
            trials: cfg.trials,
        });
    }
    let trial_rates: Vec<f64> = trials.iter().map(|t| t.rate.clamp(0.0, 1.0)).collect();
    let mut sorted = trial_rates.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(CountEstimate {
        property: prop.name.clone(),
        median_rate: quantile(&sorted, 0.5),
        mean_rate: trial_rates.iter().sum::<f64>() / trial_rates.len() as f64,
        quantiles: (quantile(&sorted, 0.25), quantile(&sorted, 0.75)),
        degraded: trials.iter().map(|t| t.degraded).collect(),
        trial_rates,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() && frac > 0.0 {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}
