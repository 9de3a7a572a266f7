use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Activation;
use crate::properties::PropertyFamily;
use crate::trainer::{train, TrainConfig};
use crate::verifier::VerifierConfig;

use super::episodes::empirical_rates;
use super::spatial::grid_family_rate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sizes: Vec<Vec<usize>>,
    pub activations: Vec<Activation>,
    pub seeds: Vec<u64>,
    /// Template for every run; size, activation and seed are overridden.
    pub train: TrainConfig,
    pub success_cutoff: f64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hidden: String,
    pub activation: String,
    pub n_models: usize,
    pub n_survivors: usize,
    pub mean_rate: Option<f64>,
    pub std_rate: Option<f64>,
}

pub fn size_label(hidden: &[usize]) -> String {
    match hidden {
        [] => "0".into(),
        [first, rest @ ..] if rest.iter().all(|h| h == first) => format!("{}x{}", hidden.len(), first),
        _ => hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("-"),
    }
}

/// Trains every (size, activation, seed) combination, keeps the models whose
/// argmax success rate reaches the cutoff and reports the mean and
/// population standard deviation of their family rate per cell.
pub fn architecture_sweep(
    cfg: &SweepConfig,
    family: &PropertyFamily,
    vcfg: &VerifierConfig,
) -> Result<Vec<SweepRow>> {
    if cfg.sizes.is_empty() || cfg.activations.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one size, activation and seed".into()));
    }
    let mut jobs = Vec::new();
    for hidden in &cfg.sizes {
        for &activation in &cfg.activations {
            for &seed in &cfg.seeds {
                jobs.push(TrainConfig {
                    hidden_sizes: hidden.clone(),
                    activation,
                    seed,
                    ..cfg.train.clone()
                });
            }
        }
    }
    let rates: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|tc| {
            let net = train(tc)?.pop().expect("train returns the final model").net;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.eval_seed);
            let emp = empirical_rates(&net, &tc.grid, cfg.eval_episodes, &mut rng)?;
            if emp.success.rate < cfg.success_cutoff {
                return Ok(None);
            }
            Ok(Some(grid_family_rate(&net, &tc.grid, family, vcfg)?.rate.rate_upper))
        })
        .collect::<Result<_>>()?;
    let per_cell = cfg.seeds.len();
    let mut rows = Vec::new();
    for (k, chunk) in rates.chunks(per_cell).enumerate() {
        let tc = &jobs[k * per_cell];
        let kept: Vec<f64> = chunk.iter().flatten().copied().collect();
        let (mean, std) = if kept.is_empty() {
            (None, None)
        } else {
            let m = kept.iter().sum::<f64>() / kept.len() as f64;
            let v = kept.iter().map(|r| (r - m).powi(2)).sum::<f64>() / kept.len() as f64;
            (Some(m), Some(v.sqrt()))
        };
        rows.push(SweepRow {
            hidden: size_label(&tc.hidden_sizes),
            activation: tc.activation.to_string(),
            n_models: per_cell,
            n_survivors: kept.len(),
            mean_rate: mean,
            std_rate: std,
        });
    }
    Ok(rows)
}

/// Missing cells are written with empty rate fields.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Contract(format!("csv: {e}"));
    w.write_record(["hidden", "activation", "n_models", "n_survivors", "mean_rate", "std_rate"])
        .map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.hidden.clone(),
            r.activation.clone(),
            r.n_models.to_string(),
            r.n_survivors.to_string(),
            opt(r.mean_rate),
            opt(r.std_rate),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
