//! Measurement harness for trained Jumping World agents: empirical outcome
//! rates, verified adversarial rates, collision rates near counterexamples,
//! spatial heatmaps, checkpoint sweeps and architecture sweeps.

mod episodes;
mod spatial;
mod sweep;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use episodes::{
    adv_collision_rate, cross_seed_adv_rate, empirical_rates, realize_counterexample,
    AdvCollision, EmpiricalRates, Rate,
};
pub use spatial::{
    cell_box, family_id, family_rate, grid_family_rate, spatial_heatmap, temporal_sweep,
    FamilyAnalysis, FamilyRate, Heatmap, PropertyRate, TemporalPoint,
};
pub use sweep::{architecture_sweep, size_label, sweep_csv, SweepConfig, SweepRow};

use crate::error::Result;
use crate::gridworld::GridConfig;
use crate::network::Network;
use crate::properties::PropertyFamily;
use crate::verifier::VerifierConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub n_episodes: usize,
    /// Proximity radius around counterexamples, in cells.
    pub delta: f64,
    pub counterexamples_per_property: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            n_episodes: 500,
            delta: 0.25,
            counterexamples_per_property: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub success: Rate,
    pub collision: Rate,
    pub timeout: Rate,
    pub adversarial_rate: f64,
    pub adversarial_rate_lower: f64,
    pub verification_complete: bool,
    /// `None` when verification found no counterexample.
    pub adv_collision: Option<AdvCollision>,
    pub n_episodes: usize,
}

#[derive(Debug, Clone)]
pub struct ModelEvaluation {
    pub metrics: ModelMetrics,
    pub family: FamilyAnalysis,
    pub counterexamples: Vec<Vec<f64>>,
}

/// All four rates for one model. Random-reset and counterexample rollouts use
/// the same episode count and seed.
pub fn evaluate_model(
    net: &Network,
    grid: &GridConfig,
    family: &PropertyFamily,
    vcfg: &VerifierConfig,
    acfg: &AnalysisConfig,
) -> Result<ModelEvaluation> {
    let emp = empirical_rates(net, grid, acfg.n_episodes, &mut ChaCha8Rng::seed_from_u64(acfg.seed))?;
    let analysis = grid_family_rate(net, grid, family, vcfg)?;
    let counterexamples = analysis.counterexamples(net, family, acfg.counterexamples_per_property);
    let adv_collision = if counterexamples.is_empty() {
        None
    } else {
        Some(adv_collision_rate(
            net,
            grid,
            &counterexamples,
            acfg.delta,
            acfg.n_episodes,
            &mut ChaCha8Rng::seed_from_u64(acfg.seed),
        )?)
    };
    Ok(ModelEvaluation {
        metrics: ModelMetrics {
            success: emp.success,
            collision: emp.collision,
            timeout: emp.timeout,
            adversarial_rate: analysis.rate.rate_upper,
            adversarial_rate_lower: analysis.rate.rate_lower,
            verification_complete: analysis.rate.complete,
            adv_collision,
            n_episodes: acfg.n_episodes,
        },
        family: analysis,
        counterexamples,
    })
}
