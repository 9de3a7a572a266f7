//! Sound decision and violation-volume computation by iterative input
//! splitting.
//!
//! Every box is classified from interval bounds as SAFE (the unsafe event is
//! impossible everywhere in it), VIOLATING (it happens everywhere) or UNKNOWN.
//! Unknown boxes are bisected along their widest normalized dimension until
//! they fall below the configured resolution.

mod property;
mod search;

use serde::{Deserialize, Serialize};

pub use property::{Dnf, OutputAtom, Property};
pub use search::{
    adversarial_rate, adversarial_rate_partitioned, classify_box, decide, extract_counterexamples,
    Decision, RegionReport, Verdict,
};

pub(crate) use property::CompiledPost;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoxClass {
    Safe,
    Violating,
    Unknown,
}

pub const DEFAULT_EPSILON: f64 = 1.0 / 256.0;
pub const DEFAULT_MAX_BOXES: usize = 1 << 22;
pub const DEFAULT_MAX_STORED: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    /// Boxes whose largest width, relative to the precondition, is at most
    /// this value are no longer split.
    pub epsilon: f64,
    /// Total number of box classifications allowed.
    pub max_boxes: usize,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Cap on boxes and witnesses kept in a report.
    pub max_stored: usize,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            epsilon: DEFAULT_EPSILON,
            max_boxes: DEFAULT_MAX_BOXES,
            workers: 0,
            max_stored: DEFAULT_MAX_STORED,
        }
    }
}

impl VerifierConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        VerifierConfig {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(crate::Error::Config(format!(
                "epsilon {} outside (0, 1]",
                self.epsilon
            )));
        }
        if self.max_boxes == 0 {
            return Err(crate::Error::Config("max_boxes must be positive".into()));
        }
        Ok(())
    }
}
