//! Adversarial-rate verification for feed-forward policies.

pub mod analysis;
pub mod counting;
pub mod error;
pub mod gridworld;
pub mod interval;
pub mod io;
pub mod network;
pub mod properties;
pub mod trainer;
pub mod verifier;

pub use error::{Error, Result};
pub use interval::{propagate, propagate_functional, InputBox, Interval};
pub use network::{argmax_action, Activation, Layer, Network};
pub use verifier::{
    adversarial_rate, classify_box, decide, BoxClass, Dnf, OutputAtom, Property, RegionReport,
    Verdict, VerifierConfig,
};
