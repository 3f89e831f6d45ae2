//! Experiment harness for frequency-decomposition image translation.
//!
//! - [`config`]: `key = value` experiment configuration;
//! - [`synth`]: seeded synthetic translation tasks with exact targets;
//! - [`io`]: PGM and `FDTT` tensor files;
//! - [`train`]: the adversarial two-domain training loop;
//! - [`experiments`]: the band ablation and the pre-map depth sweep;
//! - [`report`]: fixed-schema CSV output;
//! - [`cli`]: the `fddt` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod report;
pub mod synth;
pub mod train;

pub use config::{ExperimentConfig, PairingMode, Variant};
pub use error::{HarnessError, Result};
pub use synth::{generate_synthetic_pairs, SyntheticTaskSpec, TaskFamily, TaskParams};
pub use train::{run_training, RunRecord};
