//! Experiment configuration and its `key = value` text form.
//!
//! Every field has a default; a config file only lists what it changes. Unknown or
//! repeated keys are errors, so a typo can never silently fall back to a default.
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{HarnessError, Result};
use crate::synth::{SyntheticTaskSpec, TaskFamily, TaskParams};

/// Frequency term added to the baseline generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    Fdit,
    FddtFull,
    FddtLow,
    FddtHigh,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::Fdit,
        Variant::FddtFull,
        Variant::FddtLow,
        Variant::FddtHigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Fdit => "fdit",
            Variant::FddtFull => "fddt_full",
            Variant::FddtLow => "fddt_low",
            Variant::FddtHigh => "fddt_high",
        }
    }

    pub fn uses_fddt(self) -> bool {
        matches!(self, Variant::FddtFull | Variant::FddtLow | Variant::FddtHigh)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant '{s}' (expected one of baseline, fdit, fddt_full, fddt_low, fddt_high)"))
    }
}

/// How the two image domains are sampled and which reconstruction term is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairingMode {
    /// Independent batches from each domain with a cycle-consistency term.
    Cycle,
    /// Index-aligned batches with a direct L1 term.
    Paired,
}

impl PairingMode {
    pub fn name(self) -> &'static str {
        match self {
            PairingMode::Cycle => "cycle",
            PairingMode::Paired => "paired",
        }
    }
}

impl FromStr for PairingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cycle" => Ok(PairingMode::Cycle),
            "paired" => Ok(PairingMode::Paired),
            _ => Err(format!("unknown mode '{s}' (expected cycle or paired)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Seeds the data, the initialization and the batch order.
    pub seed: u64,
    pub family: TaskFamily,
    pub task: TaskParams,
    /// Side length of the square images.
    pub image_size: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Width of the Gaussian band filters used by the objectives.
    pub sigma: f64,
    pub normalized_filter: bool,
    pub lambda_baseline: f64,
    pub lambda_freq: f64,
    /// Weight of the reconstruction (cycle or paired L1) term inside the baseline.
    pub recon_weight: f64,
    pub variant: Variant,
    pub mode: PairingMode,
    pub nonlinear_depth: usize,
    pub take_abs: bool,
    /// Evaluate on the held-out split every this many steps (and after the last).
    pub eval_every: usize,
    pub train_count: usize,
    pub eval_count: usize,
    /// Linear learning-rate decay to zero over the final third of the run.
    pub lr_decay: bool,
    /// Constrain both generator directions, not only domain 1 to domain 2.
    pub fddt_both_directions: bool,
    pub base_filters: usize,
    pub downsamples: usize,
    pub residual_blocks: usize,
    pub disc_filters: Vec<usize>,
    /// Dimension of the projection features behind the Fréchet score.
    pub feature_dim: usize,
    /// Number of consecutive seeds used by ablations and sweeps.
    pub seeds: usize,
    pub sweep_depths: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            family: TaskFamily::LowShift,
            task: TaskParams::default(),
            image_size: 32,
            batch_size: 8,
            steps: 2000,
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            sigma: fddt_core::spectral::DEFAULT_SIGMA,
            normalized_filter: false,
            lambda_baseline: 1.0,
            lambda_freq: 1.0,
            recon_weight: 10.0,
            variant: Variant::Baseline,
            mode: PairingMode::Cycle,
            nonlinear_depth: 0,
            take_abs: true,
            eval_every: 500,
            train_count: 256,
            eval_count: 64,
            lr_decay: false,
            fddt_both_directions: true,
            base_filters: 8,
            downsamples: 2,
            residual_blocks: 2,
            disc_filters: vec![8, 16, 32],
            feature_dim: 16,
            seeds: 5,
            sweep_depths: vec![0, 1, 2],
        }
    }
}

/// Every accepted key, in the order used by [`ExperimentConfig::to_text`].
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "family",
    "shift",
    "gain",
    "gamma",
    "cutoff",
    "blend",
    "image_size",
    "batch_size",
    "steps",
    "learning_rate",
    "beta1",
    "beta2",
    "sigma",
    "normalized_filter",
    "lambda_baseline",
    "lambda_freq",
    "recon_weight",
    "variant",
    "mode",
    "nonlinear_depth",
    "take_abs",
    "eval_every",
    "train_count",
    "eval_count",
    "lr_decay",
    "fddt_both_directions",
    "base_filters",
    "downsamples",
    "residual_blocks",
    "disc_filters",
    "feature_dim",
    "seeds",
    "sweep_depths",
];

fn parse_value<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse '{value}': {e}"))
}

fn parse_list(value: &str) -> Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|s| parse_value::<usize>(s.trim()))
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses `key = value` lines on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| HarnessError::Config { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(err(format!("key '{key}' given twice")));
            }
            cfg.set(key, value).map_err(err)?;
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one field from its text form. Rejects unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "seed" => self.seed = parse_value(value)?,
            "family" => self.family = parse_value(value)?,
            "shift" => self.task.shift = parse_value(value)?,
            "gain" => self.task.gain = parse_value(value)?,
            "gamma" => self.task.gamma = parse_value(value)?,
            "cutoff" => self.task.cutoff = parse_value(value)?,
            "blend" => {
                let w = value
                    .split(',')
                    .map(|s| parse_value::<f64>(s.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                self.task.blend = w
                    .try_into()
                    .map_err(|w: Vec<f64>| format!("blend takes 3 weights, got {}", w.len()))?;
            }
            "image_size" => self.image_size = parse_value(value)?,
            "batch_size" => self.batch_size = parse_value(value)?,
            "steps" => self.steps = parse_value(value)?,
            "learning_rate" => self.learning_rate = parse_value(value)?,
            "beta1" => self.beta1 = parse_value(value)?,
            "beta2" => self.beta2 = parse_value(value)?,
            "sigma" => self.sigma = parse_value(value)?,
            "normalized_filter" => self.normalized_filter = parse_value(value)?,
            "lambda_baseline" => self.lambda_baseline = parse_value(value)?,
            "lambda_freq" => self.lambda_freq = parse_value(value)?,
            "recon_weight" => self.recon_weight = parse_value(value)?,
            "variant" => self.variant = parse_value(value)?,
            "mode" => self.mode = parse_value(value)?,
            "nonlinear_depth" => self.nonlinear_depth = parse_value(value)?,
            "take_abs" => self.take_abs = parse_value(value)?,
            "eval_every" => self.eval_every = parse_value(value)?,
            "train_count" => self.train_count = parse_value(value)?,
            "eval_count" => self.eval_count = parse_value(value)?,
            "lr_decay" => self.lr_decay = parse_value(value)?,
            "fddt_both_directions" => self.fddt_both_directions = parse_value(value)?,
            "base_filters" => self.base_filters = parse_value(value)?,
            "downsamples" => self.downsamples = parse_value(value)?,
            "residual_blocks" => self.residual_blocks = parse_value(value)?,
            "disc_filters" => self.disc_filters = parse_list(value)?,
            "feature_dim" => self.feature_dim = parse_value(value)?,
            "seeds" => self.seeds = parse_value(value)?,
            "sweep_depths" => self.sweep_depths = parse_list(value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Text form of one field; `None` for unknown keys.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "family" => self.family.to_string(),
            "shift" => self.task.shift.to_string(),
            "gain" => self.task.gain.to_string(),
            "gamma" => self.task.gamma.to_string(),
            "cutoff" => self.task.cutoff.to_string(),
            "blend" => join(&self.task.blend),
            "image_size" => self.image_size.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "steps" => self.steps.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "sigma" => self.sigma.to_string(),
            "normalized_filter" => self.normalized_filter.to_string(),
            "lambda_baseline" => self.lambda_baseline.to_string(),
            "lambda_freq" => self.lambda_freq.to_string(),
            "recon_weight" => self.recon_weight.to_string(),
            "variant" => self.variant.to_string(),
            "mode" => self.mode.name().to_string(),
            "nonlinear_depth" => self.nonlinear_depth.to_string(),
            "take_abs" => self.take_abs.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "train_count" => self.train_count.to_string(),
            "eval_count" => self.eval_count.to_string(),
            "lr_decay" => self.lr_decay.to_string(),
            "fddt_both_directions" => self.fddt_both_directions.to_string(),
            "base_filters" => self.base_filters.to_string(),
            "downsamples" => self.downsamples.to_string(),
            "residual_blocks" => self.residual_blocks.to_string(),
            "disc_filters" => join(&self.disc_filters),
            "feature_dim" => self.feature_dim.to_string(),
            "seeds" => self.seeds.to_string(),
            "sweep_depths" => join(&self.sweep_depths),
            _ => return None,
        })
    }

    /// All keys with their values; [`ExperimentConfig::parse`] inverts this exactly.
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed keys are known")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Err(HarnessError::Config { line: 0, message });
        let positive = [
            ("image_size", self.image_size),
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("eval_every", self.eval_every),
            ("train_count", self.train_count),
            ("base_filters", self.base_filters),
            ("feature_dim", self.feature_dim),
            ("seeds", self.seeds),
        ];
        for (name, v) in positive {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.eval_count < 2 {
            return fail(format!("eval_count must be at least 2, got {}", self.eval_count));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        for (name, l) in [
            ("lambda_baseline", self.lambda_baseline),
            ("lambda_freq", self.lambda_freq),
            ("recon_weight", self.recon_weight),
        ] {
            if !(l >= 0.0 && l.is_finite()) {
                return fail(format!("{name} must be non-negative, got {l}"));
            }
        }
        let scale = 1usize << self.downsamples.min(16);
        if self.downsamples > 16 || self.image_size % scale != 0 {
            return fail(format!(
                "image_size {} is not divisible by 2^{} (downsamples)",
                self.image_size, self.downsamples
            ));
        }
        if self.disc_filters.is_empty() || self.disc_filters.contains(&0) {
            return fail("disc_filters must be a non-empty list of positive counts".into());
        }
        if self.disc_filters.len() > 16 || self.image_size >> self.disc_filters.len() < 2 {
            return fail(format!(
                "image_size {} is too small for {} discriminator stages",
                self.image_size,
                self.disc_filters.len()
            ));
        }
        if self.sweep_depths.is_empty() {
            return fail("sweep_depths must not be empty".into());
        }
        self.task.validate().or_else(|e| fail(e.to_string()))
    }

    /// Task description for this config's data.
    pub fn task_spec(&self) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            family: self.family,
            params: self.task,
            size: self.image_size,
            seed: self.seed,
        }
    }

    /// The `seeds` consecutive seeds starting at `seed`.
    pub fn seed_range(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = ExperimentConfig::default();
        assert_eq!((c.image_size, c.batch_size, c.steps), (32, 8, 2000));
        assert_eq!((c.learning_rate, c.beta1, c.beta2), (1e-4, 0.5, 0.999));
        assert_eq!((c.sigma, c.lambda_baseline, c.lambda_freq), (20.0, 1.0, 1.0));
        assert!(c.take_abs);
        assert_eq!(c.mode, PairingMode::Cycle);
        c.validate().unwrap();
    }

    #[test]
    fn parse_overrides_and_comments() {
        let c = ExperimentConfig::parse("# run\nsteps = 10\n\nvariant=fddt_low\n  mode = paired \nblend = 1, 0, 2\n").unwrap();
        assert_eq!(c.steps, 10);
        assert_eq!(c.variant, Variant::FddtLow);
        assert_eq!(c.mode, PairingMode::Paired);
        assert_eq!(c.task.blend, [1.0, 0.0, 2.0]);
    }

    #[test]
    fn unknown_and_repeated_keys_fail_with_line() {
        match ExperimentConfig::parse("steps = 3\nlearning_rat = 0.1\n") {
            Err(HarnessError::Config { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("learning_rat"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ExperimentConfig::parse("steps = 3\nsteps = 4\n"),
            Err(HarnessError::Config { line: 2, .. })
        ));
        assert!(ExperimentConfig::parse("steps 3\n").is_err());
        assert!(ExperimentConfig::parse("variant = unit\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "steps = 0",
            "eval_count = 1",
            "beta1 = 1.0",
            "learning_rate = -1",
            "image_size = 30",
            "sigma = 0",
            "lambda_freq = -0.5",
            "disc_filters = 8,0",
            "image_size = 8\ndisc_filters = 4,4,4",
            "gain = 0",
            "blend = 0,0,0",
            "blend = 1,2",
            "seeds = 0",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut c = ExperimentConfig::default();
        c.learning_rate = 0.1 + 0.2;
        c.seed = u64::MAX;
        c.variant = Variant::Fdit;
        c.task.blend = [0.1, 1.0 / 3.0, 7.0];
        c.sweep_depths = vec![3];
        let text = c.to_text();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        assert_eq!(text.lines().count(), CONFIG_KEYS.len());
        for key in CONFIG_KEYS {
            let mut probe = ExperimentConfig::default();
            probe.set(key, &c.get(key).unwrap()).unwrap();
        }
    }
}
