//! The two-domain adversarial training loop.
//!
//! Generator 1 maps domain A to domain B and generator 2 maps back; discriminator 1
//! judges domain A and discriminator 2 judges domain B. Each step records one tape
//! holding both objectives: the discriminator loss sees detached generator outputs,
//! the generator loss sees frozen discriminator copies, so one forward pass yields
//! both sets of gradients and the updates alternate without interfering.
//!
//! Networks see images shifted to `v - 0.5` and train in `f32`; evaluation maps the
//! outputs back and scores them in `[0, 1]` units against the exact targets.
use std::time::{Duration, Instant};

use fddt_core::diffnet::{
    build_discriminator, build_generator, build_nonlinear_block, AdamConfig, GeneratorShape, ImageMap, Network, Tape,
    Tensor, Var,
};
use fddt_core::metrics::{evaluate, MetricConfig, MetricReport, ProjectionExtractor};
use fddt_core::objectives::{
    disc_loss_from_scores, fddt_terms, fdit_highfreq_from, gen_adv_loss_from_scores, total_generator_loss,
    GeneratorBundle, LossWeights,
};
use fddt_core::spectral::BandFilters;
use fddt_core::{Image, Image32};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, PairingMode, Variant};
use crate::error::Result;
use crate::report::csv_row;
use crate::synth::generate_synthetic_pairs;

/// Offset between image values and network inputs.
pub const INPUT_OFFSET: f64 = 0.5;
/// Seed of the projection extractor shared by every run, so Fréchet scores of
/// different runs live in one feature space.
pub const EXTRACTOR_SEED: u64 = 0x00f3_ec4e_7000;

/// Held-out metrics after a given number of completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub report: MetricReport,
}

/// Loss values of the last completed step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub generator: f64,
    pub discriminator: f64,
    /// Unweighted frequency term, when the variant has one.
    pub frequency: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub evaluations: Vec<EvalPoint>,
    pub final_losses: Option<StepLosses>,
    pub wall_clock: Duration,
    /// Why the run stopped early; `None` for a completed run.
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn final_report(&self) -> Option<&MetricReport> {
        self.evaluations.last().map(|e| &e.report)
    }

    /// Everything except the wall clock, for reproducibility comparisons.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.config == other.config
            && self.evaluations == other.evaluations
            && self.final_losses == other.final_losses
            && self.failure == other.failure
    }

    /// Config echo followed by the outcome as `#` comment lines; the text parses
    /// back to the same config.
    pub fn to_text(&self) -> String {
        let mut out = self.config.to_text();
        out.push_str(&format!("# wall_clock_secs = {:.3}\n", self.wall_clock.as_secs_f64()));
        match &self.failure {
            Some(msg) => out.push_str(&format!("# status = failed: {}\n", msg.replace('\n', " "))),
            None => out.push_str("# status = completed\n"),
        }
        if let Some(l) = self.final_losses {
            out.push_str(&format!("# final_generator_loss = {}\n", l.generator));
            out.push_str(&format!("# final_discriminator_loss = {}\n", l.discriminator));
            if let Some(f) = l.frequency {
                out.push_str(&format!("# final_frequency_loss = {f}\n"));
            }
        }
        for e in &self.evaluations {
            let row = csv_row(self.config.variant.name(), &self.seed().to_string(), e.step, &e.report);
            out.push_str(&format!("# eval {row}\n"));
        }
        out
    }
}

/// Network weights of one run.
pub struct Models {
    /// `[A -> B, B -> A]`.
    pub generators: [Network<f32>; 2],
    /// Nonlinear pre-maps used by the decomposition term, one per direction.
    pub premaps: [Network<f32>; 2],
    /// `[judges A, judges B]`.
    pub discriminators: [Network<f32>; 2],
}

fn sub_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Models {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let shape = GeneratorShape {
            channels: 1,
            base_filters: cfg.base_filters,
            downsamples: cfg.downsamples,
            residual_blocks: cfg.residual_blocks,
        };
        let s = |salt| sub_seed(cfg.seed, salt);
        Ok(Self {
            generators: [build_generator(shape, s(1))?, build_generator(shape, s(2))?],
            premaps: [
                build_nonlinear_block(cfg.nonlinear_depth, 1, s(3))?,
                build_nonlinear_block(cfg.nonlinear_depth, 1, s(4))?,
            ],
            discriminators: [
                build_discriminator(1, &cfg.disc_filters, s(5))?,
                build_discriminator(1, &cfg.disc_filters, s(6))?,
            ],
        })
    }

    /// Domain A images translated to domain B, in image units.
    pub fn translate(&self, images: &[Image]) -> Result<Vec<Image>> {
        let out = self.generators[0].infer(&to_network(images)?)?;
        from_network(&out)
    }
}

fn to_network(images: &[Image]) -> Result<Tensor<f32>> {
    let shifted: Vec<Image32> = images
        .iter()
        .map(|i| i.map(|v| v - INPUT_OFFSET).cast::<f32>())
        .collect();
    Ok(Tensor::from_images(&shifted)?)
}

fn from_network(t: &Tensor<f32>) -> Result<Vec<Image>> {
    Ok(t.to_images()?
        .iter()
        .map(|i| i.cast::<f64>().map(|v| v + INPUT_OFFSET))
        .collect())
}

fn gather(images: &[Image], idx: &[usize]) -> Result<Tensor<f32>> {
    let picked: Vec<Image> = idx.iter().map(|&i| images[i].clone()).collect();
    to_network(&picked)
}

/// Learning rate of step `step` (0-based): constant, or decaying linearly to zero
/// over the final third when `lr_decay` is set.
pub fn learning_rate_at(cfg: &ExperimentConfig, step: usize) -> f64 {
    let start = cfg.steps - cfg.steps / 3;
    if !cfg.lr_decay || step < start {
        return cfg.learning_rate;
    }
    cfg.learning_rate * (cfg.steps - step) as f64 / (cfg.steps - start) as f64
}

struct StepOutput {
    losses: StepLosses,
    generator_grads: [Vec<Vec<f32>>; 2],
    premap_grads: [Vec<Vec<f32>>; 2],
    disc_grads: [Vec<Vec<f32>>; 2],
}

fn sum_terms(tape: &mut Tape<f32>, terms: &[Var]) -> Result<Option<Var>> {
    let Some((&first, rest)) = terms.split_first() else {
        return Ok(None);
    };
    let mut acc = first;
    for &t in rest {
        acc = tape.add(acc, t)?;
    }
    Ok(Some(acc))
}

fn l1(tape: &mut Tape<f32>, a: Var, b: Var) -> Result<Var> {
    Ok(tape.l1_distance(a, b)?)
}

/// Records one step and returns every gradient.
fn training_step(
    cfg: &ExperimentConfig,
    models: &Models,
    filters: &BandFilters<f32>,
    x1: Tensor<f32>,
    x2: Tensor<f32>,
) -> Result<StepOutput> {
    let mut tape: Tape<f32> = Tape::new();
    let g = [
        models.generators[0].bind(&mut tape, true),
        models.generators[1].bind(&mut tape, true),
    ];
    let n = [
        models.premaps[0].bind(&mut tape, true),
        models.premaps[1].bind(&mut tape, true),
    ];
    let x = [tape.constant(x1), tape.constant(x2)];
    let freq_active = cfg.variant != Variant::Baseline && cfg.lambda_freq != 0.0;

    let mut fakes = [x[0], x[1]];
    let mut freq_terms = Vec::new();
    for dir in 0..2 {
        let constrained = freq_active && (dir == 0 || cfg.fddt_both_directions);
        if constrained && cfg.variant.uses_fddt() {
            let bundle = GeneratorBundle {
                generator: &g[dir],
                nonlinear: &n[dir],
                filters,
                take_abs: cfg.take_abs,
            };
            let (fake, terms) = fddt_terms(&mut tape, &bundle, x[dir])?;
            fakes[dir] = fake;
            match cfg.variant {
                Variant::FddtLow => freq_terms.push(terms.low),
                Variant::FddtHigh => freq_terms.push(terms.high),
                _ => {
                    freq_terms.push(terms.low);
                    freq_terms.push(terms.high);
                }
            }
        } else {
            fakes[dir] = g[dir].apply(&mut tape, x[dir])?;
            if constrained && cfg.variant == Variant::Fdit {
                let t = fdit_highfreq_from(&mut tape, filters, cfg.take_abs, x[dir], fakes[dir])?;
                freq_terms.push(t);
            }
        }
    }
    // fakes[0] lives in domain B, fakes[1] in domain A
    let recon = match cfg.mode {
        PairingMode::Paired => {
            let a = l1(&mut tape, x[1], fakes[0])?;
            let b = l1(&mut tape, x[0], fakes[1])?;
            tape.add(a, b)?
        }
        PairingMode::Cycle => {
            let back_a = g[1].apply(&mut tape, fakes[0])?;
            let back_b = g[0].apply(&mut tape, fakes[1])?;
            let a = l1(&mut tape, back_a, x[0])?;
            let b = l1(&mut tape, back_b, x[1])?;
            tape.add(a, b)?
        }
    };

    let d_train = [
        models.discriminators[0].bind(&mut tape, true),
        models.discriminators[1].bind(&mut tape, true),
    ];
    let fake_b = tape.detach(fakes[0]);
    let fake_a = tape.detach(fakes[1]);
    let real_b_score = d_train[1].apply(&mut tape, x[1])?;
    let fake_b_score = d_train[1].apply(&mut tape, fake_b)?;
    let real_a_score = d_train[0].apply(&mut tape, x[0])?;
    let fake_a_score = d_train[0].apply(&mut tape, fake_a)?;
    let disc = disc_loss_from_scores(
        &mut tape,
        &[(real_b_score, fake_b_score), (real_a_score, fake_a_score)],
    )?;
    let d_frozen = [
        models.discriminators[0].bind(&mut tape, false),
        models.discriminators[1].bind(&mut tape, false),
    ];
    let sb = d_frozen[1].apply(&mut tape, fakes[0])?;
    let sa = d_frozen[0].apply(&mut tape, fakes[1])?;
    let adv = gen_adv_loss_from_scores(&mut tape, &[sb, sa])?;

    let weighted_recon = tape.scale(recon, cfg.recon_weight as f32);
    let baseline = tape.add(adv, weighted_recon)?;
    let freq = sum_terms(&mut tape, &freq_terms)?;
    let weights = LossWeights {
        lambda_baseline: cfg.lambda_baseline,
        lambda_freq: cfg.lambda_freq,
    };
    let total = match freq {
        Some(f) => total_generator_loss(&mut tape, weights, baseline, f)?,
        None if cfg.lambda_baseline == 1.0 => baseline,
        None => tape.scale(baseline, cfg.lambda_baseline as f32),
    };

    let losses = StepLosses {
        generator: tape.scalar(total) as f64,
        discriminator: tape.scalar(disc) as f64,
        frequency: freq.map(|f| tape.scalar(f) as f64),
    };
    tape.backward(total)?;
    tape.backward(disc)?;
    Ok(StepOutput {
        losses,
        generator_grads: [g[0].grads(&tape), g[1].grads(&tape)],
        premap_grads: [n[0].grads(&tape), n[1].grads(&tape)],
        disc_grads: [d_train[0].grads(&tape), d_train[1].grads(&tape)],
    })
}

fn check_losses(l: &StepLosses) -> std::result::Result<(), String> {
    for (name, v) in [
        ("generator", Some(l.generator)),
        ("discriminator", Some(l.discriminator)),
        ("frequency", l.frequency),
    ] {
        if let Some(v) = v {
            if !v.is_finite() {
                return Err(format!("{name} loss is {v}"));
            }
        }
    }
    Ok(())
}

/// Trains a fresh model pair on the config's synthetic task.
///
/// Invalid configs are errors; a diverging run returns a record whose `failure`
/// is set and whose evaluations stop at the last completed checkpoint.
pub fn run_training(cfg: &ExperimentConfig) -> Result<RunRecord> {
    run_training_with_models(cfg).map(|(record, _)| record)
}

/// [`run_training`] that also returns the trained networks.
pub fn run_training_with_models(cfg: &ExperimentConfig) -> Result<(RunRecord, Models)> {
    cfg.validate()?;
    let started = Instant::now();
    let (domain_a, domain_b) = generate_synthetic_pairs(&cfg.task_spec(), cfg.train_count + cfg.eval_count)?;
    let (train_a, eval_a) = domain_a.split_at(cfg.train_count);
    let (train_b, eval_b) = domain_b.split_at(cfg.train_count);
    let filters = BandFilters::<f32>::gaussian(cfg.image_size, cfg.image_size, cfg.sigma as f32, cfg.normalized_filter)?;
    let extractor = ProjectionExtractor::new(cfg.image_size * cfg.image_size, cfg.feature_dim, EXTRACTOR_SEED)?;
    let metric_config = MetricConfig::default();
    let mut models = Models::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 7));

    let mut record = RunRecord {
        config: cfg.clone(),
        evaluations: Vec::new(),
        final_losses: None,
        wall_clock: Duration::ZERO,
        failure: None,
    };
    for step in 0..cfg.steps {
        let idx1: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..cfg.train_count)).collect();
        let idx2: Vec<usize> = match cfg.mode {
            PairingMode::Paired => idx1.clone(),
            PairingMode::Cycle => (0..cfg.batch_size).map(|_| rng.random_range(0..cfg.train_count)).collect(),
        };
        let out = training_step(cfg, &models, &filters, gather(train_a, &idx1)?, gather(train_b, &idx2)?)
            .map_err(|e| e.to_string())
            .and_then(|out| check_losses(&out.losses).map(|_| out));
        let out = match out {
            Ok(out) => out,
            Err(msg) => {
                record.failure = Some(format!("step {}: {msg}", step + 1));
                break;
            }
        };
        let adam = AdamConfig {
            learning_rate: learning_rate_at(cfg, step),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            ..AdamConfig::default()
        };
        for i in 0..2 {
            models.generators[i].params_mut().adam_step(&out.generator_grads[i], &adam)?;
            models.premaps[i].params_mut().adam_step(&out.premap_grads[i], &adam)?;
            models.discriminators[i].params_mut().adam_step(&out.disc_grads[i], &adam)?;
        }
        record.final_losses = Some(out.losses);

        let done = step + 1;
        if done % cfg.eval_every == 0 || done == cfg.steps {
            let fake = models.translate(eval_a)?;
            if let Some(bad) = fake.iter().find_map(|f| f.check_finite().err()) {
                record.failure = Some(format!("step {done}: generated image is not finite ({bad})"));
                break;
            }
            let report = evaluate(eval_b, &fake, &metric_config, Some(&extractor))?;
            record.evaluations.push(EvalPoint { step: done, report });
        }
    }
    record.wall_clock = started.elapsed();
    Ok((record, models))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            image_size: 16,
            batch_size: 2,
            steps: 6,
            eval_every: 3,
            train_count: 8,
            eval_count: 4,
            base_filters: 4,
            downsamples: 1,
            residual_blocks: 1,
            disc_filters: vec![4, 8],
            feature_dim: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn records_evaluations_at_cadence() {
        let r = run_training(&tiny()).unwrap();
        assert!(!r.failed());
        let steps: Vec<usize> = r.evaluations.iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![3, 6]);
        let rep = r.final_report().unwrap();
        assert!(rep.mse > 0.0 && rep.frechet.is_some());
        assert_eq!(rep.count, 4);
    }

    #[test]
    fn every_variant_and_mode_runs() {
        for variant in Variant::ALL {
            for mode in [PairingMode::Paired, PairingMode::Cycle] {
                let cfg = ExperimentConfig {
                    variant,
                    mode,
                    nonlinear_depth: 1,
                    steps: 2,
                    ..tiny()
                };
                let r = run_training(&cfg).unwrap();
                assert!(!r.failed(), "{variant} {mode:?}: {:?}", r.failure);
                assert_eq!(r.final_losses.unwrap().frequency.is_some(), variant != Variant::Baseline);
            }
        }
    }

    #[test]
    fn frequency_term_changes_trajectory() {
        let base = run_training(&tiny()).unwrap();
        let fddt = run_training(&ExperimentConfig {
            variant: Variant::FddtFull,
            ..tiny()
        })
        .unwrap();
        assert_ne!(base.evaluations, fddt.evaluations);
    }

    #[test]
    fn divergence_is_flagged_not_raised() {
        let cfg = ExperimentConfig {
            learning_rate: 1e38,
            steps: 30,
            eval_every: 1,
            ..tiny()
        };
        let r = run_training(&cfg).unwrap();
        let msg = r.failure.as_deref().expect("a huge learning rate diverges");
        assert!(msg.starts_with("step "), "{msg}");
        assert!(r.evaluations.len() < 30);
    }

    #[test]
    fn decay_schedule() {
        let cfg = ExperimentConfig {
            steps: 9,
            lr_decay: true,
            ..ExperimentConfig::default()
        };
        let lrs: Vec<f64> = (0..9).map(|s| learning_rate_at(&cfg, s) / cfg.learning_rate).collect();
        assert_eq!(&lrs[..6], &[1.0; 6]);
        assert!((lrs[6] - 1.0).abs() < 1e-12 && (lrs[8] - 1.0 / 3.0).abs() < 1e-12);
        let flat = ExperimentConfig { lr_decay: false, ..cfg };
        assert_eq!(learning_rate_at(&flat, 8), flat.learning_rate);
    }

    #[test]
    fn record_text_reparses_to_config() {
        let r = run_training(&tiny()).unwrap();
        let text = r.to_text();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), r.config);
        assert!(text.contains("# status = completed"));
    }
}
