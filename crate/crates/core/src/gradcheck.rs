//! Central finite-difference checks of every node type and every loss.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::diffnet::{
    build_discriminator, build_generator, build_nonlinear_block, Activation, GeneratorShape, ImageMap, Layer, Network,
    NetworkSpec, Padding, Tape, Tensor, Var,
};
use crate::error::{invalid, Result};
use crate::objectives::{
    band_component, cycle_loss, disc_loss_from_scores, fddt_loss, fddt_partial_loss, fdit_highfreq_loss,
    gen_adv_loss_from_scores, paired_l1_loss, total_generator_loss, Band, GeneratorBundle, LossWeights,
};
use crate::spectral::BandFilters;

/// Tolerances of a finite-difference comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    /// Entries probed per input tensor; larger tensors are subsampled.
    pub probes_per_input: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            rel_tol: 1e-4,
            abs_floor: 1e-7,
            probes_per_input: 24,
            seed: 0x5eed,
        }
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    /// Entries compared.
    pub probes: usize,
    /// Entries skipped because a perturbation crossed a kink.
    pub skipped: usize,
    /// Largest relative error among entries whose absolute error exceeds the floor.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

/// Compares the backward gradient of `build(inputs)` with central differences.
///
/// `build` must record a scalar loss from leaf variables holding `inputs`. Probes
/// whose `+h` or `-h` evaluation takes a different branch at any relu, leaky relu,
/// abs or log clamp than the unperturbed evaluation are skipped.
pub fn check_gradients<F>(name: &str, inputs: &[Tensor<f64>], build: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>], grads: bool| -> Result<(f64, u64, Vec<Option<Vec<f64>>>)> {
        let mut tape = Tape::new();
        tape.track_kinks();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        let value = tape.scalar(loss);
        let sig = tape.kink_signature().unwrap_or(0);
        let mut g = Vec::new();
        if grads {
            tape.backward(loss)?;
            g = vars.iter().map(|&v| tape.grad(v).map(<[f64]>::to_vec)).collect();
        }
        Ok((value, sig, g))
    };

    let (base, base_sig, grads) = eval(inputs, true)?;
    if !base.is_finite() {
        return Err(invalid(format!("{name}: loss is not finite")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = inputs.to_vec();
    let mut report = GradCheckReport {
        name: name.to_string(),
        probes: 0,
        skipped: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        passed: true,
    };
    for (k, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let picks: Vec<usize> = if n <= cfg.probes_per_input {
            (0..n).collect()
        } else {
            let u = Uniform::new(0, n).map_err(|e| invalid(e.to_string()))?;
            (0..cfg.probes_per_input).map(|_| u.sample(&mut rng)).collect()
        };
        for i in picks {
            let orig = input.data()[i];
            work[k].data_mut()[i] = orig + cfg.step;
            let (plus, sig_p, _) = eval(&work, false)?;
            work[k].data_mut()[i] = orig - cfg.step;
            let (minus, sig_m, _) = eval(&work, false)?;
            work[k].data_mut()[i] = orig;
            if sig_p != base_sig || sig_m != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let analytic = grads[k].as_ref().map_or(0.0, |g| g[i]);
            let abs_err = (numeric - analytic).abs();
            report.probes += 1;
            report.max_abs_error = report.max_abs_error.max(abs_err);
            if abs_err > cfg.abs_floor {
                let rel = abs_err / numeric.abs().max(analytic.abs());
                report.max_rel_error = report.max_rel_error.max(rel);
                if !(rel <= cfg.rel_tol) {
                    report.passed = false;
                }
            }
        }
    }
    if report.probes == 0 {
        report.passed = false;
    }
    Ok(report)
}

struct Inputs {
    rng: ChaCha8Rng,
}

impl Inputs {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn normal(&mut self, shape: &[usize], std: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let d = Normal::new(0.0, std).expect("positive std");
        Tensor::new(shape.to_vec(), (0..n).map(|_| d.sample(&mut self.rng)).collect()).expect("valid shape")
    }

    /// Normal samples nudged at least `gap` away from zero.
    fn away_from_zero(&mut self, shape: &[usize], gap: f64) -> Tensor<f64> {
        let mut t = self.normal(shape, 1.0);
        for v in t.data_mut() {
            if v.abs() < gap {
                *v = if *v < 0.0 { -gap } else { gap } * 10.0;
            }
        }
        t
    }

    fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let d = Uniform::new(lo, hi).expect("valid range");
        Tensor::new(shape.to_vec(), (0..n).map(|_| d.sample(&mut self.rng)).collect()).expect("valid shape")
    }
}

/// `sum(v * weights)` with fixed random weights, so every output entry matters.
fn weighted_sum(tape: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    let w = Inputs::new(seed).normal(&shape, 1.0);
    let wv = tape.constant(w);
    let p = tape.mul(v, wv)?;
    Ok(tape.sum(p))
}

/// Parameters re-drawn at a larger scale so that small test networks are far from
/// the near-linear regime of the default initialization.
fn scaled_params(net: &Network<f64>, seed: u64) -> Vec<Tensor<f64>> {
    let mut src = Inputs::new(seed);
    net.params()
        .iter()
        .map(|(name, t)| {
            if name.ends_with(".gain") {
                let mut g = src.normal(t.shape(), 0.2);
                g.data_mut().iter_mut().for_each(|v| *v += 1.0);
                g
            } else {
                src.normal(t.shape(), 0.4)
            }
        })
        .collect()
}

fn toy_generator(seed: u64) -> Result<Network<f64>> {
    let layers = vec![
        Layer::Conv {
            in_channels: 1,
            out_channels: 3,
            kernel: 3,
            stride: 1,
            padding: Padding::Reflection(1),
        },
        Layer::InstanceNorm { channels: 3 },
        Layer::Act(Activation::Relu),
        Layer::Conv {
            in_channels: 3,
            out_channels: 3,
            kernel: 3,
            stride: 2,
            padding: Padding::Zero(1),
        },
        Layer::Act(Activation::LeakyRelu(0.2)),
        Layer::ConvTranspose {
            in_channels: 3,
            out_channels: 1,
            kernel: 3,
            stride: 2,
            padding: 1,
            output_padding: 1,
        },
        Layer::Act(Activation::Tanh),
    ];
    Network::new(NetworkSpec::new(1, layers, seed))
}

fn small_generator(seed: u64) -> Result<Network<f64>> {
    build_generator(
        GeneratorShape {
            channels: 1,
            base_filters: 2,
            downsamples: 1,
            residual_blocks: 1,
        },
        seed,
    )
}

/// Every check run by the `gradcheck` command.
pub fn gradient_suite(cfg: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    let mut out = Vec::new();
    let mut src = Inputs::new(cfg.seed);

    // --- node types ---
    // Thin layers take the direct path, wide ones the im2col + GEMM path.
    for (name, stride, padding, c, o) in [
        ("conv2d zero padding stride 2", 2, Padding::Zero(1), 2, 3),
        ("conv2d reflection padding", 1, Padding::Reflection(1), 2, 3),
        ("conv2d no padding", 1, Padding::None, 2, 3),
        ("conv2d wide zero padding stride 2", 2, Padding::Zero(1), 3, 6),
        ("conv2d wide reflection padding", 1, Padding::Reflection(1), 3, 6),
    ] {
        let inputs = vec![
            src.normal(&[2, c, 5, 5], 1.0),
            src.normal(&[o, c, 3, 3], 0.5),
            src.normal(&[o], 0.5),
        ];
        out.push(check_gradients(
            name,
            &inputs,
            |t, v| {
                let y = t.conv2d(v[0], v[1], v[2], stride, padding)?;
                weighted_sum(t, y, 1)
            },
            cfg,
        )?);
    }
    let inputs = vec![
        src.normal(&[2, 3, 3, 3], 1.0),
        src.normal(&[3, 2, 3, 3], 0.5),
        src.normal(&[2], 0.5),
    ];
    out.push(check_gradients(
        "conv_transpose2d",
        &inputs,
        |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], v[2], 2, 1, 1)?;
            weighted_sum(t, y, 2)
        },
        cfg,
    )?);
    let inputs = vec![
        src.normal(&[2, 3, 4, 4], 1.0),
        src.uniform(&[3], 0.5, 1.5),
        src.normal(&[3], 0.5),
    ];
    out.push(check_gradients(
        "instance_norm",
        &inputs,
        |t, v| {
            let y = t.instance_norm(v[0], v[1], v[2], 1e-5)?;
            weighted_sum(t, y, 3)
        },
        cfg,
    )?);
    for (name, kind) in [
        ("relu", Activation::Relu),
        ("leaky_relu", Activation::LeakyRelu(0.2)),
        ("tanh", Activation::Tanh),
        ("sigmoid", Activation::Sigmoid),
        ("abs", Activation::Abs),
    ] {
        let inputs = vec![src.away_from_zero(&[2, 1, 4, 4], 1e-3)];
        out.push(check_gradients(
            name,
            &inputs,
            |t, v| {
                let y = t.activation(v[0], kind);
                weighted_sum(t, y, 4)
            },
            cfg,
        )?);
    }
    // leaky relu on a [-5, 5] grid, kinks excluded
    let grid: Vec<f64> = (0..21).map(|i| -5.0 + 0.5 * i as f64).filter(|v| v.abs() > 1e-3).collect();
    let grid = Tensor::new(vec![grid.len()], grid)?;
    out.push(check_gradients(
        "leaky_relu grid",
        &[grid],
        |t, v| {
            let y = t.activation(v[0], Activation::LeakyRelu(0.2));
            weighted_sum(t, y, 5)
        },
        cfg,
    )?);
    let filters = BandFilters::gaussian(8, 8, 2.0, false)?;
    for (name, band) in [("spectral filter low", Band::Low), ("spectral filter high", Band::High)] {
        let inputs = vec![src.normal(&[2, 1, 8, 8], 1.0)];
        let f = match band {
            Band::Low => Arc::clone(&filters.low),
            Band::High => Arc::clone(&filters.high),
        };
        out.push(check_gradients(
            name,
            &inputs,
            |t, v| {
                let y = t.spectral_filter(v[0], &f)?;
                weighted_sum(t, y, 6)
            },
            cfg,
        )?);
    }
    let inputs = vec![src.normal(&[1, 1, 8, 8], 1.0)];
    out.push(check_gradients(
        "spectral filter sum",
        &inputs,
        |t, v| {
            let y = t.spectral_filter(v[0], &filters.low)?;
            Ok(t.sum(y))
        },
        cfg,
    )?);
    let ab = vec![src.normal(&[2, 1, 3, 3], 1.0), src.normal(&[2, 1, 3, 3], 1.0)];
    out.push(check_gradients(
        "add/sub/mul/affine",
        &ab,
        |t, v| {
            let s = t.add(v[0], v[1])?;
            let d = t.sub(v[0], v[1])?;
            let p = t.mul(s, d)?;
            let q = t.mul(p, v[0])?;
            let a = t.affine(q, -0.7, 0.3);
            weighted_sum(t, a, 7)
        },
        cfg,
    )?);
    out.push(check_gradients(
        "concat/slice/spatial_mean",
        &ab,
        |t, v| {
            let c = t.concat_batch(&[v[0], v[1], v[0]])?;
            let s = t.slice_batch(c, 1, 3)?;
            let m = t.spatial_mean(s)?;
            let m2 = t.mul(m, m)?;
            weighted_sum(t, m2, 8)
        },
        cfg,
    )?);
    for (name, which) in [("sum", 0), ("mean", 1), ("mean_abs", 2), ("mean_square", 3)] {
        let inputs = vec![src.away_from_zero(&[3, 4], 1e-3)];
        out.push(check_gradients(
            name,
            &inputs,
            |t, v| {
                let w = weighted_sum(t, v[0], 9)?;
                let sq = t.mul(v[0], v[0])?;
                let mixed = t.affine(sq, 0.5, 0.0);
                let m = t.add(mixed, v[0])?;
                let r = match which {
                    0 => t.sum(m),
                    1 => t.mean(m),
                    2 => t.mean_abs(m),
                    _ => t.mean_square(m),
                };
                t.add(r, w)
            },
            cfg,
        )?);
    }
    let inputs = vec![src.normal(&[2, 1, 2, 3], 2.0)];
    out.push(check_gradients(
        "log_clamped of sigmoid",
        &inputs,
        |t, v| {
            let s = t.activation(v[0], Activation::Sigmoid);
            Ok(t.log_clamped(s, 1e-7))
        },
        cfg,
    )?);

    // --- whole networks ---
    let toy = toy_generator(11)?;
    let mut inputs = scaled_params(&toy, 12);
    let x = src.uniform(&[2, 1, 6, 6], 0.0, 1.0);
    let target = src.uniform(&[2, 1, 6, 6], -0.5, 0.5);
    inputs.push(x);
    out.push(check_gradients(
        "three-layer toy generator",
        &inputs,
        |t, v| {
            let (params, x) = v.split_at(v.len() - 1);
            let g = toy.bind_vars(t, params.to_vec())?;
            let y = g.apply(t, x[0])?;
            let tv = t.constant(target.clone());
            let d = t.sub(y, tv)?;
            Ok(t.mean_square(d))
        },
        cfg,
    )?);
    let gen = small_generator(13)?;
    let x = src.uniform(&[2, 1, 8, 8], 0.0, 1.0);
    out.push(check_gradients(
        "generator with residual block",
        &scaled_params(&gen, 14),
        |t, v| {
            let g = gen.bind_vars(t, v.to_vec())?;
            let xv = t.constant(x.clone());
            let y = g.apply(t, xv)?;
            weighted_sum(t, y, 10)
        },
        cfg,
    )?);
    let disc = build_discriminator::<f64>(1, &[3, 4], 15)?;
    let x16 = src.uniform(&[2, 1, 16, 16], 0.0, 1.0);
    out.push(check_gradients(
        "patch discriminator",
        &scaled_params(&disc, 16),
        |t, v| {
            let d = disc.bind_vars(t, v.to_vec())?;
            let xv = t.constant(x16.clone());
            let s = d.apply(t, xv)?;
            Ok(t.log_clamped(s, 1e-7))
        },
        cfg,
    )?);
    let block = build_nonlinear_block::<f64>(2, 1, 17)?;
    out.push(check_gradients(
        "nonlinear block depth 2",
        &scaled_params(&block, 18),
        |t, v| {
            let b = block.bind_vars(t, v.to_vec())?;
            let xv = t.constant(x.clone());
            let y = b.apply(t, xv)?;
            weighted_sum(t, y, 11)
        },
        cfg,
    )?);

    // --- losses (parameters of every trainable network involved) ---
    let gen_params = scaled_params(&gen, 19);
    let ng = gen_params.len();
    let nl = build_nonlinear_block::<f64>(1, 1, 20)?;
    let nl_params = scaled_params(&nl, 21);
    let mut fddt_inputs = gen_params.clone();
    fddt_inputs.extend(nl_params.iter().cloned());
    for take_abs in [false, true] {
        for (label, band) in [("fddt_loss", None), ("fddt low band", Some(Band::Low)), ("fddt high band", Some(Band::High))] {
            let name = format!("{label} (take_abs={take_abs})");
            out.push(check_gradients(
                &name,
                &fddt_inputs,
                |t, v| {
                    let g = gen.bind_vars(t, v[..ng].to_vec())?;
                    let n = nl.bind_vars(t, v[ng..].to_vec())?;
                    let bundle = GeneratorBundle {
                        generator: &g,
                        nonlinear: &n,
                        filters: &filters,
                        take_abs,
                    };
                    let xv = t.constant(x.clone());
                    match band {
                        None => fddt_loss(t, &bundle, xv),
                        Some(b) => fddt_partial_loss(t, &bundle, xv, b),
                    }
                },
                cfg,
            )?);
        }
    }
    out.push(check_gradients(
        "fdit_highfreq_loss",
        &gen_params,
        |t, v| {
            let g = gen.bind_vars(t, v.to_vec())?;
            let bundle = GeneratorBundle {
                generator: &g,
                nonlinear: &crate::diffnet::Identity,
                filters: &filters,
                take_abs: true,
            };
            let xv = t.constant(x.clone());
            fdit_highfreq_loss(t, &bundle, xv)
        },
        cfg,
    )?);
    let gen2 = small_generator(22)?;
    let mut pair_inputs = gen_params.clone();
    pair_inputs.extend(scaled_params(&gen2, 23));
    let y = src.uniform(&[2, 1, 8, 8], 0.0, 1.0);
    for (name, paired) in [("cycle_loss", false), ("paired_l1_loss", true)] {
        out.push(check_gradients(
            name,
            &pair_inputs,
            |t, v| {
                let g1 = gen.bind_vars(t, v[..ng].to_vec())?;
                let g2 = gen2.bind_vars(t, v[ng..].to_vec())?;
                let x1 = t.constant(x.clone());
                let x2 = t.constant(y.clone());
                if paired {
                    paired_l1_loss(t, &g1, &g2, x1, x2)
                } else {
                    cycle_loss(t, &g1, &g2, x1, x2)
                }
            },
            cfg,
        )?);
    }
    let d8 = build_discriminator::<f64>(1, &[3], 24)?;
    let d8_params = scaled_params(&d8, 25);
    out.push(check_gradients(
        "adversarial generator loss",
        &gen_params,
        |t, v| {
            let g = gen.bind_vars(t, v.to_vec())?;
            let d = d8.bind(t, false);
            let xv = t.constant(x.clone());
            let fake = g.apply(t, xv)?;
            let s = d.apply(t, fake)?;
            gen_adv_loss_from_scores(t, &[s])
        },
        cfg,
    )?);
    let fake_batch = src.uniform(&[2, 1, 8, 8], -1.0, 1.0);
    out.push(check_gradients(
        "adversarial discriminator loss",
        &d8_params,
        |t, v| {
            let d = d8.bind_vars(t, v.to_vec())?;
            let real = t.constant(y.clone());
            let fake = t.constant(fake_batch.clone());
            let sr = d.apply(t, real)?;
            let sf = d.apply(t, fake)?;
            disc_loss_from_scores(t, &[(sr, sf)])
        },
        cfg,
    )?);
    out.push(check_gradients(
        "total generator loss",
        &gen_params,
        |t, v| {
            let g = gen.bind_vars(t, v.to_vec())?;
            let xv = t.constant(x.clone());
            let yv = t.constant(y.clone());
            let gx = g.apply(t, xv)?;
            let base = t.l1_distance(gx, yv)?;
            let hf = band_component(t, &filters, false, gx, Band::High)?;
            let freq = t.mean_square(hf);
            let w = LossWeights {
                lambda_baseline: 0.7,
                lambda_freq: 1.3,
            };
            total_generator_loss(t, w, base, freq)
        },
        cfg,
    )?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_gradient_is_caught() {
        // a deliberately inconsistent loss: detach hides the quadratic term from backward
        let cfg = GradCheckConfig::default();
        let x = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let r = check_gradients(
            "broken",
            &[x],
            |t, v| {
                let d = t.detach(v[0]);
                let p = t.mul(v[0], d)?;
                Ok(t.sum(p))
            },
            &cfg,
        )
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn kink_crossings_are_skipped() {
        let cfg = GradCheckConfig::default();
        let x = Tensor::new(vec![2], vec![1e-5, 1.0]).unwrap();
        let r = check_gradients(
            "abs near zero",
            &[x],
            |t, v| {
                let a = t.activation(v[0], Activation::Abs);
                Ok(t.sum(a))
            },
            &cfg,
        )
        .unwrap();
        assert_eq!((r.probes, r.skipped), (1, 1));
        assert!(r.passed);
    }

    #[test]
    fn full_suite_passes() {
        let reports = gradient_suite(&GradCheckConfig::default()).unwrap();
        let failed: Vec<_> = reports.iter().filter(|r| !r.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
        assert!(reports.len() > 30);
        assert!(reports.iter().all(|r| r.probes > 0));
    }
}
