//! Training objectives as scalar nodes on a [`Tape`].
//!
//! Every image batch is an `N x C x H x W` node. Band components are produced by the
//! spectral filter node (optionally followed by `abs`), after the nonlinear pre-map.

use crate::diffnet::{Activation, ImageMap, Network, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::spectral::BandFilters;

/// Clamp applied to discriminator scores before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

/// Weights of the baseline and frequency terms in the generator objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_baseline: f64,
    pub lambda_freq: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_baseline: 1.0,
            lambda_freq: 1.0,
        }
    }
}

/// One frequency band.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    Low,
    High,
}

/// A generator together with the decomposition used to constrain it.
pub struct GeneratorBundle<'a, T: Scalar> {
    pub generator: &'a dyn ImageMap<T>,
    pub nonlinear: &'a dyn ImageMap<T>,
    pub filters: &'a BandFilters<T>,
    pub take_abs: bool,
}

impl<T: Scalar> GeneratorBundle<'_, T> {
    fn check_size(&self, tape: &Tape<T>, x: Var) -> Result<()> {
        let s = tape.shape(x);
        if s.len() != 4 || s[2] != self.filters.height() || s[3] != self.filters.width() {
            return Err(Error::ShapeMismatch {
                op: "band filters",
                left: s.to_vec(),
                right: vec![self.filters.height(), self.filters.width()],
            });
        }
        Ok(())
    }

    /// Band component of `x` after the nonlinear pre-map; fully differentiable.
    pub fn component(&self, tape: &mut Tape<T>, x: Var, band: Band) -> Result<Var> {
        let n = self.nonlinear.apply(tape, x)?;
        band_component(tape, self.filters, self.take_abs, n, band)
    }

    /// `(X_L, X_H)` of an input batch. The input is detached first, so no gradient
    /// reaches `x` through these components.
    pub fn input_bands(&self, tape: &mut Tape<T>, x: Var) -> Result<(Var, Var)> {
        self.check_size(tape, x)?;
        let xd = tape.detach(x);
        let n = self.nonlinear.apply(tape, xd)?;
        let low = band_component(tape, self.filters, self.take_abs, n, Band::Low)?;
        let high = band_component(tape, self.filters, self.take_abs, n, Band::High)?;
        Ok((low, high))
    }
}

/// Filtered band of `x` without any pre-map, with `abs` when `take_abs`.
pub fn band_component<T: Scalar>(
    tape: &mut Tape<T>,
    filters: &BandFilters<T>,
    take_abs: bool,
    x: Var,
    band: Band,
) -> Result<Var> {
    let filter = match band {
        Band::Low => &filters.low,
        Band::High => &filters.high,
    };
    let f = tape.spectral_filter(x, filter)?;
    Ok(if take_abs { tape.activation(f, Activation::Abs) } else { f })
}

/// The two band terms of the decomposition-consistency loss.
#[derive(Clone, Copy, Debug)]
pub struct FddtTerms {
    pub low: Var,
    pub high: Var,
}

/// Band terms given precomputed generator outputs: `g_x = G(x)`, `g_low = G(X_L)`,
/// `g_high = G(X_H)`.
pub fn fddt_terms_from<T: Scalar>(
    tape: &mut Tape<T>,
    bundle: &GeneratorBundle<'_, T>,
    g_x: Var,
    g_low: Var,
    g_high: Var,
) -> Result<FddtTerms> {
    bundle.check_size(tape, g_x)?;
    let gx_low = bundle.component(tape, g_x, Band::Low)?;
    let gx_high = bundle.component(tape, g_x, Band::High)?;
    Ok(FddtTerms {
        low: tape.l1_distance(g_low, gx_low)?,
        high: tape.l1_distance(g_high, gx_high)?,
    })
}

/// Runs the generator once over `[x; X_L; X_H]` and returns `(G(x), terms)`.
pub fn fddt_terms<T: Scalar>(tape: &mut Tape<T>, bundle: &GeneratorBundle<'_, T>, x: Var) -> Result<(Var, FddtTerms)> {
    let (xl, xh) = bundle.input_bands(tape, x)?;
    let n = tape.shape(x)[0];
    let stacked = tape.concat_batch(&[x, xl, xh])?;
    let out = bundle.generator.apply(tape, stacked)?;
    let g_x = tape.slice_batch(out, 0, n)?;
    let g_low = tape.slice_batch(out, n, n)?;
    let g_high = tape.slice_batch(out, 2 * n, n)?;
    let terms = fddt_terms_from(tape, bundle, g_x, g_low, g_high)?;
    Ok((g_x, terms))
}

/// `mean|G(X_L) - G(x)_L| + mean|G(X_H) - G(x)_H|`.
pub fn fddt_loss<T: Scalar>(tape: &mut Tape<T>, bundle: &GeneratorBundle<'_, T>, x: Var) -> Result<Var> {
    let (_, terms) = fddt_terms(tape, bundle, x)?;
    tape.add(terms.low, terms.high)
}

/// A single band's term of [`fddt_loss`].
pub fn fddt_partial_loss<T: Scalar>(
    tape: &mut Tape<T>,
    bundle: &GeneratorBundle<'_, T>,
    x: Var,
    band: Band,
) -> Result<Var> {
    let (_, terms) = fddt_terms(tape, bundle, x)?;
    Ok(match band {
        Band::Low => terms.low,
        Band::High => terms.high,
    })
}

/// `mean|x_H - G(x)_H|`, with the high band taken directly (no pre-map) and the
/// input side detached.
pub fn fdit_highfreq_from<T: Scalar>(
    tape: &mut Tape<T>,
    filters: &BandFilters<T>,
    take_abs: bool,
    x: Var,
    g_x: Var,
) -> Result<Var> {
    let xd = tape.detach(x);
    let xh = band_component(tape, filters, take_abs, xd, Band::High)?;
    let gh = band_component(tape, filters, take_abs, g_x, Band::High)?;
    tape.l1_distance(xh, gh)
}

pub fn fdit_highfreq_loss<T: Scalar>(tape: &mut Tape<T>, bundle: &GeneratorBundle<'_, T>, x: Var) -> Result<Var> {
    bundle.check_size(tape, x)?;
    let g_x = bundle.generator.apply(tape, x)?;
    fdit_highfreq_from(tape, bundle.filters, bundle.take_abs, x, g_x)
}

/// `mean|G2(G1(x1)) - x1| + mean|G1(G2(x2)) - x2|`.
pub fn cycle_loss<T: Scalar>(
    tape: &mut Tape<T>,
    g1: &dyn ImageMap<T>,
    g2: &dyn ImageMap<T>,
    x1: Var,
    x2: Var,
) -> Result<Var> {
    let a = g1.apply(tape, x1)?;
    let aa = g2.apply(tape, a)?;
    let b = g2.apply(tape, x2)?;
    let bb = g1.apply(tape, b)?;
    let la = tape.l1_distance(aa, x1)?;
    let lb = tape.l1_distance(bb, x2)?;
    tape.add(la, lb)
}

fn check_aligned<T: Scalar>(tape: &Tape<T>, x1: Var, x2: Var) -> Result<()> {
    if tape.shape(x1).first() != tape.shape(x2).first() {
        return Err(Error::ShapeMismatch {
            op: "paired batches",
            left: tape.shape(x1).to_vec(),
            right: tape.shape(x2).to_vec(),
        });
    }
    Ok(())
}

/// `mean|x2 - G1(x1)| + mean|x1 - G2(x2)|` over index-aligned pairs.
pub fn paired_l1_loss<T: Scalar>(
    tape: &mut Tape<T>,
    g1: &dyn ImageMap<T>,
    g2: &dyn ImageMap<T>,
    x1: Var,
    x2: Var,
) -> Result<Var> {
    check_aligned(tape, x1, x2)?;
    let a = g1.apply(tape, x1)?;
    let b = g2.apply(tape, x2)?;
    let la = tape.l1_distance(x2, a)?;
    let lb = tape.l1_distance(x1, b)?;
    tape.add(la, lb)
}

fn check_scores<T: Scalar>(tape: &Tape<T>, v: Var) -> Result<()> {
    match tape
        .value(v)
        .iter()
        .position(|s| !(s.is_finite() && *s >= T::zero() && *s <= T::one()))
    {
        Some(i) => Err(invalid(format!(
            "discriminator score {} at index {i} lies outside [0, 1]",
            tape.value(v)[i]
        ))),
        None => Ok(()),
    }
}

/// `mean log(max(s, eps))`.
pub fn mean_log_score<T: Scalar>(tape: &mut Tape<T>, scores: Var) -> Result<Var> {
    check_scores(tape, scores)?;
    Ok(tape.log_clamped(scores, SCORE_EPS))
}

/// `mean log(max(1 - s, eps))`.
pub fn mean_log_one_minus_score<T: Scalar>(tape: &mut Tape<T>, scores: Var) -> Result<Var> {
    check_scores(tape, scores)?;
    let flipped = tape.affine(scores, -T::one(), T::one());
    Ok(tape.log_clamped(flipped, SCORE_EPS))
}

/// `-sum_i [mean log D(real_i) + mean log(1 - D(fake_i))]`.
pub fn disc_loss_from_scores<T: Scalar>(tape: &mut Tape<T>, pairs: &[(Var, Var)]) -> Result<Var> {
    let mut terms = Vec::with_capacity(2 * pairs.len());
    for &(real, fake) in pairs {
        terms.push(mean_log_score(tape, real)?);
        terms.push(mean_log_one_minus_score(tape, fake)?);
    }
    negated_sum(tape, &terms)
}

/// Non-saturating generator form: `-sum_i mean log D(fake_i)`.
pub fn gen_adv_loss_from_scores<T: Scalar>(tape: &mut Tape<T>, fakes: &[Var]) -> Result<Var> {
    let mut terms = Vec::with_capacity(fakes.len());
    for &fake in fakes {
        terms.push(mean_log_score(tape, fake)?);
    }
    negated_sum(tape, &terms)
}

fn negated_sum<T: Scalar>(tape: &mut Tape<T>, terms: &[Var]) -> Result<Var> {
    let mut acc = *terms.first().ok_or_else(|| invalid("no adversarial terms"))?;
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(tape.scale(acc, -T::one()))
}

/// Both adversarial objectives for the two-domain setup.
#[derive(Clone, Copy, Debug)]
pub struct AdversarialLosses {
    pub gen: Var,
    pub disc: Var,
}

/// Adversarial losses with `D2` judging domain 2 and `D1` judging domain 1.
///
/// The discriminator loss sees detached generator outputs and trainable discriminator
/// parameters; the generator loss sees live generator outputs and frozen
/// discriminator parameters. Each discriminator is bound twice, so gradients of the
/// two losses never mix.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_losses<'n, T: Scalar>(
    tape: &mut Tape<T>,
    d1: &'n Network<T>,
    d2: &'n Network<T>,
    g1: &dyn ImageMap<T>,
    g2: &dyn ImageMap<T>,
    x1: Var,
    x2: Var,
) -> Result<(AdversarialLosses, [crate::diffnet::BoundNetwork<'n, T>; 2])> {
    let fake2 = g1.apply(tape, x1)?;
    let fake1 = g2.apply(tape, x2)?;
    let d1_train = d1.bind(tape, true);
    let d2_train = d2.bind(tape, true);
    let fake2_d = tape.detach(fake2);
    let fake1_d = tape.detach(fake1);
    let r2 = d2_train.apply(tape, x2)?;
    let f2 = d2_train.apply(tape, fake2_d)?;
    let r1 = d1_train.apply(tape, x1)?;
    let f1 = d1_train.apply(tape, fake1_d)?;
    let disc = disc_loss_from_scores(tape, &[(r2, f2), (r1, f1)])?;
    let d1_frozen = d1.bind(tape, false);
    let d2_frozen = d2.bind(tape, false);
    let s2 = d2_frozen.apply(tape, fake2)?;
    let s1 = d1_frozen.apply(tape, fake1)?;
    let gen = gen_adv_loss_from_scores(tape, &[s2, s1])?;
    Ok((AdversarialLosses { gen, disc }, [d1_train, d2_train]))
}

/// `lambda_baseline * baseline + lambda_freq * freq`.
pub fn total_generator_loss<T: Scalar>(
    tape: &mut Tape<T>,
    weights: LossWeights,
    baseline: Var,
    freq: Var,
) -> Result<Var> {
    if tape.value(baseline).len() != 1 || tape.value(freq).len() != 1 {
        return Err(invalid("total generator loss combines scalar terms only"));
    }
    if weights.lambda_freq == 0.0 {
        // keeps the baseline trajectory bit-identical when the frequency term is off
        return Ok(if weights.lambda_baseline == 1.0 {
            baseline
        } else {
            tape.scale(baseline, T::of(weights.lambda_baseline))
        });
    }
    let b = tape.scale(baseline, T::of(weights.lambda_baseline));
    let f = tape.scale(freq, T::of(weights.lambda_freq));
    tape.add(b, f)
}
