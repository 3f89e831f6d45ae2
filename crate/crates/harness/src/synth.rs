//! Seeded synthetic translation tasks with known ground-truth transforms.
//!
//! Domain A images are smooth structured scenes: a few Gaussian blobs over
//! band-limited noise, rescaled to `[0, 1]`. Domain B is a fixed transform of
//! domain A, so every held-out prediction can be scored against an exact target.
use std::fmt;
use std::str::FromStr;

use fddt_core::spectral::{apply_transfer, build_gaussian_pair, decompose, forward_dft, inverse_dft, TransferGrid};
use fddt_core::Image;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskFamily {
    /// Low band rescaled around the image mean.
    LowShift,
    /// High band amplified.
    EdgeBoost,
    /// Power-law intensity map.
    ContrastMap,
    /// Weighted mix of the three transforms above.
    Blend,
}

impl TaskFamily {
    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::LowShift => "low_shift",
            TaskFamily::EdgeBoost => "edge_boost",
            TaskFamily::ContrastMap => "contrast_map",
            TaskFamily::Blend => "blend",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            TaskFamily::LowShift,
            TaskFamily::EdgeBoost,
            TaskFamily::ContrastMap,
            TaskFamily::Blend,
        ]
        .into_iter()
        .find(|f| f.name() == s)
        .ok_or_else(|| format!("unknown family '{s}' (expected low_shift, edge_boost, contrast_map or blend)"))
    }
}

/// Parameters of every family; each family reads the ones it needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskParams {
    /// low_shift: relative change of the low band, `B = A + shift * (A_L - mean A)`.
    pub shift: f64,
    /// edge_boost: energy gain of the high band.
    pub gain: f64,
    /// contrast_map: exponent of `B = A^gamma`.
    pub gamma: f64,
    /// Gaussian width (in frequency bins) separating the task's low and high bands.
    pub cutoff: f64,
    /// blend: weights of (low_shift, edge_boost, contrast_map), normalized to sum 1.
    pub blend: [f64; 3],
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            shift: 0.5,
            gain: 2.0,
            gamma: 2.0,
            cutoff: 3.0,
            blend: [1.0, 1.0, 1.0],
        }
    }
}

impl TaskParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(invalid(msg)) };
        check(self.shift.is_finite(), format!("shift must be finite, got {}", self.shift))?;
        check(
            self.gain > 0.0 && self.gain.is_finite(),
            format!("gain must be positive, got {}", self.gain),
        )?;
        check(
            self.gamma > 0.0 && self.gamma.is_finite(),
            format!("gamma must be positive, got {}", self.gamma),
        )?;
        check(
            self.cutoff > 0.0 && self.cutoff.is_finite(),
            format!("cutoff must be positive, got {}", self.cutoff),
        )?;
        check(
            self.blend.iter().all(|w| *w >= 0.0 && w.is_finite()) && self.blend.iter().sum::<f64>() > 0.0,
            format!("blend weights must be non-negative with a positive sum, got {:?}", self.blend),
        )
    }
}

/// A complete description of a synthetic dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticTaskSpec {
    pub family: TaskFamily,
    pub params: TaskParams,
    /// Side length of the square images.
    pub size: usize,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    pub fn new(family: TaskFamily, size: usize, seed: u64) -> Self {
        Self {
            family,
            params: TaskParams::default(),
            size,
            seed,
        }
    }

    /// Domain B counterpart of a domain A image.
    pub fn transform(&self, a: &Image) -> Result<Image> {
        let p = &self.params;
        match self.family {
            TaskFamily::LowShift => low_shift(a, p.shift, p.cutoff),
            TaskFamily::EdgeBoost => edge_boost(a, p.gain, p.cutoff),
            TaskFamily::ContrastMap => Ok(contrast_map(a, p.gamma)),
            TaskFamily::Blend => {
                let total: f64 = p.blend.iter().sum();
                let parts = [
                    low_shift(a, p.shift, p.cutoff)?,
                    edge_boost(a, p.gain, p.cutoff)?,
                    contrast_map(a, p.gamma),
                ];
                let mut out = a.map(|_| 0.0);
                for (w, part) in p.blend.iter().zip(&parts) {
                    let w = w / total;
                    out = out.zip_map(part, |o, v| o + w * v)?;
                }
                Ok(out)
            }
        }
    }
}

/// `count` aligned `(A, B)` pairs; image `i` depends only on the seed and `i`.
pub fn generate_synthetic_pairs(spec: &SyntheticTaskSpec, count: usize) -> Result<(Vec<Image>, Vec<Image>)> {
    if count == 0 {
        return Err(invalid("synthetic dataset needs at least one image"));
    }
    if spec.size == 0 {
        return Err(invalid("synthetic image size must be positive"));
    }
    spec.params.validate()?;
    let mut domain_a = Vec::with_capacity(count);
    let mut domain_b = Vec::with_capacity(count);
    for i in 0..count {
        let a = structured_image(spec.size, image_seed(spec.seed, i as u64))?;
        domain_b.push(spec.transform(&a)?);
        domain_a.push(a);
    }
    Ok((domain_a, domain_b))
}

fn image_seed(seed: u64, index: u64) -> u64 {
    seed ^ (index + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Blobs over smooth noise, min-max scaled to `[0, 1]`.
pub fn structured_image(size: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size * size;
    let white = Normal::new(0.0, 1.0).expect("unit normal");
    let noise: Vec<f64> = (0..n).map(|_| white.sample(&mut rng)).collect();
    let smooth = build_gaussian_pair(size, size, (size as f64 / 6.0).max(1.0), false)?;
    let (noise, _) = decompose(&Image::new(size, size, 1, noise)?, &smooth, false)?;
    let noise_std = (noise.data().iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let noise_scale = if noise_std > 0.0 { 0.15 / noise_std } else { 0.0 };

    let blobs = rng.random_range(3..=6);
    let pos = Uniform::new(0.0, size as f64).expect("valid range");
    let width = Uniform::new(0.08, 0.25).expect("valid range");
    let amp = Uniform::new(0.3, 1.0).expect("valid range");
    let mut data: Vec<f64> = noise.data().iter().map(|v| v * noise_scale).collect();
    for _ in 0..blobs {
        let (cy, cx) = (pos.sample(&mut rng), pos.sample(&mut rng));
        let s = width.sample(&mut rng) * size as f64;
        let a = amp.sample(&mut rng);
        for r in 0..size {
            for c in 0..size {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                data[r * size + c] += a * (-d2 / (2.0 * s * s)).exp();
            }
        }
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in &mut data {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
    Ok(Image::new(size, size, 1, data)?)
}

fn low_shift(a: &Image, shift: f64, cutoff: f64) -> Result<Image> {
    let pair = build_gaussian_pair(a.height(), a.width(), cutoff, false)?;
    let (low, _) = decompose(a, &pair, false)?;
    let mean = a.data().iter().sum::<f64>() / a.data().len() as f64;
    Ok(a.zip_map(&low, |x, l| x + shift * (l - mean))?)
}

fn contrast_map(a: &Image, gamma: f64) -> Image {
    a.map(|x| x.max(0.0).powf(gamma))
}

/// Binary mask of the frequencies where the task's Gaussian high-pass passes at
/// least half of the amplitude.
pub fn high_band_mask(height: usize, width: usize, cutoff: f64) -> Result<TransferGrid<f64>> {
    let pair = build_gaussian_pair(height, width, cutoff, false)?;
    let mask = pair
        .high
        .data()
        .iter()
        .map(|&h| if h >= 0.5 { 1.0 } else { 0.0 })
        .collect();
    Ok(TransferGrid::new(height, width, mask)?)
}

/// Multiplies the masked high band by `sqrt(gain)`, so its energy grows by `gain`.
fn edge_boost(a: &Image, gain: f64, cutoff: f64) -> Result<Image> {
    let mask = high_band_mask(a.height(), a.width(), cutoff)?;
    let amp = gain.sqrt() - 1.0;
    let transfer = TransferGrid::new(
        a.height(),
        a.width(),
        mask.data().iter().map(|m| 1.0 + amp * m).collect(),
    )?;
    let spectrum = forward_dft(a)?;
    Ok(inverse_dft(&apply_transfer(&spectrum, &transfer)?, false)?)
}
