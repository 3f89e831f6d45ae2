//! Full-reference image metrics (MSE, PSNR, SSIM) and the Fréchet distance between
//! Gaussian fits of feature embeddings.

mod frechet;

pub use frechet::{
    estimate_gaussian_stats, frechet_distance, random_projection_features, FeatureSet, GaussianStats,
    ProjectionExtractor,
};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::spectral::ImagePlane;

fn check_pair<T: Scalar>(op: &'static str, a: &ImagePlane<T>, b: &ImagePlane<T>) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch {
            op,
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        });
    }
    Ok(())
}

/// Mean squared difference over every element.
pub fn mse<T: Scalar>(real: &ImagePlane<T>, fake: &ImagePlane<T>) -> Result<T> {
    check_pair("mse", real, fake)?;
    let n = T::of(real.data().len() as f64);
    Ok(real
        .data()
        .iter()
        .zip(fake.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        / n)
}

/// `10 log10(peak^2 / mse)`; zero error maps to `+inf`.
pub fn psnr_from_mse<T: Scalar>(mse: T, peak: T) -> Result<T> {
    if !(peak > T::zero() && peak.is_finite()) {
        return Err(invalid(format!("psnr peak must be positive, got {peak}")));
    }
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::of(10.0) * (peak * peak / mse).log10())
}

pub fn psnr<T: Scalar>(real: &ImagePlane<T>, fake: &ImagePlane<T>, peak: T) -> Result<T> {
    let m = mse(real, fake)?;
    psnr_from_mse(m, peak)
}

/// Stabilizer parameters of SSIM: `c1 = (k1 L)^2`, `c2 = (k2 L)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub peak: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            peak: 1.0,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimParams {
    fn constants<T: Scalar>(&self) -> Result<(T, T)> {
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(invalid(format!("ssim peak must be positive, got {}", self.peak)));
        }
        Ok((T::of((self.k1 * self.peak).powi(2)), T::of((self.k2 * self.peak).powi(2))))
    }
}

/// Statistics window used by SSIM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SsimMode {
    /// Whole-image statistics.
    #[default]
    Global,
    /// Mean over 11x11 Gaussian-weighted windows (sigma 1.5), valid positions only.
    Windowed,
}

fn ssim_formula<T: Scalar>(mx: T, my: T, vx: T, vy: T, cxy: T, c1: T, c2: T) -> T {
    let two = T::of(2.0);
    ((two * mx * my + c1) * (two * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

fn ssim_plane_global<T: Scalar>(x: &[T], y: &[T], c1: T, c2: T) -> T {
    let n = T::of(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let dof = n - T::one();
    let mut vx = T::zero();
    let mut vy = T::zero();
    let mut cxy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cxy += (a - mx) * (b - my);
    }
    ssim_formula(mx, my, vx / dof, vy / dof, cxy / dof, c1, c2)
}

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;

fn ssim_plane_windowed<T: Scalar>(x: &[T], y: &[T], h: usize, w: usize, c1: T, c2: T) -> T {
    let half = (WINDOW / 2) as f64;
    let g1: Vec<f64> = (0..WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
        .collect();
    let total: f64 = g1.iter().sum();
    let weights: Vec<T> = g1
        .iter()
        .flat_map(|a| g1.iter().map(move |b| a * b / (total * total)))
        .map(T::of)
        .collect();
    let mut acc = T::zero();
    let mut count = 0usize;
    for r0 in 0..=h - WINDOW {
        for c0 in 0..=w - WINDOW {
            let (mut mx, mut my) = (T::zero(), T::zero());
            for i in 0..WINDOW {
                for j in 0..WINDOW {
                    let k = (r0 + i) * w + c0 + j;
                    let wt = weights[i * WINDOW + j];
                    mx += wt * x[k];
                    my += wt * y[k];
                }
            }
            let (mut vx, mut vy, mut cxy) = (T::zero(), T::zero(), T::zero());
            for i in 0..WINDOW {
                for j in 0..WINDOW {
                    let k = (r0 + i) * w + c0 + j;
                    let wt = weights[i * WINDOW + j];
                    vx += wt * (x[k] - mx) * (x[k] - mx);
                    vy += wt * (y[k] - my) * (y[k] - my);
                    cxy += wt * (x[k] - mx) * (y[k] - my);
                }
            }
            acc += ssim_formula(mx, my, vx, vy, cxy, c1, c2);
            count += 1;
        }
    }
    acc / T::of(count as f64)
}

/// SSIM averaged over channels.
pub fn ssim<T: Scalar>(x: &ImagePlane<T>, y: &ImagePlane<T>, params: &SsimParams, mode: SsimMode) -> Result<T> {
    check_pair("ssim", x, y)?;
    let (c1, c2) = params.constants::<T>()?;
    let (h, w) = (x.height(), x.width());
    match mode {
        SsimMode::Global if h * w < 2 => {
            return Err(invalid("global ssim needs at least two pixels per channel"));
        }
        SsimMode::Windowed if h < WINDOW || w < WINDOW => {
            return Err(invalid(format!(
                "windowed ssim needs at least {WINDOW}x{WINDOW} pixels, got {h}x{w}"
            )));
        }
        _ => {}
    }
    let mut acc = T::zero();
    for c in 0..x.channels() {
        let (a, b) = (x.channel(c), y.channel(c));
        acc += match mode {
            SsimMode::Global => ssim_plane_global(a, b, c1, c2),
            SsimMode::Windowed => ssim_plane_windowed(a, b, h, w, c1, c2),
        };
    }
    Ok(acc / T::of(x.channels() as f64))
}

/// Whole-image SSIM with unbiased (n - 1) variance and covariance.
pub fn ssim_global<T: Scalar>(x: &ImagePlane<T>, y: &ImagePlane<T>, params: &SsimParams) -> Result<T> {
    ssim(x, y, params, SsimMode::Global)
}

/// Settings of an evaluation pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricConfig {
    pub peak: f64,
    pub ssim: SsimParams,
    pub ssim_mode: SsimMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            peak: 1.0,
            ssim: SsimParams::default(),
            ssim_mode: SsimMode::Global,
        }
    }
}

/// Metrics of one evaluation pass over aligned (real, generated) image lists.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    /// Mean squared error pooled over all images.
    pub mse: f64,
    /// PSNR of the pooled MSE.
    pub psnr: f64,
    /// Mean SSIM over images.
    pub ssim: f64,
    /// Fréchet distance of projection features, when an extractor was supplied.
    pub frechet: Option<f64>,
    pub count: usize,
    pub config: MetricConfig,
}

/// Evaluates aligned image lists. Images are expected in `[0, peak]`.
pub fn evaluate<T: Scalar>(
    real: &[ImagePlane<T>],
    fake: &[ImagePlane<T>],
    config: &MetricConfig,
    extractor: Option<&ProjectionExtractor>,
) -> Result<MetricReport> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(invalid(format!(
            "evaluation needs equally many real and generated images, got {} and {}",
            real.len(),
            fake.len()
        )));
    }
    let mut mse_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (a, b) in real.iter().zip(fake) {
        mse_sum += mse(a, b)?.as_f64();
        ssim_sum += ssim(a, b, &config.ssim, config.ssim_mode)?.as_f64();
    }
    let n = real.len() as f64;
    let mse_mean = mse_sum / n;
    let frechet = match extractor {
        Some(ex) => {
            let fr = estimate_gaussian_stats(&ex.extract(real)?)?;
            let fg = estimate_gaussian_stats(&ex.extract(fake)?)?;
            Some(frechet_distance(&fg, &fr)?)
        }
        None => None,
    };
    Ok(MetricReport {
        mse: mse_mean,
        psnr: psnr_from_mse(mse_mean, config.peak)?,
        ssim: ssim_sum / n,
        frechet,
        count: real.len(),
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    use super::*;

    fn img(h: usize, w: usize, data: Vec<f64>) -> ImagePlane<f64> {
        ImagePlane::new(h, w, 1, data).unwrap()
    }

    fn random_img(h: usize, w: usize, seed: u64) -> ImagePlane<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.0, 1.0).unwrap();
        img(h, w, (0..h * w).map(|_| u.sample(&mut rng)).collect())
    }

    #[test]
    fn mse_closed_forms() {
        let a = random_img(8, 8, 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let i = img(1, 2, vec![0.0, 2.0]);
        let k = img(1, 2, vec![0.0, 0.0]);
        assert_eq!(mse(&i, &k).unwrap(), 2.0);
        assert!(mse(&i, &a).is_err());
    }

    #[test]
    fn mse_matches_double_loop() {
        let a = random_img(8, 8, 2);
        let b = random_img(8, 8, 3);
        let mut acc = 0.0;
        for r in 0..8 {
            for c in 0..8 {
                let d = a.get(0, r, c) - b.get(0, r, c);
                acc += d * d;
            }
        }
        assert!((mse(&a, &b).unwrap() - acc / 64.0).abs() < 1e-15);
    }

    #[test]
    fn psnr_closed_forms() {
        let r = 255.0f64;
        assert!(psnr_from_mse(r * r, r).unwrap().abs() < 1e-9);
        assert!((psnr_from_mse(r * r / 100.0, r).unwrap() - 20.0).abs() < 1e-9);
        let a = random_img(4, 4, 4);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &a, 0.0).is_err());
        assert!(psnr(&a, &a, -1.0).is_err());
    }

    #[test]
    fn ssim_closed_forms() {
        let p = SsimParams::default();
        let x = random_img(8, 8, 5);
        assert_eq!(ssim_global(&x, &x, &p).unwrap(), 1.0);
        let c = ImagePlane::filled(8, 8, 1, 0.3).unwrap();
        assert_eq!(ssim_global(&c, &c, &p).unwrap(), 1.0);
        let one = img(1, 1, vec![0.5]);
        assert!(ssim_global(&one, &one, &p).is_err());
    }

    #[test]
    fn ssim_anti_correlated_is_negative() {
        let p = SsimParams::default();
        let x = random_img(8, 8, 6);
        let y = x.map(|v| 1.0 - v);
        let got = ssim_global(&x, &y, &p).unwrap();
        // direct formula with n - 1 statistics
        let n = 64.0;
        let mx = x.data().iter().sum::<f64>() / n;
        let my = y.data().iter().sum::<f64>() / n;
        let vx = x.data().iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let vy = y.data().iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0);
        let cxy = x.data().iter().zip(y.data()).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
        let (c1, c2) = (1e-4, 9e-4);
        let want = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        assert!(got < 0.0);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn windowed_ssim_self_similarity_and_size_check() {
        let p = SsimParams::default();
        let x = random_img(16, 16, 7);
        assert!((ssim(&x, &x, &p, SsimMode::Windowed).unwrap() - 1.0).abs() < 1e-12);
        let y = x.map(|v| (v + 0.2).min(1.0));
        let s = ssim(&x, &y, &p, SsimMode::Windowed).unwrap();
        assert!(s < 1.0 && s > 0.0);
        assert!(ssim(&random_img(8, 8, 1), &random_img(8, 8, 2), &p, SsimMode::Windowed).is_err());
    }

    #[test]
    fn degradation_with_noise_is_monotone() {
        for seed in 0..5 {
            let x = random_img(32, 32, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let noise: Vec<f64> = (0..1024).map(|_| normal.sample(&mut rng)).collect();
            let mut last: Option<(f64, f64, f64)> = None;
            for amp in [0.01, 0.03, 0.1, 0.3, 1.0] {
                let y = img(32, 32, x.data().iter().zip(&noise).map(|(v, n)| v + amp * n).collect());
                let m = mse(&x, &y).unwrap();
                let p = psnr(&x, &y, 1.0).unwrap();
                let s = ssim_global(&x, &y, &SsimParams::default()).unwrap();
                if let Some((lm, lp, ls)) = last {
                    assert!(m > lm && p < lp && s < ls, "seed {seed} amp {amp}");
                }
                last = Some((m, p, s));
            }
        }
    }

    #[test]
    fn report_pools_mse_before_psnr() {
        let real = vec![random_img(12, 12, 1), random_img(12, 12, 2), random_img(12, 12, 3)];
        let fake: Vec<_> = real.iter().map(|i| i.map(|v| v * 0.9)).collect();
        let ex = ProjectionExtractor::new(144, 4, 9).unwrap();
        let r = evaluate(&real, &fake, &MetricConfig::default(), Some(&ex)).unwrap();
        assert!((r.psnr - 10.0 * (1.0 / r.mse).log10()).abs() < 1e-12);
        assert!(r.frechet.unwrap() >= 0.0);
        assert_eq!(r.count, 3);
        let same = evaluate(&real, &real, &MetricConfig::default(), None).unwrap();
        assert_eq!((same.mse, same.psnr, same.ssim), (0.0, f64::INFINITY, 1.0));
        assert!(evaluate(&real, &fake[..2], &MetricConfig::default(), None).is_err());
    }

    proptest! {
        #[test]
        fn pairwise_metric_properties(h in 2usize..12, w in 2usize..12, s1 in any::<u64>(), s2 in any::<u64>()) {
            let a = random_img(h, w, s1);
            let b = random_img(h, w, s2);
            let p = SsimParams::default();
            let m_ab = mse(&a, &b).unwrap();
            prop_assert_eq!(m_ab, mse(&b, &a).unwrap());
            prop_assert!(m_ab >= 0.0);
            prop_assert_eq!(m_ab == 0.0, a == b);
            let s_ab = ssim_global(&a, &b, &p).unwrap();
            prop_assert!((s_ab - ssim_global(&b, &a, &p).unwrap()).abs() <= 1e-12);
            prop_assert!(s_ab.abs() <= 1.0 + 1e-12);
            prop_assert!((ssim_global(&a, &a, &p).unwrap() - 1.0).abs() <= 1e-12);
            if m_ab > 0.0 {
                let ps = psnr(&a, &b, 1.0).unwrap();
                prop_assert!((ps - 10.0 * (1.0 / m_ab).log10()).abs() <= 1e-9);
            }
        }
    }
}
