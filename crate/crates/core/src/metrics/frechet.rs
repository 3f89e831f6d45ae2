use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_finite, invalid, Error, Result};
use crate::scalar::Scalar;
use crate::spectral::ImagePlane;

/// Eigenvalues above `-CLAMP_TOL` are treated as rounding noise and clamped to zero.
const CLAMP_TOL: f64 = 1e-10;
/// Eigenvalues below `-REJECT_TOL * max(1, |largest|)` mean the input is not PSD.
const REJECT_TOL: f64 = 1e-8;

/// `count x dim` feature matrix, one row per image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    count: usize,
    dim: usize,
    features: Vec<f64>,
}

impl FeatureSet {
    pub fn new(count: usize, dim: usize, features: Vec<f64>) -> Result<Self> {
        if count == 0 || dim == 0 || features.len() != count * dim {
            return Err(invalid(format!(
                "feature set {count}x{dim} cannot hold {} values",
                features.len()
            )));
        }
        check_finite("features", &features)?;
        Ok(Self { count, dim, features })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows `range` as a new set.
    pub fn rows(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.count || range.is_empty() {
            return Err(invalid(format!("row range {range:?} outside 0..{}", self.count)));
        }
        Self::new(
            range.len(),
            self.dim,
            self.features[range.start * self.dim..range.end * self.dim].to_vec(),
        )
    }
}

/// Mean vector and covariance matrix of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::ShapeMismatch {
                op: "gaussian stats",
                left: vec![d],
                right: vec![covariance.nrows(), covariance.ncols()],
            });
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased covariance, symmetrized as `(C + C^T) / 2`.
pub fn estimate_gaussian_stats(set: &FeatureSet) -> Result<GaussianStats> {
    if set.count < 2 {
        return Err(invalid(format!(
            "covariance needs at least two feature rows, got {}",
            set.count
        )));
    }
    let x = DMatrix::from_row_slice(set.count, set.dim, &set.features);
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (set.count as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianStats::new(mean, cov)
}

fn psd_eigen(m: &DMatrix<f64>, what: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical(format!("eigendecomposition of {what} did not converge")))?;
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut values = eig.eigenvalues;
    for (i, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numerical(format!("{what} has a non-finite eigenvalue at {i}")));
        }
        if *v < -REJECT_TOL * scale {
            return Err(Error::Numerical(format!(
                "{what} is not positive semidefinite: eigenvalue {i} is {v:e}"
            )));
        }
        if *v < CLAMP_TOL {
            *v = v.max(0.0);
        }
    }
    Ok((values, eig.eigenvectors))
}

/// `|mu_g - mu_r|^2 + tr(S_g + S_r - 2 (S_g S_r)^{1/2})`.
///
/// The trace of the matrix root equals the trace of the PSD root of
/// `S_r^{1/2} S_g S_r^{1/2}`, which is symmetric and handled by eigendecomposition.
pub fn frechet_distance(g: &GaussianStats, r: &GaussianStats) -> Result<f64> {
    if g.dim() != r.dim() {
        return Err(Error::ShapeMismatch {
            op: "frechet distance",
            left: vec![g.dim()],
            right: vec![r.dim()],
        });
    }
    let (rv, rq) = psd_eigen(&r.covariance, "reference covariance")?;
    psd_eigen(&g.covariance, "generated covariance")?;
    let root_r = &rq * DMatrix::from_diagonal(&rv.map(f64::sqrt)) * rq.transpose();
    let inner = &root_r * &g.covariance * &root_r;
    let (iv, _) = psd_eigen(&inner, "covariance product")?;
    let tr_root: f64 = iv.iter().map(|v| v.sqrt()).sum();
    let diff = &g.mean - &r.mean;
    let d = diff.norm_squared() + g.covariance.trace() + r.covariance.trace() - 2.0 * tr_root;
    Ok(d.max(0.0))
}

/// Fixed feature map applied to flattened images: a seeded Gaussian projection
/// followed by `tanh`, or a pass-through of the raw pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionExtractor {
    input_len: usize,
    dim: usize,
    /// `dim x input_len`, row-major; `None` is the identity.
    matrix: Option<Vec<f64>>,
}

impl ProjectionExtractor {
    /// Entries are drawn from `N(0, 1/input_len)` so projections of `[0,1]` images stay
    /// in the responsive range of `tanh`.
    pub fn new(input_len: usize, dim: usize, seed: u64) -> Result<Self> {
        if input_len == 0 || dim == 0 {
            return Err(invalid("projection sizes must be positive"));
        }
        let normal = Normal::new(0.0, 1.0 / (input_len as f64).sqrt()).map_err(|e| invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix = (0..dim * input_len).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self {
            input_len,
            dim,
            matrix: Some(matrix),
        })
    }

    /// Features equal to the flattened pixels.
    pub fn identity(input_len: usize) -> Self {
        Self {
            input_len,
            dim: input_len,
            matrix: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extract<T: Scalar>(&self, images: &[ImagePlane<T>]) -> Result<FeatureSet> {
        let first = images.first().ok_or_else(|| invalid("no images to embed"))?;
        let mut features = Vec::with_capacity(images.len() * self.dim);
        for (i, im) in images.iter().enumerate() {
            if !im.same_shape(first) {
                return Err(Error::ShapeMismatch {
                    op: "feature extraction",
                    left: first.dims().to_vec(),
                    right: im.dims().to_vec(),
                });
            }
            if im.data().len() != self.input_len {
                return Err(invalid(format!(
                    "image {i} has {} values, extractor expects {}",
                    im.data().len(),
                    self.input_len
                )));
            }
            match &self.matrix {
                None => features.extend(im.data().iter().map(|v| v.as_f64())),
                Some(m) => {
                    let px: Vec<f64> = im.data().iter().map(|v| v.as_f64()).collect();
                    for row in m.chunks_exact(self.input_len) {
                        let dot: f64 = row.iter().zip(&px).map(|(a, b)| a * b).sum();
                        features.push(dot.tanh());
                    }
                }
            }
        }
        FeatureSet::new(images.len(), self.dim, features)
    }
}

/// Seeded projection features of `images`.
pub fn random_projection_features<T: Scalar>(images: &[ImagePlane<T>], dim: usize, seed: u64) -> Result<FeatureSet> {
    let first = images.first().ok_or_else(|| invalid("no images to embed"))?;
    ProjectionExtractor::new(first.data().len(), dim, seed)?.extract(images)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand_distr::Uniform;

    use super::*;

    fn stats_1d(mean: f64, var: f64) -> GaussianStats {
        GaussianStats::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var)).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        DMatrix::from_fn(rows, cols, |_, _| n.sample(&mut rng))
    }

    fn random_stats(d: usize, seed: u64) -> GaussianStats {
        let a = random_matrix(d, d + 2, seed);
        let mean = random_matrix(d, 1, seed + 1).column(0).into_owned();
        GaussianStats::new(mean, &a * a.transpose() / (d as f64)).unwrap()
    }

    #[test]
    fn closed_form_one_dimensional_cases() {
        let a = stats_1d(0.0, 1.0);
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-9);
        assert!((frechet_distance(&a, &stats_1d(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-9);
        assert!((frechet_distance(&stats_1d(0.0, 4.0), &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_stats_closed_forms() {
        let same = FeatureSet::new(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let s = estimate_gaussian_stats(&same).unwrap();
        assert!(s.covariance.iter().all(|&v| v == 0.0));
        let two = FeatureSet::new(2, 2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        let s = estimate_gaussian_stats(&two).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 0.0]);
        assert_eq!(s.covariance, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        let one = FeatureSet::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(estimate_gaussian_stats(&one).is_err());
    }

    #[test]
    fn gaussian_stats_match_two_pass_oracle() {
        let (n, d) = (50, 4);
        let m = random_matrix(n, d, 7);
        let rows: Vec<f64> = (0..n).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
        let s = estimate_gaussian_stats(&FeatureSet::new(n, d, rows.clone()).unwrap()).unwrap();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                mean[j] += rows[i * d + j] / n as f64;
            }
        }
        for a in 0..d {
            assert!((s.mean[a] - mean[a]).abs() < 1e-12);
            for b in 0..d {
                let mut c = 0.0;
                for i in 0..n {
                    c += (rows[i * d + a] - mean[a]) * (rows[i * d + b] - mean[b]);
                }
                assert!((s.covariance[(a, b)] - c / (n as f64 - 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_and_non_psd_are_rejected() {
        let a = random_stats(3, 1);
        let b = random_stats(2, 2);
        assert!(frechet_distance(&a, &b).is_err());
        let bad = GaussianStats::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        let good = random_stats(2, 3);
        let err = frechet_distance(&good, &bad).unwrap_err();
        assert!(err.to_string().contains("positive semidefinite"));
    }

    #[test]
    fn projection_is_deterministic_and_identity_passes_pixels() {
        let images: Vec<ImagePlane<f64>> = (0..4)
            .map(|k| ImagePlane::from_fn(4, 4, |r, c| ((r * 4 + c + k) as f64 * 0.1).sin().abs()).unwrap())
            .collect();
        let a = random_projection_features(&images, 6, 42).unwrap();
        let b = random_projection_features(&images, 6, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_projection_features(&images, 6, 43).unwrap());
        let id = ProjectionExtractor::identity(16).extract(&images).unwrap();
        assert_eq!(id.row(2), images[2].data());
        let odd = vec![images[0].clone(), ImagePlane::filled(2, 8, 1, 0.0).unwrap()];
        assert!(random_projection_features(&odd, 6, 1).is_err());
    }

    fn blob_images(count: usize, seed: u64, sharp: bool) -> Vec<ImagePlane<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.0, 1.0).unwrap();
        (0..count)
            .map(|_| {
                let (cy, cx) = (u.sample(&mut rng) * 16.0, u.sample(&mut rng) * 16.0);
                let width = 2.0 + 4.0 * u.sample(&mut rng);
                let noise: Vec<f64> = (0..256).map(|_| u.sample(&mut rng)).collect();
                ImagePlane::from_fn(16, 16, |r, c| {
                    let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                    let blob = (-d2 / (2.0 * width * width)).exp();
                    if sharp {
                        0.5 * blob + 0.5 * noise[r * 16 + c]
                    } else {
                        blob
                    }
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn distinct_distributions_are_farther_than_split_halves() {
        for seed in 0..5 {
            let smooth = blob_images(80, seed, false);
            let noisy = blob_images(40, seed + 100, true);
            let ex = ProjectionExtractor::new(256, 8, seed).unwrap();
            let fs = ex.extract(&smooth).unwrap();
            let first = estimate_gaussian_stats(&fs.rows(0..40).unwrap()).unwrap();
            let second = estimate_gaussian_stats(&fs.rows(40..80).unwrap()).unwrap();
            let other = estimate_gaussian_stats(&ex.extract(&noisy).unwrap()).unwrap();
            let within = frechet_distance(&first, &second).unwrap();
            let across = frechet_distance(&first, &other).unwrap();
            assert!(across > within, "seed {seed}: {across} <= {within}");
        }
    }

    proptest! {
        #[test]
        fn frechet_symmetry_identity_and_rotation(d in 1usize..6, seed in 0u64..10_000) {
            let a = random_stats(d, seed);
            let b = random_stats(d, seed + 17);
            prop_assert!(frechet_distance(&a, &a).unwrap() <= 1e-8);
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-8 * ab.max(1.0));
            let q = random_matrix(d, d, seed + 99).qr().q();
            let rot = |s: &GaussianStats| GaussianStats::new(&q * &s.mean, &q * &s.covariance * q.transpose()).unwrap();
            let rotated = frechet_distance(&rot(&a), &rot(&b)).unwrap();
            prop_assert!((rotated - ab).abs() <= 1e-6 * ab.max(1.0));
        }
    }
}
