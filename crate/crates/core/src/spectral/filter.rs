use std::sync::Arc;

use rustfft::num_complex::Complex;

use super::fft::{centered_frequency, centered_negation, to_natural, Fft2};
use crate::error::{check_finite, invalid, Error, Result};
use crate::scalar::Scalar;

/// Real per-bin multiplier in the centered spectrum layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferGrid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> TransferGrid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(invalid(format!(
                "transfer grid {height}x{width} cannot hold {} values",
                data.len()
            )));
        }
        check_finite("transfer grid", &data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Largest `|H(u,v) - H(-u,-v)|` over the grid, frequencies taken modulo the size.
    pub fn symmetry_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.height {
            let ni = centered_negation(i, self.height);
            for j in 0..self.width {
                let nj = centered_negation(j, self.width);
                worst = worst.max((self.get(i, j) - self.get(ni, nj)).abs());
            }
        }
        worst
    }
}

/// Complementary Gaussian low/high transfer functions.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFilterPair<T> {
    pub sigma: T,
    pub normalized_form: bool,
    pub low: TransferGrid<T>,
    pub high: TransferGrid<T>,
}

/// `low = exp(-(u^2+v^2) / 2 sigma^2)` about the spectrum center, optionally scaled by
/// `1 / (2 pi sigma^2)`; `high = 1 - low`.
pub fn build_gaussian_pair<T: Scalar>(
    height: usize,
    width: usize,
    sigma: T,
    normalized_form: bool,
) -> Result<GaussianFilterPair<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(invalid(format!("gaussian sigma must be positive and finite, got {sigma}")));
    }
    if height == 0 || width == 0 {
        return Err(invalid(format!("filter size must be positive, got {height}x{width}")));
    }
    let two_var = T::of(2.0) * sigma * sigma;
    let scale = if normalized_form {
        T::one() / (T::PI() * two_var)
    } else {
        T::one()
    };
    let mut low = Vec::with_capacity(height * width);
    for i in 0..height {
        let u = T::of(centered_frequency(i, height) as f64);
        for j in 0..width {
            let v = T::of(centered_frequency(j, width) as f64);
            low.push(scale * (-(u * u + v * v) / two_var).exp());
        }
    }
    let high = low.iter().map(|&l| T::one() - l).collect();
    Ok(GaussianFilterPair {
        sigma,
        normalized_form,
        low: TransferGrid::new(height, width, low)?,
        high: TransferGrid::new(height, width, high)?,
    })
}

/// Precomputed real filtering `x -> Re(IDFT(H . DFT(x)))` on single planes.
///
/// Uses natural-order transforms internally; equivalent to the centered
/// `forward_dft` / `apply_transfer` / `inverse_dft` composition.
#[derive(Debug)]
pub struct SpectralFilter<T: Scalar> {
    height: usize,
    width: usize,
    transfer: Vec<T>,
    fft: Fft2<T>,
}

impl<T: Scalar> SpectralFilter<T> {
    pub fn new(grid: &TransferGrid<T>) -> Self {
        let (h, w) = (grid.height(), grid.width());
        // fold the forward 1/(HW) factor into the multiplier
        let norm = T::one() / T::of((h * w) as f64);
        let transfer = to_natural(grid.data(), h, w)
            .into_iter()
            .map(|v| v * norm)
            .collect();
        Self {
            height: h,
            width: w,
            transfer,
            fft: Fft2::new(h, w),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Filters one `height x width` plane into `out`.
    pub fn apply_plane(&self, input: &[T], out: &mut [T]) -> Result<()> {
        let n = self.height * self.width;
        if input.len() != n || out.len() != n {
            return Err(Error::ShapeMismatch {
                op: "spectral filter",
                left: vec![self.height, self.width],
                right: vec![input.len()],
            });
        }
        let mut buf: Vec<Complex<T>> = input.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fft.forward(&mut buf);
        for (c, &h) in buf.iter_mut().zip(&self.transfer) {
            *c = *c * h;
        }
        self.fft.inverse(&mut buf);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re;
        }
        Ok(())
    }

    /// Filters every plane of a planar buffer whose planes are `height x width`.
    pub fn apply_planes(&self, input: &[T], out: &mut [T]) -> Result<()> {
        let n = self.height * self.width;
        if input.len() % n != 0 || input.len() != out.len() {
            return Err(Error::ShapeMismatch {
                op: "spectral filter",
                left: vec![self.height, self.width],
                right: vec![input.len()],
            });
        }
        for (src, dst) in input.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            self.apply_plane(src, dst)?;
        }
        Ok(())
    }
}

/// A Gaussian pair together with ready-to-run low and high filters.
#[derive(Debug, Clone)]
pub struct BandFilters<T: Scalar> {
    pub pair: GaussianFilterPair<T>,
    pub low: Arc<SpectralFilter<T>>,
    pub high: Arc<SpectralFilter<T>>,
}

impl<T: Scalar> BandFilters<T> {
    pub fn new(pair: GaussianFilterPair<T>) -> Self {
        let low = Arc::new(SpectralFilter::new(&pair.low));
        let high = Arc::new(SpectralFilter::new(&pair.high));
        Self { pair, low, high }
    }

    pub fn gaussian(height: usize, width: usize, sigma: T, normalized_form: bool) -> Result<Self> {
        Ok(Self::new(build_gaussian_pair(height, width, sigma, normalized_form)?))
    }

    pub fn height(&self) -> usize {
        self.low.height()
    }

    pub fn width(&self) -> usize {
        self.low.width()
    }
}
