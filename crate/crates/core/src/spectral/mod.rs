//! Frequency-domain decomposition of images into low- and high-frequency components.
//!
//! Conventions:
//! - the forward transform carries the `1/(HW)` factor, the inverse carries none, so
//!   `inverse_dft(forward_dft(x), false) == x`;
//! - spectra are stored DC-centered: the DC bin sits at `(H/2, W/2)` (integer division)
//!   and the bin at centered index `i` has frequency `i - H/2`;
//! - multi-channel images are decomposed one channel at a time.

mod fft;
mod filter;
mod image;

use rustfft::num_complex::Complex;

pub use fft::{
    center_index, centered_frequency, centered_from_natural, centered_negation,
    natural_from_centered, to_centered, to_natural, Fft2,
};
pub use filter::{build_gaussian_pair, BandFilters, GaussianFilterPair, SpectralFilter, TransferGrid};
pub use image::ImagePlane;

use crate::error::{check_finite, invalid, Error, Result};
use crate::scalar::Scalar;

/// Default standard deviation of the Gaussian pair, in frequency bins.
pub const DEFAULT_SIGMA: f64 = 20.0;

/// Complex `height x width` spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex<T>>,
    pub dc_centered: bool,
}

impl<T: Scalar> Spectrum<T> {
    pub fn new(height: usize, width: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(invalid(format!(
                "spectrum {height}x{width} cannot hold {} bins",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
            dc_centered: true,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.data[row * self.width + col]
    }

    pub fn dc(&self) -> Complex<T> {
        self.get(center_index(self.height), center_index(self.width))
    }

    /// Largest `|F(u,v) - conj(F(-u,-v))|`, relative to the largest bin magnitude.
    pub fn hermitian_defect(&self) -> T {
        let scale = self
            .data
            .iter()
            .map(|c| c.norm())
            .fold(T::zero(), T::max)
            .max(T::min_positive_value());
        let mut worst = T::zero();
        for i in 0..self.height {
            let ni = centered_negation(i, self.height);
            for j in 0..self.width {
                let nj = centered_negation(j, self.width);
                let d = (self.get(i, j) - self.get(ni, nj).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst / scale
    }

    fn check_finite(&self) -> Result<()> {
        match self
            .data
            .iter()
            .position(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            Some(index) => Err(Error::NonFinite {
                what: "spectrum",
                index,
            }),
            None => Ok(()),
        }
    }
}

/// Centered DFT of a single-channel image, scaled by `1/(HW)`.
pub fn forward_dft<T: Scalar>(image: &ImagePlane<T>) -> Result<Spectrum<T>> {
    if image.channels() != 1 {
        return Err(invalid(format!(
            "forward_dft takes a single-channel image, got {} channels",
            image.channels()
        )));
    }
    image.check_finite()?;
    let (h, w) = (image.height(), image.width());
    let fft = Fft2::new(h, w);
    let mut buf: Vec<Complex<T>> = image
        .data()
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    fft.forward(&mut buf);
    let norm = T::one() / T::of((h * w) as f64);
    for c in &mut buf {
        *c = *c * norm;
    }
    Spectrum::new(h, w, to_centered(&buf, h, w))
}

/// Inverse of [`forward_dft`]; with `take_abs` the result is the elementwise magnitude.
pub fn inverse_dft<T: Scalar>(spectrum: &Spectrum<T>, take_abs: bool) -> Result<ImagePlane<T>> {
    spectrum.check_finite()?;
    let (h, w) = (spectrum.height, spectrum.width);
    let mut buf = to_natural(&spectrum.data, h, w);
    Fft2::new(h, w).inverse(&mut buf);
    let data = buf
        .iter()
        .map(|c| if take_abs { c.re.abs() } else { c.re })
        .collect();
    ImagePlane::new(h, w, 1, data)
}

/// Elementwise product of a spectrum with a real transfer grid.
pub fn apply_transfer<T: Scalar>(spectrum: &Spectrum<T>, transfer: &TransferGrid<T>) -> Result<Spectrum<T>> {
    if spectrum.height != transfer.height() || spectrum.width != transfer.width() {
        return Err(Error::ShapeMismatch {
            op: "apply_transfer",
            left: vec![spectrum.height, spectrum.width],
            right: vec![transfer.height(), transfer.width()],
        });
    }
    let data = spectrum
        .data
        .iter()
        .zip(transfer.data())
        .map(|(&c, &t)| c * t)
        .collect();
    Spectrum::new(spectrum.height, spectrum.width, data)
}

/// Low- and high-frequency components of every channel.
pub fn decompose<T: Scalar>(
    image: &ImagePlane<T>,
    filters: &GaussianFilterPair<T>,
    take_abs: bool,
) -> Result<(ImagePlane<T>, ImagePlane<T>)> {
    let (h, w) = (image.height(), image.width());
    if filters.low.height() != h || filters.low.width() != w {
        return Err(Error::ShapeMismatch {
            op: "decompose",
            left: vec![h, w],
            right: vec![filters.low.height(), filters.low.width()],
        });
    }
    check_finite("image", image.data())?;
    let mut low = Vec::with_capacity(image.data().len());
    let mut high = Vec::with_capacity(image.data().len());
    for c in 0..image.channels() {
        let plane = ImagePlane::new(h, w, 1, image.channel(c).to_vec())?;
        let spec = forward_dft(&plane)?;
        low.extend(inverse_dft(&apply_transfer(&spec, &filters.low)?, take_abs)?.into_data());
        high.extend(inverse_dft(&apply_transfer(&spec, &filters.high)?, take_abs)?.into_data());
    }
    Ok((
        ImagePlane::new(h, w, image.channels(), low)?,
        ImagePlane::new(h, w, image.channels(), high)?,
    ))
}

/// Sum of squared spectral magnitudes weighted by a transfer grid (`sum |F|^2 H`).
pub fn band_energy<T: Scalar>(spectrum: &Spectrum<T>, weight: &TransferGrid<T>) -> Result<T> {
    let filtered = apply_transfer(spectrum, weight)?;
    Ok(filtered
        .data
        .iter()
        .zip(&spectrum.data)
        .map(|(f, s)| (f * s.conj()).re)
        .sum())
}
