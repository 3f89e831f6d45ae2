//! Separable 2-D FFT on row-major complex buffers, plus centering helpers.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Scalar;

/// Unnormalized forward and inverse 2-D transforms for one `height x width` size.
pub struct Fft2<T: Scalar> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl<T: Scalar> Fft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// In-place `sum_{h,w} x[h,w] e^{-2 pi i (hu/H + wv/W)}`, natural (DC-first) order.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// In-place `sum_{u,v} X[u,v] e^{+2 pi i (uh/H + vw/W)}` without any 1/(HW) factor.
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.run(buf, &self.row_inv, &self.col_inv);
    }

    fn run(&self, buf: &mut [Complex<T>], rows: &Arc<dyn Fft<T>>, cols: &Arc<dyn Fft<T>>) {
        let (h, w) = (self.height, self.width);
        assert_eq!(buf.len(), h * w);
        let scratch_len = rows
            .get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len());
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); scratch_len];
        if w > 1 {
            rows.process_with_scratch(buf, &mut scratch);
        }
        if h > 1 {
            let mut t = vec![Complex::new(T::zero(), T::zero()); h * w];
            transpose(buf, &mut t, h, w);
            cols.process_with_scratch(&mut t, &mut scratch);
            transpose(&t, buf, w, h);
        }
    }
}

fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Index of the DC bin along an axis of length `n` in the centered layout.
#[inline]
pub fn center_index(n: usize) -> usize {
    n / 2
}

/// Signed frequency of centered index `i` along an axis of length `n`.
#[inline]
pub fn centered_frequency(i: usize, n: usize) -> isize {
    i as isize - center_index(n) as isize
}

/// Natural (DC-first) index holding the same bin as centered index `i`.
#[inline]
pub fn natural_from_centered(i: usize, n: usize) -> usize {
    (i + n - center_index(n)) % n
}

/// Centered index holding the same bin as natural index `k`.
#[inline]
pub fn centered_from_natural(k: usize, n: usize) -> usize {
    (k + center_index(n)) % n
}

/// Centered index of the bin with negated frequency.
#[inline]
pub fn centered_negation(i: usize, n: usize) -> usize {
    let k = natural_from_centered(i, n);
    centered_from_natural((n - k) % n, n)
}

/// Reorders a natural-order grid into the centered layout (`fftshift`).
pub fn to_centered<T: Copy>(natural: &[T], height: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(natural.len());
    for i in 0..height {
        let ki = natural_from_centered(i, height);
        for j in 0..width {
            out.push(natural[ki * width + natural_from_centered(j, width)]);
        }
    }
    out
}

/// Inverse of [`to_centered`] (`ifftshift`).
pub fn to_natural<T: Copy>(centered: &[T], height: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(centered.len());
    for k in 0..height {
        let ci = centered_from_natural(k, height);
        for l in 0..width {
            out.push(centered[ci * width + centered_from_natural(l, width)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_matches_numpy_convention() {
        // numpy.fft.fftshift([0,1,2,3,4]) == [3,4,0,1,2]
        let v: Vec<i32> = (0..5).collect();
        assert_eq!(to_centered(&v, 1, 5), vec![3, 4, 0, 1, 2]);
        let v: Vec<i32> = (0..4).collect();
        assert_eq!(to_centered(&v, 4, 1), vec![2, 3, 0, 1]);
        assert_eq!(centered_frequency(0, 5), -2);
        assert_eq!(centered_frequency(0, 4), -2);
        assert_eq!(centered_frequency(3, 4), 1);
    }

    #[test]
    fn shift_round_trip_and_negation() {
        for (h, w) in [(1, 1), (3, 4), (5, 5), (6, 7)] {
            let v: Vec<usize> = (0..h * w).collect();
            assert_eq!(to_natural(&to_centered(&v, h, w), h, w), v);
        }
        for n in 1..9 {
            for i in 0..n {
                let j = centered_negation(i, n);
                assert_eq!(centered_negation(j, n), i);
                let f = centered_frequency(i, n);
                let g = centered_frequency(j, n);
                assert_eq!((f + g).rem_euclid(n as isize), 0);
            }
        }
    }
}
