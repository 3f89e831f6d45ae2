//! Padding and im2col kernels behind the convolution nodes.

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Spatial padding applied before a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    None,
    Zero(usize),
    Reflection(usize),
}

impl Padding {
    pub fn amount(self) -> usize {
        match self {
            Padding::None => 0,
            Padding::Zero(p) | Padding::Reflection(p) => p,
        }
    }
}

/// Output extent of a strided window sweep, or an error when the window does not fit.
pub(crate) fn sweep_len(padded: usize, kernel: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(invalid("convolution stride must be positive"));
    }
    if padded < kernel {
        return Err(invalid(format!(
            "padded extent {padded} is smaller than kernel extent {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    // single reflection without edge repeat; callers guarantee pad < n
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Pads every `h x w` plane of `planes` planes.
pub(crate) fn pad_planes<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize, padding: Padding) -> Result<Vec<T>> {
    let p = padding.amount();
    if p == 0 {
        return Ok(x.to_vec());
    }
    if matches!(padding, Padding::Reflection(_)) && (p >= h || p >= w) {
        return Err(invalid(format!(
            "reflection padding {p} needs spatial extent above {p}, got {h}x{w}"
        )));
    }
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![T::zero(); planes * hp * wp];
    for plane in 0..planes {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * hp * wp..(plane + 1) * hp * wp];
        match padding {
            Padding::Zero(_) => {
                for r in 0..h {
                    dst[(r + p) * wp + p..(r + p) * wp + p + w].copy_from_slice(&src[r * w..(r + 1) * w]);
                }
            }
            Padding::Reflection(_) => {
                for r in 0..hp {
                    let sr = reflect(r as isize - p as isize, h);
                    let srow = &src[sr * w..(sr + 1) * w];
                    let drow = &mut dst[r * wp..(r + 1) * wp];
                    drow[p..p + w].copy_from_slice(srow);
                    for c in (0..p).chain(p + w..wp) {
                        drow[c] = srow[reflect(c as isize - p as isize, w)];
                    }
                }
            }
            Padding::None => unreachable!(),
        }
    }
    Ok(out)
}

/// Adjoint of [`pad_planes`]: folds padded gradients back onto the source grid.
pub(crate) fn unpad_planes<T: Scalar>(g: &[T], planes: usize, h: usize, w: usize, padding: Padding, out: &mut [T]) {
    let p = padding.amount();
    if p == 0 {
        for (o, &v) in out.iter_mut().zip(g) {
            *o += v;
        }
        return;
    }
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    for plane in 0..planes {
        let src = &g[plane * hp * wp..(plane + 1) * hp * wp];
        let dst = &mut out[plane * h * w..(plane + 1) * h * w];
        match padding {
            Padding::Zero(_) => {
                for r in 0..h {
                    for c in 0..w {
                        dst[r * w + c] += src[(r + p) * wp + c + p];
                    }
                }
            }
            Padding::Reflection(_) => {
                for r in 0..hp {
                    let sr = reflect(r as isize - p as isize, h);
                    for c in 0..wp {
                        let sc = reflect(c as isize - p as isize, w);
                        dst[sr * w + sc] += src[r * wp + c];
                    }
                }
            }
            Padding::None => unreachable!(),
        }
    }
}

/// Window geometry of an im2col sweep over `n x c x hp x wp` padded planes.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Sweep {
    pub n: usize,
    pub c: usize,
    pub hp: usize,
    pub wp: usize,
    pub k: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Sweep {
    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.n * self.oh * self.ow
    }
}

/// `cols[(ci,ki,kj)][(n,oy,ox)] = x[n][ci][oy*s+ki][ox*s+kj]`.
pub(crate) fn im2col<T: Scalar>(x: &[T], s: &Sweep) -> Vec<T> {
    // rows are produced in storage order, so the buffer is filled by appending
    let mut cols = Vec::with_capacity(s.rows() * s.cols());
    let plane = s.hp * s.wp;
    for ci in 0..s.c {
        for ki in 0..s.k {
            for kj in 0..s.k {
                for ni in 0..s.n {
                    let src = &x[(ni * s.c + ci) * plane..(ni * s.c + ci + 1) * plane];
                    for oy in 0..s.oh {
                        let base = (oy * s.stride + ki) * s.wp + kj;
                        if s.stride == 1 {
                            cols.extend_from_slice(&src[base..base + s.ow]);
                        } else {
                            cols.extend((0..s.ow).map(|ox| src[base + ox * s.stride]));
                        }
                    }
                }
            }
        }
    }
    debug_assert_eq!(cols.len(), s.rows() * s.cols());
    cols
}

/// Adjoint of [`im2col`], accumulating into `x`.
pub(crate) fn col2im<T: Scalar>(cols: &[T], s: &Sweep, x: &mut [T]) {
    let ncols = s.cols();
    let plane = s.hp * s.wp;
    for ci in 0..s.c {
        for ki in 0..s.k {
            for kj in 0..s.k {
                let row = (ci * s.k + ki) * s.k + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for ni in 0..s.n {
                    let dst = &mut x[(ni * s.c + ci) * plane..(ni * s.c + ci + 1) * plane];
                    for oy in 0..s.oh {
                        let base = (oy * s.stride + ki) * s.wp + kj;
                        let row_src = &src[(ni * s.oh + oy) * s.ow..(ni * s.oh + oy + 1) * s.ow];
                        if s.stride == 1 {
                            for (d, &v) in dst[base..base + s.ow].iter_mut().zip(row_src) {
                                *d += v;
                            }
                        } else {
                            for (ox, &v) in row_src.iter().enumerate() {
                                dst[base + ox * s.stride] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolutions whose `in_channels * out_channels` is at most this run as direct
/// row sweeps instead of im2col + GEMM; the lowered matrix of such thin layers is
/// mostly memory traffic.
pub(crate) const DIRECT_MAX_CHANNEL_PRODUCT: usize = 16;

pub(crate) fn prefers_direct(in_channels: usize, out_channels: usize) -> bool {
    in_channels * out_channels <= DIRECT_MAX_CHANNEL_PRODUCT
}

/// What a convolution node keeps for its backward pass.
pub(crate) enum Lowered<T> {
    /// im2col matrix of the padded input.
    Cols(Vec<T>),
    /// The padded input itself, for the direct path.
    Padded(Vec<T>),
}

/// `out[n][o] += sum_{c,ki,kj} w[o][c][ki][kj] * xp[n][c][shifted window]`, with `out`
/// in `n x o x oh x ow` layout.
pub(crate) fn direct_forward<T: Scalar>(xp: &[T], w: &[T], s: &Sweep, o: usize, out: &mut [T]) {
    let (plane, p, k) = (s.hp * s.wp, s.oh * s.ow, s.k);
    for ni in 0..s.n {
        for oc in 0..o {
            let dst = &mut out[(ni * o + oc) * p..(ni * o + oc + 1) * p];
            for ci in 0..s.c {
                let src = &xp[(ni * s.c + ci) * plane..(ni * s.c + ci + 1) * plane];
                for ki in 0..k {
                    for kj in 0..k {
                        let wv = w[((oc * s.c + ci) * k + ki) * k + kj];
                        for oy in 0..s.oh {
                            let base = (oy * s.stride + ki) * s.wp + kj;
                            let drow = &mut dst[oy * s.ow..(oy + 1) * s.ow];
                            if s.stride == 1 {
                                for (d, &v) in drow.iter_mut().zip(&src[base..base + s.ow]) {
                                    *d += wv * v;
                                }
                            } else {
                                for (ox, d) in drow.iter_mut().enumerate() {
                                    *d += wv * src[base + ox * s.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`direct_forward`] with respect to the padded input.
pub(crate) fn direct_input_grad<T: Scalar>(g: &[T], w: &[T], s: &Sweep, o: usize, dxp: &mut [T]) {
    let (plane, p, k) = (s.hp * s.wp, s.oh * s.ow, s.k);
    for ni in 0..s.n {
        for ci in 0..s.c {
            let dst = &mut dxp[(ni * s.c + ci) * plane..(ni * s.c + ci + 1) * plane];
            for oc in 0..o {
                let gp = &g[(ni * o + oc) * p..(ni * o + oc + 1) * p];
                for ki in 0..k {
                    for kj in 0..k {
                        let wv = w[((oc * s.c + ci) * k + ki) * k + kj];
                        for oy in 0..s.oh {
                            let base = (oy * s.stride + ki) * s.wp + kj;
                            let grow = &gp[oy * s.ow..(oy + 1) * s.ow];
                            if s.stride == 1 {
                                for (d, &v) in dst[base..base + s.ow].iter_mut().zip(grow) {
                                    *d += wv * v;
                                }
                            } else {
                                for (ox, &v) in grow.iter().enumerate() {
                                    dst[base + ox * s.stride] += wv * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`direct_forward`] with respect to the kernel, accumulated into `dw`.
pub(crate) fn direct_weight_grad<T: Scalar>(g: &[T], xp: &[T], s: &Sweep, o: usize, dw: &mut [T]) {
    let (plane, p, k) = (s.hp * s.wp, s.oh * s.ow, s.k);
    for oc in 0..o {
        for ci in 0..s.c {
            for ki in 0..k {
                for kj in 0..k {
                    let mut acc = T::zero();
                    for ni in 0..s.n {
                        let src = &xp[(ni * s.c + ci) * plane..(ni * s.c + ci + 1) * plane];
                        let gp = &g[(ni * o + oc) * p..(ni * o + oc + 1) * p];
                        for oy in 0..s.oh {
                            let base = (oy * s.stride + ki) * s.wp + kj;
                            let grow = &gp[oy * s.ow..(oy + 1) * s.ow];
                            if s.stride == 1 {
                                acc += grow.iter().zip(&src[base..base + s.ow]).map(|(&a, &b)| a * b).sum::<T>();
                            } else {
                                acc += grow
                                    .iter()
                                    .enumerate()
                                    .map(|(ox, &a)| a * src[base + ox * s.stride])
                                    .sum::<T>();
                            }
                        }
                    }
                    dw[((oc * s.c + ci) * k + ki) * k + kj] += acc;
                }
            }
        }
    }
}

/// `[n][c][p]` -> `[c][n][p]`.
pub(crate) fn batch_major_to_channel_major<T: Copy>(x: &[T], n: usize, c: usize, p: usize, out: &mut [T]) {
    for ni in 0..n {
        for ci in 0..c {
            out[(ci * n + ni) * p..(ci * n + ni + 1) * p].copy_from_slice(&x[(ni * c + ci) * p..(ni * c + ci + 1) * p]);
        }
    }
}

/// `[c][n][p]` -> `[n][c][p]`.
pub(crate) fn channel_major_to_batch_major<T: Copy>(x: &[T], n: usize, c: usize, p: usize, out: &mut [T]) {
    for ci in 0..c {
        for ni in 0..n {
            out[(ni * c + ci) * p..(ni * c + ci + 1) * p].copy_from_slice(&x[(ci * n + ni) * p..(ci * n + ni + 1) * p]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_matches_pytorch_layout() {
        // ReflectionPad2d(1) on [[1,2,3],[4,5,6]] (rows) -> first padded row is row 1 reflected
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let p = pad_planes(&x, 1, 2, 3, Padding::Reflection(1)).unwrap();
        assert_eq!(&p[0..5], &[5.0, 4.0, 5.0, 6.0, 5.0]);
        assert_eq!(&p[5..10], &[2.0, 1.0, 2.0, 3.0, 2.0]);
        assert!(pad_planes(&x, 1, 2, 3, Padding::Reflection(2)).is_err());
    }

    #[test]
    fn unpad_is_adjoint_of_pad() {
        let (h, w) = (4, 5);
        let x: Vec<f64> = (0..h * w).map(|v| (v as f64 * 0.37).sin()).collect();
        for padding in [Padding::Zero(2), Padding::Reflection(2), Padding::None] {
            let px = pad_planes(&x, 1, h, w, padding).unwrap();
            let y: Vec<f64> = (0..px.len()).map(|v| (v as f64 * 0.91).cos()).collect();
            let mut aty = vec![0.0; h * w];
            unpad_planes(&y, 1, h, w, padding, &mut aty);
            let lhs: f64 = px.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_path_matches_lowered_path() {
        use crate::scalar::{matmul, MatRef};
        for stride in [1, 2] {
            let (n, c, o, k) = (2, 3, 2, 3);
            let (hp, wp) = (7, 8);
            let s = Sweep {
                n,
                c,
                hp,
                wp,
                k,
                stride,
                oh: sweep_len(hp, k, stride).unwrap(),
                ow: sweep_len(wp, k, stride).unwrap(),
            };
            let p = s.oh * s.ow;
            let xp: Vec<f64> = (0..n * c * hp * wp).map(|v| (v as f64 * 0.71).sin()).collect();
            let w: Vec<f64> = (0..o * c * k * k).map(|v| (v as f64 * 0.37).cos()).collect();
            let g: Vec<f64> = (0..n * o * p).map(|v| (v as f64 * 0.53).sin()).collect();

            let cols = im2col(&xp, &s);
            let mut want_cm = vec![0.0; o * n * p];
            matmul(MatRef::new(&w, o, s.rows()), MatRef::new(&cols, s.rows(), s.cols()), 0.0, &mut want_cm);
            let mut want = vec![0.0; want_cm.len()];
            channel_major_to_batch_major(&want_cm, n, o, p, &mut want);
            let mut got = vec![0.0; want.len()];
            direct_forward(&xp, &w, &s, o, &mut got);
            assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));

            let mut g_cm = vec![0.0; g.len()];
            batch_major_to_channel_major(&g, n, o, p, &mut g_cm);
            let mut want_dw = vec![0.0; w.len()];
            matmul(MatRef::new(&g_cm, o, n * p), MatRef::new(&cols, s.rows(), s.cols()).t(), 0.0, &mut want_dw);
            let mut dw = vec![0.0; w.len()];
            direct_weight_grad(&g, &xp, &s, o, &mut dw);
            assert!(dw.iter().zip(&want_dw).all(|(a, b)| (a - b).abs() < 1e-12));

            let mut dcols = vec![0.0; cols.len()];
            matmul(MatRef::new(&w, o, s.rows()).t(), MatRef::new(&g_cm, o, n * p), 0.0, &mut dcols);
            let mut want_dx = vec![0.0; xp.len()];
            col2im(&dcols, &s, &mut want_dx);
            let mut dx = vec![0.0; xp.len()];
            direct_input_grad(&g, &w, &s, o, &mut dx);
            assert!(dx.iter().zip(&want_dx).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let s = Sweep {
            n: 2,
            c: 3,
            hp: 7,
            wp: 6,
            k: 3,
            stride: 2,
            oh: 3,
            ow: 2,
        };
        let x: Vec<f64> = (0..2 * 3 * 7 * 6).map(|v| (v as f64 * 0.13).sin()).collect();
        let cols = im2col(&x, &s);
        let y: Vec<f64> = (0..cols.len()).map(|v| (v as f64 * 0.29).cos()).collect();
        let mut aty = vec![0.0; x.len()];
        col2im(&y, &s, &mut aty);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
