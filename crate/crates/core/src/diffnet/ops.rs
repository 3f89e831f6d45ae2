//! Forward evaluation and backward rules of every node type.

use std::sync::Arc;

use super::conv::{
    batch_major_to_channel_major, channel_major_to_batch_major, col2im, direct_forward, direct_input_grad,
    direct_weight_grad, im2col, pad_planes, prefers_direct, sweep_len, unpad_planes, Lowered, Padding, Sweep,
};
use super::tape::{Activation, ConvSaved, ConvTransposeSaved, GradSink, Node, NormSaved, Op, Reduction, Tape, Var};
use super::tensor::dims4;
use crate::error::{invalid, Error, Result};
use crate::scalar::{matmul, MatRef, Scalar};
use crate::spectral::SpectralFilter;

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl<T: Scalar> Tape<T> {
    /// Cross-correlation of an `N x C x H x W` input with an `O x C x k x k` kernel.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: Padding) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(input))?;
        let (o, k) = match *self.shape(weight) {
            [o, wc, k, k2] if wc == c && k == k2 => (o, k),
            _ => return Err(mismatch("conv2d input/kernel", self.shape(input), self.shape(weight))),
        };
        if self.shape(bias) != [o] {
            return Err(mismatch("conv2d kernel/bias", self.shape(weight), self.shape(bias)));
        }
        let pad = padding.amount();
        let (hp, wp) = (h + 2 * pad, w + 2 * pad);
        let sweep = Sweep {
            n,
            c,
            hp,
            wp,
            k,
            stride,
            oh: sweep_len(hp, k, stride)?,
            ow: sweep_len(wp, k, stride)?,
        };
        let padded = pad_planes(self.value(input), n * c, h, w, padding)?;
        let p = sweep.oh * sweep.ow;
        let mut out = vec![T::zero(); n * o * p];
        let lowered = if prefers_direct(c, o) {
            direct_forward(&padded, self.value(weight), &sweep, o, &mut out);
            Lowered::Padded(padded)
        } else {
            let cols = im2col(&padded, &sweep);
            let mut out_cm = vec![T::zero(); o * n * p];
            matmul(
                MatRef::new(self.value(weight), o, sweep.rows()),
                MatRef::new(&cols, sweep.rows(), sweep.cols()),
                T::zero(),
                &mut out_cm,
            );
            channel_major_to_batch_major(&out_cm, n, o, p, &mut out);
            Lowered::Cols(cols)
        };
        let b = self.value(bias);
        for (i, plane) in out.chunks_exact_mut(p).enumerate() {
            let bo = b[i % o];
            plane.iter_mut().for_each(|v| *v += bo);
        }
        let saved = ConvSaved {
            input,
            weight,
            bias,
            padding,
            sweep,
            in_dims: [n, c, h, w],
            out_channels: o,
            lowered,
        };
        Ok(self.push(vec![n, o, sweep.oh, sweep.ow], out, Op::Conv(saved), &[input, weight, bias]))
    }

    /// Transposed convolution with a `C_in x C_out x k x k` kernel. Output extent is
    /// `(H - 1) * stride - 2 * padding + k + output_padding`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let [n, cin, h, w] = dims4(self.shape(input))?;
        let (cout, k) = match *self.shape(weight) {
            [wc, co, k, k2] if wc == cin && k == k2 => (co, k),
            _ => {
                return Err(mismatch(
                    "conv_transpose2d input/kernel",
                    self.shape(input),
                    self.shape(weight),
                ))
            }
        };
        if self.shape(bias) != [cout] {
            return Err(mismatch("conv_transpose2d kernel/bias", self.shape(weight), self.shape(bias)));
        }
        if stride == 0 || output_padding >= stride.max(1) {
            return Err(invalid(format!(
                "conv_transpose2d needs stride > output_padding, got {stride} and {output_padding}"
            )));
        }
        let span_h = (h - 1) * stride + k;
        let span_w = (w - 1) * stride + k;
        if span_h + output_padding <= 2 * padding || span_w + output_padding <= 2 * padding {
            return Err(invalid("conv_transpose2d padding leaves an empty output"));
        }
        let hout = span_h + output_padding - 2 * padding;
        let wout = span_w + output_padding - 2 * padding;
        let sweep = Sweep {
            n,
            c: cout,
            hp: span_h.max(padding + hout),
            wp: span_w.max(padding + wout),
            k,
            stride,
            oh: h,
            ow: w,
        };
        let hw = h * w;
        let mut xmat = vec![T::zero(); n * cin * hw];
        batch_major_to_channel_major(self.value(input), n, cin, hw, &mut xmat);
        let mut cols = vec![T::zero(); sweep.rows() * sweep.cols()];
        matmul(
            MatRef::new(self.value(weight), cin, sweep.rows()).t(),
            MatRef::new(&xmat, cin, n * hw),
            T::zero(),
            &mut cols,
        );
        let mut full = vec![T::zero(); n * cout * sweep.hp * sweep.wp];
        col2im(&cols, &sweep, &mut full);
        let b = self.value(bias);
        let mut out = Vec::with_capacity(n * cout * hout * wout);
        for plane in 0..n * cout {
            let src = &full[plane * sweep.hp * sweep.wp..];
            let bo = b[plane % cout];
            for r in 0..hout {
                let row = &src[(r + padding) * sweep.wp + padding..][..wout];
                out.extend(row.iter().map(|&v| v + bo));
            }
        }
        let saved = ConvTransposeSaved {
            input,
            weight,
            bias,
            crop: padding,
            sweep,
            in_dims: [n, cin, h, w],
            out_dims: [n, cout, hout, wout],
        };
        Ok(self.push(
            vec![n, cout, hout, wout],
            out,
            Op::ConvTranspose(saved),
            &[input, weight, bias],
        ))
    }

    /// Per-sample, per-channel standardization followed by a per-channel affine map.
    pub fn instance_norm(&mut self, input: Var, gain: Var, shift: Var, epsilon: f64) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(input))?;
        if self.shape(gain) != [c] || self.shape(shift) != [c] {
            return Err(mismatch("instance_norm affine", self.shape(input), self.shape(gain)));
        }
        let m = h * w;
        let eps = T::of(epsilon);
        let inv_m = T::one() / T::of(m as f64);
        let x = self.value(input);
        let (g, b) = (self.value(gain), self.value(shift));
        let mut normalized = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); n * c];
        let mut out = vec![T::zero(); x.len()];
        for plane in 0..n * c {
            let xs = &x[plane * m..(plane + 1) * m];
            let mean = xs.iter().copied().sum::<T>() * inv_m;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_m;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[plane] = inv;
            let (gc, bc) = (g[plane % c], b[plane % c]);
            for i in 0..m {
                let xh = (xs[i] - mean) * inv;
                normalized[plane * m + i] = xh;
                out[plane * m + i] = gc * xh + bc;
            }
        }
        let saved = NormSaved {
            input,
            gain,
            shift,
            normalized,
            inv_std,
        };
        Ok(self.push(vec![n, c, h, w], out, Op::InstanceNorm(saved), &[input, gain, shift]))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let x = self.value(input);
        let out: Vec<T> = match kind {
            Activation::Relu => x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
            Activation::LeakyRelu(slope) => {
                let s = T::of(slope);
                x.iter().map(|&v| if v > T::zero() { v } else { s * v }).collect()
            }
            Activation::Tanh => x.iter().map(|v| v.tanh()).collect(),
            Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Abs => x.iter().map(|v| v.abs()).collect(),
        };
        if matches!(kind, Activation::Relu | Activation::LeakyRelu(_) | Activation::Abs) && self.kink_signature().is_some() {
            let bits: Vec<bool> = self.value(input).iter().map(|&v| v > T::zero()).collect();
            self.note_kinks(bits.into_iter());
        }
        let shape = self.shape(input).to_vec();
        self.push(shape, out, Op::Activation { input, kind }, &[input])
    }

    /// Real spectral filtering of every `H x W` plane. The filter's transfer grid is
    /// center-symmetric, so the node is self-adjoint and reuses itself for gradients.
    pub fn spectral_filter(&mut self, input: Var, filter: &Arc<SpectralFilter<T>>) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(input))?;
        if h != filter.height() || w != filter.width() {
            return Err(mismatch(
                "spectral filter",
                self.shape(input),
                &[filter.height(), filter.width()],
            ));
        }
        let mut out = vec![T::zero(); n * c * h * w];
        filter.apply_planes(self.value(input), &mut out)?;
        Ok(self.push(
            vec![n, c, h, w],
            out,
            Op::Spectral {
                input,
                filter: Arc::clone(filter),
            },
            &[input],
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, self.shape(a), self.shape(b)));
        }
        Ok(self.shape(a).to_vec())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        Ok(self.push(shape, out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x - y).collect();
        Ok(self.push(shape, out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.push(shape, out, Op::Mul(a, b), &[a, b]))
    }

    /// `scale * x + offset`.
    pub fn affine(&mut self, input: Var, scale: T, offset: T) -> Var {
        let out = self.value(input).iter().map(|&v| scale * v + offset).collect();
        let shape = self.shape(input).to_vec();
        self.push(shape, out, Op::Affine { input, scale }, &[input])
    }

    pub fn scale(&mut self, input: Var, scale: T) -> Var {
        self.affine(input, scale, T::zero())
    }

    /// Stacks tensors along the leading (batch) axis.
    pub fn concat_batch(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| invalid("concat of nothing"))?;
        let tail = self.shape(first).get(1..).unwrap_or(&[]).to_vec();
        let mut batch = 0;
        let mut out = Vec::new();
        for &v in inputs {
            let s = self.shape(v);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(mismatch("concat_batch", self.shape(first), s));
            }
            batch += s[0];
            out.extend_from_slice(self.value(v));
        }
        let mut shape = vec![batch];
        shape.extend(tail);
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
            },
            inputs,
        ))
    }

    /// Samples `start..start + len` along the leading axis.
    pub fn slice_batch(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if shape.is_empty() || len == 0 || start + len > shape[0] {
            return Err(invalid(format!(
                "batch slice {start}..{} out of range for shape {shape:?}",
                start + len
            )));
        }
        let per: usize = shape[1..].iter().product();
        let out = self.value(input)[start * per..(start + len) * per].to_vec();
        let mut new_shape = shape;
        new_shape[0] = len;
        Ok(self.push(
            new_shape,
            out,
            Op::Slice {
                input,
                offset: start * per,
            },
            &[input],
        ))
    }

    /// Average over the spatial axes: `N x C x H x W -> N x C x 1 x 1`.
    pub fn spatial_mean(&mut self, input: Var) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(input))?;
        let inv = T::one() / T::of((h * w) as f64);
        let out = self
            .value(input)
            .chunks_exact(h * w)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(self.push(vec![n, c, 1, 1], out, Op::SpatialMean { input }, &[input]))
    }

    pub fn reduce(&mut self, input: Var, kind: Reduction) -> Var {
        let x = self.value(input);
        let inv_n = T::one() / T::of(x.len() as f64);
        let value = match kind {
            Reduction::Sum => x.iter().copied().sum::<T>(),
            Reduction::Mean => x.iter().copied().sum::<T>() * inv_n,
            Reduction::MeanAbs => x.iter().map(|v| v.abs()).sum::<T>() * inv_n,
            Reduction::MeanSquare => x.iter().map(|&v| v * v).sum::<T>() * inv_n,
            Reduction::LogClamped(eps) => {
                let eps = T::of(eps);
                x.iter().map(|&v| v.max(eps).ln()).sum::<T>() * inv_n
            }
        };
        if self.kink_signature().is_some() {
            let bits: Option<Vec<bool>> = match kind {
                Reduction::MeanAbs => Some(x.iter().map(|&v| v > T::zero()).collect()),
                Reduction::LogClamped(eps) => Some(x.iter().map(|&v| v > T::of(eps)).collect()),
                _ => None,
            };
            if let Some(bits) = bits {
                self.note_kinks(bits.into_iter());
            }
        }
        self.push(Vec::new(), vec![value], Op::Reduce { input, kind }, &[input])
    }

    pub fn sum(&mut self, input: Var) -> Var {
        self.reduce(input, Reduction::Sum)
    }

    pub fn mean(&mut self, input: Var) -> Var {
        self.reduce(input, Reduction::Mean)
    }

    pub fn mean_abs(&mut self, input: Var) -> Var {
        self.reduce(input, Reduction::MeanAbs)
    }

    pub fn mean_square(&mut self, input: Var) -> Var {
        self.reduce(input, Reduction::MeanSquare)
    }

    pub fn log_clamped(&mut self, input: Var, eps: f64) -> Var {
        self.reduce(input, Reduction::LogClamped(eps))
    }

    /// `mean |a - b|`.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        Ok(self.mean_abs(d))
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn backward_node<T: Scalar>(node: &Node<T>, g: &[T], sink: &mut GradSink<'_, T>) {
    match &node.op {
        Op::Leaf => unreachable!("leaves are handled by the tape"),
        Op::Conv(s) => conv_backward(s, g, sink),
        Op::ConvTranspose(s) => conv_transpose_backward(s, g, sink),
        Op::InstanceNorm(s) => norm_backward(s, g, sink),
        Op::Activation { input, kind } => {
            if !sink.wants(*input) {
                return;
            }
            let x = sink.value(*input);
            let y = &node.value;
            let dx: Vec<T> = match *kind {
                Activation::Relu => x
                    .iter()
                    .zip(g)
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect(),
                Activation::LeakyRelu(slope) => {
                    let s = T::of(slope);
                    x.iter().zip(g).map(|(&v, &d)| if v > T::zero() { d } else { s * d }).collect()
                }
                Activation::Tanh => y.iter().zip(g).map(|(&t, &d)| d * (T::one() - t * t)).collect(),
                Activation::Sigmoid => y.iter().zip(g).map(|(&s, &d)| d * s * (T::one() - s)).collect(),
                Activation::Abs => x.iter().zip(g).map(|(&v, &d)| d * sign(v)).collect(),
            };
            sink.add(*input, &dx);
        }
        Op::Spectral { input, filter } => {
            if sink.wants(*input) {
                let mut dx = vec![T::zero(); g.len()];
                filter
                    .apply_planes(g, &mut dx)
                    .expect("gradient has the forward shape");
                sink.add(*input, &dx);
            }
        }
        Op::Add(a, b) => {
            sink.add(*a, g);
            sink.add(*b, g);
        }
        Op::Sub(a, b) => {
            sink.add(*a, g);
            if sink.wants(*b) {
                let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                sink.add(*b, &neg);
            }
        }
        Op::Mul(a, b) => {
            if sink.wants(*a) {
                let d: Vec<T> = g.iter().zip(sink.value(*b)).map(|(&d, &y)| d * y).collect();
                sink.add(*a, &d);
            }
            if sink.wants(*b) {
                let d: Vec<T> = g.iter().zip(sink.value(*a)).map(|(&d, &x)| d * x).collect();
                sink.add(*b, &d);
            }
        }
        Op::Affine { input, scale } => {
            if sink.wants(*input) {
                let d: Vec<T> = g.iter().map(|&v| v * *scale).collect();
                sink.add(*input, &d);
            }
        }
        Op::Concat { inputs } => {
            let mut offset = 0;
            for &v in inputs {
                let len = sink.value(v).len();
                sink.add(v, &g[offset..offset + len]);
                offset += len;
            }
        }
        Op::Slice { input, offset } => {
            if sink.wants(*input) {
                let buf = sink.buf(*input);
                buf[*offset..*offset + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, &b)| *a += b);
            }
        }
        Op::SpatialMean { input } => {
            if sink.wants(*input) {
                let m = sink.value(*input).len() / g.len();
                let inv = T::one() / T::of(m as f64);
                let buf = sink.buf(*input);
                for (plane, &d) in buf.chunks_exact_mut(m).zip(g) {
                    plane.iter_mut().for_each(|v| *v += d * inv);
                }
            }
        }
        Op::Reduce { input, kind } => {
            if !sink.wants(*input) {
                return;
            }
            let x = sink.value(*input);
            let d = g[0];
            let inv_n = T::one() / T::of(x.len() as f64);
            let dx: Vec<T> = match *kind {
                Reduction::Sum => vec![d; x.len()],
                Reduction::Mean => vec![d * inv_n; x.len()],
                Reduction::MeanAbs => x.iter().map(|&v| d * inv_n * sign(v)).collect(),
                Reduction::MeanSquare => x.iter().map(|&v| d * inv_n * T::of(2.0) * v).collect(),
                Reduction::LogClamped(eps) => {
                    let eps = T::of(eps);
                    x.iter()
                        .map(|&v| if v > eps { d * inv_n / v } else { T::zero() })
                        .collect()
                }
            };
            sink.add(*input, &dx);
        }
    }
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn conv_backward<T: Scalar>(s: &ConvSaved<T>, g: &[T], sink: &mut GradSink<'_, T>) {
    let [n, c, h, w] = s.in_dims;
    let o = s.out_channels;
    let sw = &s.sweep;
    let p = sw.oh * sw.ow;
    if sink.wants(s.bias) {
        let db = sink.buf(s.bias);
        for (plane, chunk) in g.chunks_exact(p).enumerate() {
            db[plane % o] += chunk.iter().copied().sum::<T>();
        }
    }
    match &s.lowered {
        Lowered::Padded(xp) => {
            if sink.wants(s.weight) {
                direct_weight_grad(g, xp, sw, o, sink.buf(s.weight));
            }
            if sink.wants(s.input) {
                let mut dpadded = vec![T::zero(); n * c * sw.hp * sw.wp];
                direct_input_grad(g, sink.value(s.weight), sw, o, &mut dpadded);
                unpad_planes(&dpadded, n * c, h, w, s.padding, sink.buf(s.input));
            }
        }
        Lowered::Cols(cols) => {
            if !sink.wants(s.weight) && !sink.wants(s.input) {
                return;
            }
            let mut g_cm = vec![T::zero(); g.len()];
            batch_major_to_channel_major(g, n, o, p, &mut g_cm);
            if sink.wants(s.weight) {
                let dw = sink.buf(s.weight);
                matmul(
                    MatRef::new(&g_cm, o, n * p),
                    MatRef::new(cols, sw.rows(), sw.cols()).t(),
                    T::one(),
                    dw,
                );
            }
            if sink.wants(s.input) {
                let weight = sink.value(s.weight);
                let mut dcols = vec![T::zero(); sw.rows() * sw.cols()];
                matmul(
                    MatRef::new(weight, o, sw.rows()).t(),
                    MatRef::new(&g_cm, o, n * p),
                    T::zero(),
                    &mut dcols,
                );
                let mut dpadded = vec![T::zero(); n * c * sw.hp * sw.wp];
                col2im(&dcols, sw, &mut dpadded);
                unpad_planes(&dpadded, n * c, h, w, s.padding, sink.buf(s.input));
            }
        }
    }
}

fn conv_transpose_backward<T: Scalar>(s: &ConvTransposeSaved, g: &[T], sink: &mut GradSink<'_, T>) {
    let [n, cin, h, w] = s.in_dims;
    let [_, cout, hout, wout] = s.out_dims;
    let sw = &s.sweep;
    let hw = h * w;
    if sink.wants(s.bias) {
        let db = sink.buf(s.bias);
        for (plane, chunk) in g.chunks_exact(hout * wout).enumerate() {
            db[plane % cout] += chunk.iter().copied().sum::<T>();
        }
    }
    let want_w = sink.wants(s.weight);
    let want_x = sink.wants(s.input);
    if !want_w && !want_x {
        return;
    }
    let mut gfull = vec![T::zero(); n * cout * sw.hp * sw.wp];
    for plane in 0..n * cout {
        for r in 0..hout {
            let dst = &mut gfull[plane * sw.hp * sw.wp + (r + s.crop) * sw.wp + s.crop..][..wout];
            dst.copy_from_slice(&g[(plane * hout + r) * wout..][..wout]);
        }
    }
    let dcols = im2col(&gfull, sw);
    if want_w {
        let mut xmat = vec![T::zero(); n * cin * hw];
        batch_major_to_channel_major(sink.value(s.input), n, cin, hw, &mut xmat);
        let dw = sink.buf(s.weight);
        matmul(
            MatRef::new(&xmat, cin, n * hw),
            MatRef::new(&dcols, sw.rows(), sw.cols()).t(),
            T::one(),
            dw,
        );
    }
    if want_x {
        let weight = sink.value(s.weight);
        let mut dx_cm = vec![T::zero(); cin * n * hw];
        matmul(
            MatRef::new(weight, cin, sw.rows()),
            MatRef::new(&dcols, sw.rows(), sw.cols()),
            T::zero(),
            &mut dx_cm,
        );
        let mut dx = vec![T::zero(); dx_cm.len()];
        channel_major_to_batch_major(&dx_cm, n, cin, hw, &mut dx);
        sink.add(s.input, &dx);
    }
}

fn norm_backward<T: Scalar>(s: &NormSaved<T>, g: &[T], sink: &mut GradSink<'_, T>) {
    let c = sink.value(s.gain).len();
    let planes = s.inv_std.len();
    let m = g.len() / planes;
    if sink.wants(s.gain) || sink.wants(s.shift) {
        let mut dgain = vec![T::zero(); c];
        let mut dshift = vec![T::zero(); c];
        for plane in 0..planes {
            let gs = &g[plane * m..(plane + 1) * m];
            let xh = &s.normalized[plane * m..(plane + 1) * m];
            dgain[plane % c] += gs.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
            dshift[plane % c] += gs.iter().copied().sum::<T>();
        }
        sink.add(s.gain, &dgain);
        sink.add(s.shift, &dshift);
    }
    if sink.wants(s.input) {
        let gain = sink.value(s.gain);
        let mf = T::of(m as f64);
        let mut dx = vec![T::zero(); g.len()];
        for plane in 0..planes {
            let gc = gain[plane % c];
            let gs = &g[plane * m..(plane + 1) * m];
            let xh = &s.normalized[plane * m..(plane + 1) * m];
            let sum_d = gs.iter().copied().sum::<T>() * gc;
            let sum_dx = gs.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() * gc;
            let k = s.inv_std[plane] / mf;
            for i in 0..m {
                dx[plane * m + i] = k * (mf * gs[i] * gc - sum_d - xh[i] * sum_dx);
            }
        }
        sink.add(s.input, &dx);
    }
}
