//! Dense NCHW tensors and the handful of kernels the network needs:
//! same-padded grouped convolution (forward and both backward passes),
//! ReLU, elementwise add, and depth-to-space.
//!
//! Stride is always 1 and borders are zero-filled, so every convolution keeps
//! the spatial size of its input.

use std::fmt;

use rayon::prelude::*;

use crate::error::{contract_err, shape_err, Result};
use crate::scalar::Scalar;

/// Tensor dimensions in (batch, channels, height, width) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Self { batch, channels, height, width }
    }

    pub const fn len(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub const fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.batch, self.channels, self.height, self.width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.batch == 0 || shape.channels == 0 || shape.height == 0 || shape.width == 0 {
            return Err(shape_err!("all tensor dims must be >= 1, got {shape}"));
        }
        if data.len() != shape.len() {
            return Err(shape_err!("tensor {shape} needs {} elements, got {}", shape.len(), data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        assert!(!shape.is_empty(), "tensor dims must be >= 1");
        Self { shape, data: vec![value; shape.len()] }
    }

    /// A single-image, single-channel plane.
    pub fn plane(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        Self::new(Shape::new(1, 1, height, width), data)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..shape.batch {
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        data.push(f(b, c, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        let s = &self.shape;
        ((b * s.channels + c) * s.height + y) * s.width + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(b, c, y, x);
        self.data[i] = v;
    }

    /// The `(b, c)` channel plane as a row-major slice.
    pub fn channel(&self, b: usize, c: usize) -> &[T] {
        let n = self.shape.plane_len();
        let start = (b * self.shape.channels + c) * n;
        &self.data[start..start + n]
    }

    /// Splits a batched tensor into its images.
    pub fn unbatch(&self) -> Vec<Tensor<T>> {
        let s = self.shape;
        let per = s.channels * s.plane_len();
        self.data
            .chunks(per)
            .map(|d| Tensor { shape: Shape::new(1, s.channels, s.height, s.width), data: d.to_vec() })
            .collect()
    }

    /// Stacks same-shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| contract_err!("cannot stack zero tensors"))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.len() * items.len());
        let mut batch = 0;
        for t in items {
            let ts = t.shape;
            if (ts.channels, ts.height, ts.width) != (s.channels, s.height, s.width) {
                return Err(shape_err!("cannot stack {ts} with {s}"));
            }
            batch += ts.batch;
            data.extend_from_slice(&t.data);
        }
        Self::new(Shape::new(batch, s.channels, s.height, s.width), data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<T> {
        check_same(self, other)?;
        Ok(self.data.iter().zip(&other.data).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())))
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }
}

fn check_same<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape != b.shape {
        return Err(shape_err!("shape mismatch: {} vs {}", a.shape, b.shape));
    }
    Ok(())
}

/// Kernels and biases of one (possibly grouped) convolution.
///
/// `kernels` is laid out `[out][in_per_group][ky][kx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights<T> {
    pub out_channels: usize,
    pub in_per_group: usize,
    pub kernel: usize,
    pub groups: usize,
    pub kernels: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvWeights<T> {
    pub fn new(
        out_channels: usize,
        in_per_group: usize,
        kernel: usize,
        groups: usize,
        kernels: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if out_channels == 0 || in_per_group == 0 || groups == 0 {
            return Err(shape_err!("conv channels and groups must be >= 1"));
        }
        if kernel.is_multiple_of(2) {
            return Err(shape_err!("conv kernel size must be odd, got {kernel}"));
        }
        if !out_channels.is_multiple_of(groups) {
            return Err(shape_err!("groups {groups} must divide out_channels {out_channels}"));
        }
        let want = out_channels * in_per_group * kernel * kernel;
        if kernels.len() != want {
            return Err(shape_err!("conv kernels need {want} values, got {}", kernels.len()));
        }
        if bias.len() != out_channels {
            return Err(shape_err!("conv bias needs {out_channels} values, got {}", bias.len()));
        }
        Ok(Self { out_channels, in_per_group, kernel, groups, kernels, bias })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize, groups: usize) -> Self {
        let in_per_group = in_channels / groups;
        Self::new(
            out_channels,
            in_per_group,
            kernel,
            groups,
            vec![T::zero(); out_channels * in_per_group * kernel * kernel],
            vec![T::zero(); out_channels],
        )
        .expect("zeros() called with a valid conv geometry")
    }

    pub fn in_channels(&self) -> usize {
        self.in_per_group * self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn taps(&self) -> usize {
        self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }

    pub fn same_geometry(&self, other: &ConvWeights<T>) -> bool {
        self.out_channels == other.out_channels
            && self.in_per_group == other.in_per_group
            && self.kernel == other.kernel
            && self.groups == other.groups
    }

    #[inline]
    pub fn kernel_slice(&self, oc: usize, icl: usize) -> &[T] {
        let t = self.taps();
        let start = (oc * self.in_per_group + icl) * t;
        &self.kernels[start..start + t]
    }

    pub fn cast<U: Scalar>(&self) -> ConvWeights<U> {
        ConvWeights {
            out_channels: self.out_channels,
            in_per_group: self.in_per_group,
            kernel: self.kernel,
            groups: self.groups,
            kernels: self.kernels.iter().map(|v| U::lit(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

fn check_conv_input<T: Scalar>(input: &Tensor<T>, w: &ConvWeights<T>) -> Result<()> {
    if input.shape.channels != w.in_channels() {
        return Err(shape_err!(
            "conv2d expects {} input channels ({} groups x {} per group), input is {}",
            w.in_channels(),
            w.groups,
            w.in_per_group,
            input.shape
        ));
    }
    Ok(())
}

/// Range of output columns `x` for which `x + k - pad` lands inside `[0, len)`.
#[inline]
fn valid_range(len: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (len + pad).saturating_sub(k).min(len);
    (lo, hi.max(lo))
}

/// Same-padded, stride-1 grouped cross-correlation.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, w: &ConvWeights<T>) -> Result<Tensor<T>> {
    check_conv_input(input, w)?;
    let s = input.shape;
    let (h, wd) = (s.height, s.width);
    let f = w.kernel;
    let pad = (f - 1) / 2;
    let m = w.out_channels;
    let opg = w.out_per_group();
    let out_shape = Shape::new(s.batch, m, h, wd);
    let mut out = vec![T::zero(); out_shape.len()];

    out.par_chunks_mut(h * wd).enumerate().for_each(|(idx, plane)| {
        let b = idx / m;
        let oc = idx % m;
        let group = oc / opg;
        plane.fill(w.bias[oc]);
        for icl in 0..w.in_per_group {
            let src = input.channel(b, group * w.in_per_group + icl);
            let k = w.kernel_slice(oc, icl);
            for ky in 0..f {
                let (y0, y1) = valid_range(h, ky, pad);
                for kx in 0..f {
                    let wv = k[ky * f + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let (x0, x1) = valid_range(wd, kx, pad);
                    for y in y0..y1 {
                        let sy = y + ky - pad;
                        let src_row = &src[sy * wd + x0 + kx - pad..sy * wd + x1 + kx - pad];
                        let dst_row = &mut plane[y * wd + x0..y * wd + x1];
                        for (d, &v) in dst_row.iter_mut().zip(src_row) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    });
    Tensor::new(out_shape, out)
}

/// Gradient of [`conv2d`] with respect to its input.
pub fn conv2d_backward_input<T: Scalar>(grad_out: &Tensor<T>, w: &ConvWeights<T>) -> Result<Tensor<T>> {
    let s = grad_out.shape;
    if s.channels != w.out_channels {
        return Err(shape_err!("conv2d backward: gradient {} does not match {} output channels", s, w.out_channels));
    }
    let (h, wd) = (s.height, s.width);
    let f = w.kernel;
    let pad = (f - 1) / 2;
    let n = w.in_channels();
    let opg = w.out_per_group();
    let in_shape = Shape::new(s.batch, n, h, wd);
    let mut grad_in = vec![T::zero(); in_shape.len()];

    grad_in.par_chunks_mut(h * wd).enumerate().for_each(|(idx, plane)| {
        let b = idx / n;
        let ic = idx % n;
        let group = ic / w.in_per_group;
        let icl = ic % w.in_per_group;
        for oc in group * opg..(group + 1) * opg {
            let g = grad_out.channel(b, oc);
            let k = w.kernel_slice(oc, icl);
            for ky in 0..f {
                let (y0, y1) = valid_range(h, ky, pad);
                for kx in 0..f {
                    let wv = k[ky * f + kx];
                    let (x0, x1) = valid_range(wd, kx, pad);
                    for y in y0..y1 {
                        let sy = y + ky - pad;
                        let g_row = &g[y * wd + x0..y * wd + x1];
                        let dst = &mut plane[sy * wd + x0 + kx - pad..sy * wd + x1 + kx - pad];
                        for (d, &gv) in dst.iter_mut().zip(g_row) {
                            *d += wv * gv;
                        }
                    }
                }
            }
        }
    });
    Tensor::new(in_shape, grad_in)
}

/// Gradient of [`conv2d`] with respect to its kernels and biases, summed over
/// the batch. The result has the same geometry as `w`.
pub fn conv2d_backward_weights<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    w: &ConvWeights<T>,
) -> Result<ConvWeights<T>> {
    check_conv_input(input, w)?;
    let s = input.shape;
    let gs = grad_out.shape;
    if gs != Shape::new(s.batch, w.out_channels, s.height, s.width) {
        return Err(shape_err!("conv2d backward: gradient {gs} does not match input {s}"));
    }
    let (h, wd) = (s.height, s.width);
    let f = w.kernel;
    let pad = (f - 1) / 2;
    let opg = w.out_per_group();
    let per_oc = w.in_per_group * f * f;
    let mut kernels = vec![T::zero(); w.kernels.len()];

    kernels.par_chunks_mut(per_oc).enumerate().for_each(|(oc, kgrad)| {
        let group = oc / opg;
        for b in 0..s.batch {
            let g = grad_out.channel(b, oc);
            for icl in 0..w.in_per_group {
                let src = input.channel(b, group * w.in_per_group + icl);
                for ky in 0..f {
                    let (y0, y1) = valid_range(h, ky, pad);
                    for kx in 0..f {
                        let (x0, x1) = valid_range(wd, kx, pad);
                        let mut acc = T::zero();
                        for y in y0..y1 {
                            let sy = y + ky - pad;
                            let g_row = &g[y * wd + x0..y * wd + x1];
                            let s_row = &src[sy * wd + x0 + kx - pad..sy * wd + x1 + kx - pad];
                            for (&gv, &sv) in g_row.iter().zip(s_row) {
                                acc += gv * sv;
                            }
                        }
                        kgrad[(icl * f + ky) * f + kx] += acc;
                    }
                }
            }
        }
    });

    let bias = (0..w.out_channels)
        .map(|oc| (0..s.batch).map(|b| grad_out.channel(b, oc).iter().copied().sum::<T>()).sum())
        .collect();
    ConvWeights::new(w.out_channels, w.in_per_group, f, w.groups, kernels, bias)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Passes `grad` where the forward activation was positive.
pub fn relu_backward<T: Scalar>(activation: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    check_same(activation, grad)?;
    let data =
        activation.data.iter().zip(&grad.data).map(|(&a, &g)| if a > T::zero() { g } else { T::zero() }).collect();
    Tensor::new(grad.shape, data)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same(a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape, data)
}

/// Adds a single-channel tensor to every channel of `a`.
pub fn add_broadcast<T: Scalar>(a: &Tensor<T>, plane: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sp) = (a.shape, plane.shape);
    if sp.channels != 1 || (sa.batch, sa.height, sa.width) != (sp.batch, sp.height, sp.width) {
        return Err(shape_err!("cannot broadcast {sp} over {sa}"));
    }
    let n = sa.plane_len();
    let mut out = a.clone();
    for (i, chunk) in out.data.chunks_mut(n).enumerate() {
        let src = plane.channel(i / sa.channels, 0);
        for (d, &v) in chunk.iter_mut().zip(src) {
            *d += v;
        }
    }
    Ok(out)
}

/// Sums all channels into one; the adjoint of [`add_broadcast`]'s plane input.
pub fn sum_channels<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let s = a.shape;
    Tensor::from_fn(Shape::new(s.batch, 1, s.height, s.width), |b, _, y, x| {
        (0..s.channels).map(|c| a.at(b, c, y, x)).sum()
    })
}

/// Rearranges `r*r` channels into an `r`-times larger plane. Output pixel
/// `(y, x)` of channel `c` reads input channel `c*r*r + (y % r)*r + x % r` at
/// `(y / r, x / r)`.
pub fn depth_to_space<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = input.shape;
    if r == 0 || !s.channels.is_multiple_of(r * r) {
        return Err(shape_err!("depth_to_space: {} channels not divisible by {r}^2", s.channels));
    }
    let out_shape = Shape::new(s.batch, s.channels / (r * r), s.height * r, s.width * r);
    Ok(Tensor::from_fn(out_shape, |b, c, y, x| input.at(b, c * r * r + (y % r) * r + x % r, y / r, x / r)))
}

/// Inverse of [`depth_to_space`] (and, being a permutation, also its adjoint).
pub fn space_to_depth<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = input.shape;
    if r == 0 || !s.height.is_multiple_of(r) || !s.width.is_multiple_of(r) {
        return Err(shape_err!("space_to_depth: {s} not divisible by block {r}"));
    }
    let out_shape = Shape::new(s.batch, s.channels * r * r, s.height / r, s.width / r);
    Ok(Tensor::from_fn(out_shape, |b, c, y, x| {
        let (base, phase) = (c / (r * r), c % (r * r));
        input.at(b, base, y * r + phase / r, x * r + phase % r)
    }))
}
