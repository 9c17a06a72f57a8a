//! Separable plane resampling with half-pixel-centre coordinates.
//!
//! Output sample `d` maps to source position `(d + 0.5) * in / out - 0.5`;
//! taps outside the plane are clamped to the edge and each output's weights
//! are normalised to sum to one. Kernels are not widened when shrinking:
//! these are interpolators for upscaling.

use std::f64::consts::PI;

use crate::error::{contract_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Filter {
    Nearest,
    Bilinear,
    /// Cubic convolution with free parameter `a` (-0.5 is Catmull-Rom).
    Bicubic {
        a: f64,
    },
    /// Windowed sinc with `lobes` lobes on each side.
    Lanczos {
        lobes: usize,
    },
}

impl Filter {
    pub const CATMULL_ROM: Filter = Filter::Bicubic { a: -0.5 };
    pub const LANCZOS3: Filter = Filter::Lanczos { lobes: 3 };

    pub fn support(&self) -> f64 {
        match *self {
            Filter::Nearest => 0.5,
            Filter::Bilinear => 1.0,
            Filter::Bicubic { .. } => 2.0,
            Filter::Lanczos { lobes } => lobes as f64,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Filter::Nearest => f64::from(u8::from(x.abs() < 0.5)),
            Filter::Bilinear => (1.0 - x.abs()).max(0.0),
            Filter::Bicubic { a } => cubic(x, a),
            Filter::Lanczos { lobes } => lanczos(x, lobes as f64),
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// `sinc(x) * sinc(x / a)` on `|x| < a`, zero elsewhere.
pub fn lanczos(x: f64, a: f64) -> f64 {
    if x.abs() < a {
        sinc(x) * sinc(x / a)
    } else {
        0.0
    }
}

pub fn cubic(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source position of output sample `dst` under the half-pixel mapping.
#[inline]
pub fn source_coord(dst: usize, in_len: usize, out_len: usize) -> f64 {
    (dst as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5
}

/// Clamped source taps and normalised weights for each output sample.
pub fn axis_taps(in_len: usize, out_len: usize, filter: Filter) -> Vec<Vec<(usize, f64)>> {
    let last = in_len as isize - 1;
    (0..out_len)
        .map(|d| {
            if filter == Filter::Nearest {
                let src = ((d as f64 + 0.5) * in_len as f64 / out_len as f64).floor() as isize;
                return vec![(src.clamp(0, last) as usize, 1.0)];
            }
            let c = source_coord(d, in_len, out_len);
            let s = filter.support();
            let lo = (c - s).floor() as isize + 1;
            let hi = (c + s).ceil() as isize - 1;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .map(|i| (i.clamp(0, last) as usize, filter.eval(i as f64 - c)))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let sum: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= sum;
            }
            taps
        })
        .collect()
}

/// Resizes every plane of `input` to `out_w x out_h`.
pub fn resize<T: Scalar>(input: &Tensor<T>, out_w: usize, out_h: usize, filter: Filter) -> Result<Tensor<T>> {
    if out_w == 0 || out_h == 0 {
        return Err(contract_err!("resize target must be non-empty, got {out_w}x{out_h}"));
    }
    let s = input.shape();
    let xs = axis_taps(s.width, out_w, filter);
    let ys = axis_taps(s.height, out_h, filter);
    let mut out = Vec::with_capacity(s.batch * s.channels * out_w * out_h);
    let mut rows = vec![0f64; s.height * out_w];
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = input.channel(b, c);
            for y in 0..s.height {
                let row = &src[y * s.width..(y + 1) * s.width];
                for (x, taps) in xs.iter().enumerate() {
                    rows[y * out_w + x] = taps.iter().map(|&(i, w)| w * row[i].as_f64()).sum();
                }
            }
            for taps in &ys {
                for x in 0..out_w {
                    let v: f64 = taps.iter().map(|&(i, w)| w * rows[i * out_w + x]).sum();
                    out.push(T::lit(v));
                }
            }
        }
    }
    Tensor::new(Shape::new(s.batch, s.channels, out_h, out_w), out)
}

fn single_plane<T: Scalar>(plane: &Tensor<T>) -> Result<()> {
    if plane.shape().channels != 1 {
        return Err(contract_err!("resampling expects a single-channel plane, got {}", plane.shape()));
    }
    Ok(())
}

pub fn interp_nearest<T: Scalar>(plane: &Tensor<T>, out_w: usize, out_h: usize) -> Result<Tensor<T>> {
    single_plane(plane)?;
    resize(plane, out_w, out_h, Filter::Nearest)
}

pub fn interp_bilinear<T: Scalar>(plane: &Tensor<T>, out_w: usize, out_h: usize) -> Result<Tensor<T>> {
    single_plane(plane)?;
    resize(plane, out_w, out_h, Filter::Bilinear)
}

pub fn interp_bicubic<T: Scalar>(plane: &Tensor<T>, out_w: usize, out_h: usize) -> Result<Tensor<T>> {
    single_plane(plane)?;
    resize(plane, out_w, out_h, Filter::CATMULL_ROM)
}

/// Lanczos-3 resampling.
pub fn lanczos_resample<T: Scalar>(plane: &Tensor<T>, out_w: usize, out_h: usize) -> Result<Tensor<T>> {
    single_plane(plane)?;
    resize(plane, out_w, out_h, Filter::LANCZOS3)
}
