//! Full-reference quality metrics on `[0, 1]` data.

use crate::error::{contract_err, shape_err, Result};
use crate::pipeline::Frame;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn sse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(shape_err!("metric inputs differ: {} vs {}", a.shape(), b.shape()));
    }
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum())
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// `10 log10(1 / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    Ok(psnr_from_mse(sse(a, b)? / a.data().len() as f64))
}

/// PSNR over the pooled samples of all three planes.
pub fn psnr_frame<T: Scalar>(a: &Frame<T>, b: &Frame<T>) -> Result<f64> {
    let mut err = 0.0;
    let mut n = 0;
    for (pa, pb) in a.planes().into_iter().zip(b.planes()) {
        err += sse(pa, pb)?;
        n += pa.data().len();
    }
    Ok(psnr_from_mse(err / n as f64))
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(h: usize, w: usize, v: impl Fn(usize) -> f64) -> Self {
        let w1 = w + 1;
        let mut sums = vec![0.0; (h + 1) * w1];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += v(y * w + x);
                sums[(y + 1) * w1 + x + 1] = sums[y * w1 + x + 1] + row;
            }
        }
        Self { w: w1, sums }
    }

    fn window(&self, y: usize, x: usize, n: usize) -> f64 {
        let s = |yy: usize, xx: usize| self.sums[yy * self.w + xx];
        s(y + n, x + n) - s(y, x + n) - s(y + n, x) + s(y, x)
    }
}

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights) of two
/// single-channel planes.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(shape_err!("metric inputs differ: {} vs {}", a.shape(), b.shape()));
    }
    let s = a.shape();
    if s.batch != 1 || s.channels != 1 {
        return Err(contract_err!("ssim expects a single plane, got {s}"));
    }
    let (h, w, n) = (s.height, s.width, SSIM_WINDOW);
    if h < n || w < n {
        return Err(contract_err!("ssim needs at least {n}x{n} samples, got {w}x{h}"));
    }
    let (da, db) = (a.data(), b.data());
    let fa = |i: usize| da[i].as_f64();
    let fb = |i: usize| db[i].as_f64();
    let sa = Integral::new(h, w, fa);
    let sb = Integral::new(h, w, fb);
    let saa = Integral::new(h, w, |i| fa(i) * fa(i));
    let sbb = Integral::new(h, w, |i| fb(i) * fb(i));
    let sab = Integral::new(h, w, |i| fa(i) * fb(i));
    let count = (n * n) as f64;
    let mut total = 0.0;
    for y in 0..=h - n {
        for x in 0..=w - n {
            let ma = sa.window(y, x, n) / count;
            let mb = sb.window(y, x, n) / count;
            let va = saa.window(y, x, n) / count - ma * ma;
            let vb = sbb.window(y, x, n) / count - mb * mb;
            let cov = sab.window(y, x, n) / count - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
    }
    Ok(total / ((h - n + 1) * (w - n + 1)) as f64)
}
