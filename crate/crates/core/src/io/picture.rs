//! 8-bit PNG <-> 4:2:0 [`Frame`] conversion.
//!
//! Full-range YCbCr with chroma centred on 128/255. Chroma is subsampled by
//! averaging each 2x2 block and restored by replicating it, so images whose
//! chroma is constant over 2x2 blocks (grayscale ones in particular) survive
//! a round trip.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{contract_err, Error, Result};
use crate::pipeline::{Frame, Resolution};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const CHROMA_ZERO: f64 = 128.0 / 255.0;

/// Luma coefficients `(Kr, Kb)` of a colour matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Matrix {
    #[default]
    Bt709,
    Bt601,
}

impl Matrix {
    fn coeffs(self) -> (f64, f64) {
        match self {
            Matrix::Bt709 => (0.2126, 0.0722),
            Matrix::Bt601 => (0.299, 0.114),
        }
    }

    pub fn rgb_to_ycbcr(self, [r, g, b]: [f64; 3]) -> [f64; 3] {
        let (kr, kb) = self.coeffs();
        let y = kr * r + (1.0 - kr - kb) * g + kb * b;
        [y, (b - y) / (2.0 * (1.0 - kb)) + CHROMA_ZERO, (r - y) / (2.0 * (1.0 - kr)) + CHROMA_ZERO]
    }

    pub fn ycbcr_to_rgb(self, [y, cb, cr]: [f64; 3]) -> [f64; 3] {
        let (kr, kb) = self.coeffs();
        let r = y + 2.0 * (1.0 - kr) * (cr - CHROMA_ZERO);
        let b = y + 2.0 * (1.0 - kb) * (cb - CHROMA_ZERO);
        let g = (y - kr * r - kb * b) / (1.0 - kr - kb);
        [r, g, b]
    }
}

impl FromStr for Matrix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bt709" => Ok(Matrix::Bt709),
            "bt601" => Ok(Matrix::Bt601),
            other => Err(contract_err!("unknown colour matrix `{other}`")),
        }
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Matrix::Bt709 => "bt709",
            Matrix::Bt601 => "bt601",
        })
    }
}

pub fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// A decoded picture plus whether it was grayscale.
#[derive(Clone, Debug)]
pub struct Picture<T> {
    pub frame: Frame<T>,
    pub grayscale: bool,
}

fn plane<T: Scalar>(res: Resolution, f: impl Fn(usize, usize) -> f64) -> Tensor<T> {
    let data =
        (0..res.height).flat_map(|y| (0..res.width).map(move |x| (y, x))).map(|(y, x)| T::lit(f(y, x))).collect();
    Tensor::plane(res.height, res.width, data).expect("plane sized from its resolution")
}

/// 2x2 block means (partial blocks at odd edges average what exists).
fn subsample<T: Scalar>(full: &[f64], res: Resolution) -> Tensor<T> {
    plane(res.chroma(), |cy, cx| {
        let (mut sum, mut n) = (0.0, 0.0);
        for y in 2 * cy..(2 * cy + 2).min(res.height) {
            for x in 2 * cx..(2 * cx + 2).min(res.width) {
                sum += full[y * res.width + x];
                n += 1.0;
            }
        }
        sum / n
    })
}

pub fn frame_from_image<T: Scalar>(img: &DynamicImage, matrix: Matrix) -> Result<Picture<T>> {
    let res = Resolution::new(img.width() as usize, img.height() as usize);
    if res.width == 0 || res.height == 0 {
        return Err(Error::Data("empty image".into()));
    }
    let grayscale = !img.color().has_color();
    if grayscale {
        let g = img.to_luma8();
        let y = plane(res, |yy, xx| g.get_pixel(xx as u32, yy as u32)[0] as f64 / 255.0);
        let c = plane(res.chroma(), |_, _| CHROMA_ZERO);
        return Ok(Picture { frame: Frame::new(y, c.clone(), c)?, grayscale });
    }
    let rgb = img.to_rgb8();
    let n = res.width * res.height;
    let (mut ys, mut cbs, mut crs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for p in rgb.pixels() {
        let [y, cb, cr] = matrix.rgb_to_ycbcr(p.0.map(|v| v as f64 / 255.0));
        ys.push(y);
        cbs.push(cb);
        crs.push(cr);
    }
    let y = plane(res, |yy, xx| ys[yy * res.width + xx]);
    Ok(Picture { frame: Frame::new(y, subsample(&cbs, res), subsample(&crs, res))?, grayscale })
}

pub fn image_from_frame<T: Scalar>(frame: &Frame<T>, grayscale: bool, matrix: Matrix) -> DynamicImage {
    let res = frame.resolution();
    let (w, h) = (res.width as u32, res.height as u32);
    if grayscale {
        return DynamicImage::ImageLuma8(GrayImage::from_fn(w, h, |x, y| {
            image::Luma([to_u8(frame.y.at(0, 0, y as usize, x as usize).as_f64())])
        }));
    }
    DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let ycc = [
            frame.y.at(0, 0, y, x).as_f64(),
            frame.cb.at(0, 0, y / 2, x / 2).as_f64(),
            frame.cr.at(0, 0, y / 2, x / 2).as_f64(),
        ];
        image::Rgb(matrix.ycbcr_to_rgb(ycc).map(to_u8))
    }))
}

pub fn read_png<T: Scalar>(path: impl AsRef<Path>, matrix: Matrix) -> Result<Picture<T>> {
    let path = path.as_ref();
    let decode = || -> Result<DynamicImage> { Ok(image::ImageReader::open(path)?.with_guessed_format()?.decode()?) };
    frame_from_image(&decode().map_err(|e| e.at(path))?, matrix)
}

pub fn write_png<T: Scalar>(path: impl AsRef<Path>, frame: &Frame<T>, grayscale: bool, matrix: Matrix) -> Result<()> {
    let path = path.as_ref();
    image_from_frame(frame, grayscale, matrix)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::from(e).at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_roundtrip_within_one_code() {
        for matrix in [Matrix::Bt709, Matrix::Bt601] {
            for r in (0..=255).step_by(17) {
                for g in (0..=255).step_by(15) {
                    for b in (0..=255).step_by(51) {
                        let rgb = [r, g, b].map(|v| v as f64 / 255.0);
                        let back = matrix.ycbcr_to_rgb(matrix.rgb_to_ycbcr(rgb)).map(to_u8);
                        assert_eq!(back, [r as u8, g as u8, b as u8]);
                    }
                }
            }
        }
    }

    #[test]
    fn gray_roundtrip_lossless() {
        let img = DynamicImage::ImageLuma8(GrayImage::from_fn(7, 5, |x, y| image::Luma([(x * 31 + y * 7) as u8])));
        let pic: Picture<f32> = frame_from_image(&img, Matrix::Bt709).unwrap();
        assert!(pic.grayscale);
        assert_eq!(image_from_frame(&pic.frame, true, Matrix::Bt709), img);
        // also lossless when written as RGB
        let rgb = image_from_frame(&pic.frame, false, Matrix::Bt709).to_luma8();
        assert_eq!(rgb, img.to_luma8());
    }

    #[test]
    fn block_constant_chroma_roundtrip() {
        let img = RgbImage::from_fn(6, 4, |x, y| {
            let base = [(x / 2) * 80, (y / 2) * 120, 200 - (x / 2) * 50];
            let l = ((x % 2) + (y % 2)) * 10;
            image::Rgb(base.map(|v| (v + l).min(255) as u8))
        });
        let pic: Picture<f64> = frame_from_image(&DynamicImage::ImageRgb8(img.clone()), Matrix::Bt709).unwrap();
        let back = image_from_frame(&pic.frame, false, Matrix::Bt709).to_rgb8();
        for (a, b) in img.pixels().zip(back.pixels()) {
            for c in 0..3 {
                assert!((a[c] as i32 - b[c] as i32).abs() <= 1, "{a:?} vs {b:?}");
            }
        }
    }
}
