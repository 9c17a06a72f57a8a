//! Simulated fixed-point inference.
//!
//! Per-tensor symmetric scales, max-abs calibration, round-half-away-from-zero
//! and saturation to `±(2^(b-1) - 1)`. With `pow2` the scale is rounded up to
//! a power of two so that rescaling becomes a shift. Integer kernels are
//! simulated by snapping floats onto the grid ("fake quantization").

use std::collections::HashMap;

use crate::error::{contract_err, Error, Result};
use crate::model::{forward_probed, Form, Layer, ModelConfig, Probe, Tap, WeightSet};
use crate::scalar::Scalar;
use crate::tensor::{ConvWeights, Tensor};

pub const DEFAULT_BITS: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantParams<T> {
    pub bits: u32,
    pub scale: T,
    pub pow2: bool,
}

/// Largest representable magnitude, `2^(b-1) - 1`.
pub fn qmax(bits: u32) -> i64 {
    (1i64 << (bits - 1)) - 1
}

fn check_bits(bits: u32) -> Result<()> {
    if !(2..=16).contains(&bits) {
        return Err(contract_err!("bit width must be in 2..=16, got {bits}"));
    }
    Ok(())
}

/// Smallest power of two `>= s`.
fn pow2_ceil(s: f64) -> f64 {
    let mut k = s.log2().ceil() as i32;
    while 2f64.powi(k - 1) >= s {
        k -= 1;
    }
    while 2f64.powi(k) < s {
        k += 1;
    }
    2f64.powi(k)
}

impl<T: Scalar> QuantParams<T> {
    pub fn new(bits: u32, scale: T, pow2: bool) -> Result<Self> {
        check_bits(bits)?;
        if !scale.is_finite() || scale <= T::zero() {
            return Err(contract_err!("quantization scale must be positive and finite, got {scale}"));
        }
        if pow2 && scale.as_f64().log2().fract() != 0.0 {
            return Err(contract_err!("pow2 scale {scale} is not a power of two"));
        }
        Ok(Self { bits, scale, pow2 })
    }

    pub fn qmax(&self) -> i64 {
        qmax(self.bits)
    }

    /// Integer grid index of `x`, saturated.
    #[inline]
    pub fn quantize(&self, x: T) -> i64 {
        let q = self.qmax() as f64;
        (x / self.scale).as_f64().round().clamp(-q, q) as i64
    }

    /// `quantize` followed by dequantization.
    #[inline]
    pub fn snap(&self, x: T) -> T {
        let q = T::lit(self.qmax() as f64);
        (x / self.scale).round().max(-q).min(q) * self.scale
    }

    /// `log2(scale)` when the scale is a power of two.
    pub fn shift(&self) -> Option<i32> {
        let l = self.scale.as_f64().log2();
        (l.fract() == 0.0).then_some(l as i32)
    }
}

/// Max-abs calibration: `s = max|v| / (2^(b-1) - 1)`, or 1 for all-zero data.
pub fn calibrate<T: Scalar>(values: &[T], bits: u32, pow2: bool) -> Result<QuantParams<T>> {
    check_bits(bits)?;
    if values.is_empty() {
        return Err(contract_err!("cannot calibrate on an empty set"));
    }
    let mut peak = 0f64;
    for v in values {
        let v = v.as_f64();
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite value {v} in calibration data")));
        }
        peak = peak.max(v.abs());
    }
    let mut s = if peak == 0.0 { 1.0 } else { peak / qmax(bits) as f64 };
    if pow2 {
        s = pow2_ceil(s);
    }
    Ok(QuantParams { bits, scale: T::lit(s), pow2 })
}

pub fn fake_quant<T: Scalar>(t: &Tensor<T>, q: &QuantParams<T>) -> Tensor<T> {
    t.map(|v| q.snap(v))
}

fn snap_conv<T: Scalar>(c: &ConvWeights<T>, bits: u32, pow2: bool) -> Result<(ConvWeights<T>, QuantParams<T>)> {
    let all: Vec<T> = c.kernels.iter().chain(&c.bias).copied().collect();
    let q = calibrate(&all, bits, pow2)?;
    let mut out = c.clone();
    for v in out.kernels.iter_mut().chain(out.bias.iter_mut()) {
        *v = q.snap(*v);
    }
    Ok((out, q))
}

/// Collapsed weights on their per-layer grids plus activation grids at every
/// layer boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedModel<T> {
    pub weights: WeightSet<T>,
    pub weight_params: Vec<QuantParams<T>>,
    /// Activation grids in dataflow order: input, each layer output, inner residual.
    pub activations: Vec<(Tap, QuantParams<T>)>,
}

/// Activation taps that carry a quantization grid, in dataflow order.
pub fn activation_taps(cfg: &ModelConfig) -> Vec<Tap> {
    let l = cfg.layer_count();
    let mut taps = vec![Tap::Input];
    taps.extend((0..cfg.n_feat + cfg.n_map).map(Tap::Layer));
    taps.push(Tap::Residual);
    taps.push(Tap::Layer(l - 1));
    taps
}

struct PeakProbe(HashMap<Tap, f64>);

impl<T: Scalar> Probe<T> for PeakProbe {
    fn tap(&mut self, tap: Tap, t: Tensor<T>) -> Result<Tensor<T>> {
        let m = t.max_abs().as_f64();
        if !m.is_finite() {
            return Err(Error::Data(format!("non-finite activation at {tap:?}")));
        }
        let e = self.0.entry(tap).or_insert(0.0);
        *e = e.max(m);
        Ok(t)
    }
}

struct FakeQuantProbe<'a, T>(HashMap<Tap, &'a QuantParams<T>>);

impl<T: Scalar> Probe<T> for FakeQuantProbe<'_, T> {
    fn tap(&mut self, tap: Tap, t: Tensor<T>) -> Result<Tensor<T>> {
        Ok(match self.0.get(&tap) {
            Some(q) => fake_quant(&t, q),
            None => t,
        })
    }
}

/// Post-training quantization of collapsed weights. Activation scales come
/// from one float forward pass (with snapped weights) over `calib`.
pub fn quantize_model<T: Scalar>(
    w: &WeightSet<T>,
    cfg: &ModelConfig,
    bits: u32,
    pow2: bool,
    calib: &[Tensor<T>],
) -> Result<QuantizedModel<T>> {
    check_bits(bits)?;
    if w.form != Form::Collapsed {
        return Err(contract_err!("quantization expects collapsed weights, got {}", w.form));
    }
    if calib.is_empty() {
        return Err(contract_err!("quantization needs at least one calibration input"));
    }
    w.validate(cfg)?;

    let mut layers = Vec::with_capacity(w.layers.len());
    let mut weight_params = Vec::with_capacity(w.layers.len());
    for layer in &w.layers {
        let Layer::Collapsed(c) = layer else { unreachable!("validated collapsed") };
        let (snapped, q) = snap_conv(c, bits, pow2)?;
        layers.push(Layer::Collapsed(snapped));
        weight_params.push(q);
    }
    let weights = WeightSet { form: Form::Collapsed, layers };

    let mut peaks = PeakProbe(HashMap::new());
    for x in calib {
        forward_probed(cfg, &weights, x, &mut peaks)?;
    }
    let activations = activation_taps(cfg)
        .into_iter()
        .map(|tap| {
            let peak = T::lit(peaks.0.get(&tap).copied().unwrap_or(0.0));
            calibrate(&[peak], bits, pow2).map(|q| (tap, q))
        })
        .collect::<Result<_>>()?;
    Ok(QuantizedModel { weights, weight_params, activations })
}

impl<T: Scalar> QuantizedModel<T> {
    pub fn bits(&self) -> u32 {
        self.weight_params.first().map_or(DEFAULT_BITS, |q| q.bits)
    }

    /// Forward pass with every activation tap snapped to its grid.
    pub fn forward(&self, cfg: &ModelConfig, y: &Tensor<T>) -> Result<Tensor<T>> {
        let probe = self.activations.iter().map(|(t, q)| (*t, q)).collect();
        forward_probed(cfg, &self.weights, y, &mut FakeQuantProbe(probe))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::testutil::rand_tensor;

    #[test]
    fn calibrate_unit_range() {
        let q = calibrate(&[0.25f64, -1.0, 0.5], 12, false).unwrap();
        assert_eq!(q.scale, 1.0 / 2047.0);
        let p = calibrate(&[0.25f64, -1.0, 0.5], 12, true).unwrap();
        // smallest power of two not below 1/2047; 2^-11 = 1/2048 would clip
        let k = (-30..0).find(|&k| 2f64.powi(k) >= 1.0 / 2047.0).unwrap();
        assert_eq!(k, -10);
        assert_eq!(p.scale, 2f64.powi(k));
        assert_eq!(p.shift(), Some(k));
    }

    #[test]
    fn calibrate_zeros_and_errors() {
        let q = calibrate(&[0.0f32; 5], 12, false).unwrap();
        assert_eq!(q.scale, 1.0);
        assert_eq!(q.snap(0.3), 0.0);
        assert!(matches!(calibrate(&[1.0f32, f32::NAN], 12, false), Err(Error::Data(_))));
        assert!(matches!(calibrate(&[1.0f32, f32::INFINITY], 8, true), Err(Error::Data(_))));
        assert!(calibrate::<f32>(&[], 12, false).is_err());
        assert!(calibrate(&[1.0f32], 1, false).is_err());
    }

    #[test]
    fn pow2_scale_is_exact_power() {
        for peak in [1e-6, 0.013, 0.5, 1.0, 3.7, 2048.0, 4094.0] {
            let q = calibrate(&[peak as f32], 12, true).unwrap();
            let shift = q.shift().expect("power of two");
            assert_eq!(q.scale * 2f32.powi(-shift), 1.0);
            assert!(q.scale as f64 >= peak / 2047.0);
            assert!((q.scale as f64) / 2.0 < peak / 2047.0);
        }
    }

    #[test]
    fn grid_points_are_fixed() {
        let q = calibrate(&[1.0f32], 12, false).unwrap();
        for k in [-2047i64, -100, -1, 0, 1, 5, 2047] {
            let x = k as f32 * q.scale;
            assert_eq!(q.snap(x), x);
            assert_eq!(q.quantize(x), k);
        }
    }

    #[test]
    fn saturates() {
        let q = calibrate(&[-1.0f64, 1.0], 12, false).unwrap();
        assert_eq!(q.snap(10.0 * q.scale * 2047.0), 2047.0 * q.scale);
        assert_eq!(q.quantize(-1e9), -2047);
    }

    #[test]
    fn error_bound_half_step() {
        let x = rand_tensor::<f64>(Shape::new(1, 3, 16, 16), 4).map(|v| 2.0 * v - 1.0);
        let q = calibrate(x.data(), 12, false).unwrap();
        let y = fake_quant(&x, &q);
        assert!(x.max_abs_diff(&y).unwrap() <= q.scale / 2.0 + 1e-15);
        assert_eq!(fake_quant(&y, &q), y);
        assert_eq!(fake_quant(&x.scale(-1.0), &q), y.scale(-1.0));
    }

    #[test]
    fn quantize_model_requires_collapsed_and_calibration() {
        let cfg = ModelConfig::new(1, 1, 1, 2).with_channels(4, 8);
        let exp = WeightSet::<f32>::expand(&cfg, 1).unwrap();
        let x = vec![rand_tensor::<f32>(Shape::new(1, 1, 8, 8), 2)];
        assert!(matches!(quantize_model(&exp, &cfg, 12, false, &x), Err(Error::Contract(_))));
        let col = exp.collapse(&cfg).unwrap();
        assert!(matches!(quantize_model(&col, &cfg, 12, false, &[]), Err(Error::Contract(_))));
        let qm = quantize_model(&col, &cfg, 12, false, &x).unwrap();
        assert_eq!(qm.weight_params.len(), cfg.layer_count());
        assert_eq!(qm.activations.len(), cfg.layer_count() + 2);
        for (layer, q) in qm.weights.layers.iter().zip(&qm.weight_params) {
            for c in layer.convs() {
                for &v in c.kernels.iter().chain(&c.bias) {
                    assert_eq!(q.snap(v), v);
                }
            }
        }
    }
}
