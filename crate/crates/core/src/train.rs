//! Desk-scale trainer for the expanded network.
//!
//! Gradients are computed by walking the forward dataflow in reverse: the
//! depth-to-space shuffle is undone, the global residual sends the channel
//! sum back to the input, the inner residual fans its gradient out to both
//! the mapping stack and the skip path, and each conv contributes weight and
//! input gradients.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{contract_err, shape_err, Error, Result};
use crate::model::{forward, forward_probed, Layer, ModelConfig, Probe, Tap, WeightSet};
use crate::scalar::Scalar;
use crate::tensor::{
    add, conv2d_backward_input, conv2d_backward_weights, relu_backward, space_to_depth, sum_channels, ConvWeights,
    Shape, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mae,
    Mse,
    Huber,
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mae" | "l1" => Ok(LossKind::Mae),
            "mse" | "l2" => Ok(LossKind::Mse),
            "huber" => Ok(LossKind::Huber),
            other => Err(contract_err!("unknown loss `{other}`")),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
            LossKind::Huber => "huber",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Huber threshold; ignored by the other kinds.
    pub delta: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, delta: 1.0 }
    }

    pub fn huber(delta: f64) -> Result<Self> {
        if delta.is_nan() || delta <= 0.0 {
            return Err(contract_err!("Huber delta must be positive, got {delta}"));
        }
        Ok(Self { kind: LossKind::Huber, delta })
    }
}

/// Mean-reduced loss and its gradient with respect to `pred`.
pub fn loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, spec: &LossSpec) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(shape_err!("loss: prediction {} vs target {}", pred.shape(), target.shape()));
    }
    let k = T::lit(pred.data().len() as f64);
    let delta = T::lit(spec.delta);
    let half = T::lit(0.5);
    let sign = |e: T| {
        if e > T::zero() {
            T::one()
        } else if e < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    };
    let mut total = T::zero();
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let e = p - t;
            let (l, g) = match spec.kind {
                LossKind::Mse => (e * e, e + e),
                LossKind::Mae => (e.abs(), sign(e)),
                LossKind::Huber if e.abs() <= delta => (half * e * e, e),
                LossKind::Huber => (delta * (e.abs() - half * delta), delta * sign(e)),
            };
            total += l;
            g / k
        })
        .collect();
    Ok((total / k, Tensor::new(pred.shape(), grad)?))
}

#[derive(Default)]
struct Recorder<T>(HashMap<Tap, Tensor<T>>);

impl<T: Scalar> Probe<T> for Recorder<T> {
    fn tap(&mut self, tap: Tap, t: Tensor<T>) -> Result<Tensor<T>> {
        self.0.insert(tap, t.clone());
        Ok(t)
    }
}

impl<T> Recorder<T> {
    fn get(&self, tap: Tap) -> &Tensor<T> {
        &self.0[&tap]
    }
}

/// Weight gradients (same layout as the weights) and the input gradient.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub weights: WeightSet<T>,
    pub input: Tensor<T>,
}

fn layer_backward<T: Scalar>(
    i: usize,
    layer: &Layer<T>,
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    trace: &Recorder<T>,
) -> Result<(Layer<T>, Tensor<T>)> {
    match layer {
        Layer::Collapsed(c) => {
            Ok((Layer::Collapsed(conv2d_backward_weights(input, grad_out, c)?), conv2d_backward_input(grad_out, c)?))
        }
        Layer::Expanded { wide, project } => {
            let mid = trace.get(Tap::Wide(i));
            let g_project = conv2d_backward_weights(mid, grad_out, project)?;
            let g_mid = conv2d_backward_input(grad_out, project)?;
            let g_wide = conv2d_backward_weights(input, &g_mid, wide)?;
            let g_in = conv2d_backward_input(&g_mid, wide)?;
            Ok((Layer::Expanded { wide: g_wide, project: g_project }, g_in))
        }
    }
}

/// Gradients of `<upstream, forward(input)>` with respect to every kernel,
/// bias and input pixel.
pub fn backward<T: Scalar>(
    cfg: &ModelConfig,
    w: &WeightSet<T>,
    input: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<Gradients<T>> {
    let mut trace = Recorder::default();
    let out = forward_probed(cfg, w, input, &mut trace)?;
    if out.shape() != upstream.shape() {
        return Err(shape_err!("backward: upstream {} vs output {}", upstream.shape(), out.shape()));
    }
    let (nf, last) = (cfg.n_feat, cfg.n_feat + cfg.n_map);
    let layer_input = |i: usize| -> &Tensor<T> {
        match i {
            0 => trace.get(Tap::Input),
            i if i == last => trace.get(Tap::Residual),
            i => trace.get(Tap::Layer(i - 1)),
        }
    };
    let mut grads: Vec<Option<Layer<T>>> = vec![None; w.layers.len()];

    let g_z = space_to_depth(upstream, cfg.scale)?;
    let g_global = sum_channels(&g_z);
    let (gl, g_t2) = layer_backward(last, &w.layers[last], layer_input(last), &g_z, &trace)?;
    grads[last] = Some(gl);

    let mut g = g_t2.clone();
    for i in (nf..last).rev() {
        let g_pre = relu_backward(trace.get(Tap::Layer(i)), &g)?;
        let (gl, g_in) = layer_backward(i, &w.layers[i], layer_input(i), &g_pre, &trace)?;
        grads[i] = Some(gl);
        g = g_in;
    }
    let mut g = add(&g, &g_t2)?;
    for i in (0..nf).rev() {
        let g_pre = relu_backward(trace.get(Tap::Layer(i)), &g)?;
        let (gl, g_in) = layer_backward(i, &w.layers[i], layer_input(i), &g_pre, &trace)?;
        grads[i] = Some(gl);
        g = g_in;
    }
    Ok(Gradients {
        weights: WeightSet { form: w.form, layers: grads.into_iter().map(Option::unwrap).collect() },
        input: add(&g, &g_global)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Side of the (square) LR training crop.
    pub patch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.05, momentum: 0.9, epochs: 100, batch: 4, patch: 16, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.lr.is_nan() || self.lr < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(contract_err!("need lr >= 0 and momentum in [0, 1)"));
        }
        if self.batch == 0 {
            return Err(contract_err!("batch must be >= 1"));
        }
        if self.patch < cfg.largest_kernel() {
            return Err(contract_err!(
                "patch {} is smaller than the largest kernel {}",
                self.patch,
                cfg.largest_kernel()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub weights: WeightSet<T>,
    /// Per epoch, the mean of the batch losses, each taken just before that
    /// batch's update.
    pub history: Vec<f64>,
}

fn crop<T: Scalar>(t: &Tensor<T>, y0: usize, x0: usize, side: usize) -> Tensor<T> {
    Tensor::from_fn(Shape::new(1, 1, side, side), |_, _, y, x| t.at(0, 0, y0 + y, x0 + x))
}

/// Fixed LR/HR crops, one per pair, chosen once from the seed.
fn training_crops<T: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    pairs: &[(Tensor<T>, Tensor<T>)],
) -> Result<Vec<(Tensor<T>, Tensor<T>)>> {
    if pairs.is_empty() {
        return Err(contract_err!("no training pairs"));
    }
    let r = cfg.scale;
    let mut rng = SplitMix64::seed_from_u64(tcfg.seed);
    pairs
        .iter()
        .enumerate()
        .map(|(i, (lr, hr))| {
            let (ls, hs) = (lr.shape(), hr.shape());
            if ls.batch != 1 || ls.channels != 1 || hs.batch != 1 || hs.channels != 1 {
                return Err(Error::Data(format!("pair {i}: expected single luma planes")));
            }
            if (hs.height, hs.width) != (ls.height * r, ls.width * r) {
                return Err(Error::Data(format!("pair {i}: HR {hs} is not {r}x LR {ls}")));
            }
            if ls.height < tcfg.patch || ls.width < tcfg.patch {
                return Err(Error::Data(format!("pair {i}: LR {ls} smaller than patch {}", tcfg.patch)));
            }
            let y0 = rng.random_range(0..=ls.height - tcfg.patch);
            let x0 = rng.random_range(0..=ls.width - tcfg.patch);
            Ok((crop(lr, y0, x0, tcfg.patch), crop(hr, y0 * r, x0 * r, tcfg.patch * r)))
        })
        .collect()
}

fn params_mut<T: Scalar>(w: &mut WeightSet<T>) -> impl Iterator<Item = &mut T> {
    w.layers
        .iter_mut()
        .flat_map(|l| l.convs_mut())
        .flat_map(|c: &mut ConvWeights<T>| c.kernels.iter_mut().chain(c.bias.iter_mut()))
}

fn params<T: Scalar>(w: &WeightSet<T>) -> impl Iterator<Item = &T> {
    w.layers.iter().flat_map(|l| l.convs()).flat_map(|c| c.kernels.iter().chain(c.bias.iter()))
}

/// SGD with momentum from seeded expanded initialisation.
pub fn fit<T: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    spec: &LossSpec,
    pairs: &[(Tensor<T>, Tensor<T>)],
) -> Result<TrainOutcome<T>> {
    fit_from(cfg, tcfg, spec, pairs, WeightSet::expand(cfg, tcfg.seed)?)
}

/// SGD with momentum from the given starting weights. Batches walk the pairs
/// in order; `v <- momentum * v - lr * grad; w <- w + v`.
pub fn fit_from<T: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    spec: &LossSpec,
    pairs: &[(Tensor<T>, Tensor<T>)],
    mut weights: WeightSet<T>,
) -> Result<TrainOutcome<T>> {
    tcfg.validate(cfg)?;
    weights.validate(cfg)?;
    let crops = training_crops(cfg, tcfg, pairs)?;
    let batches: Vec<(Tensor<T>, Tensor<T>)> = crops
        .chunks(tcfg.batch)
        .map(|chunk| {
            let lr: Vec<_> = chunk.iter().map(|p| p.0.clone()).collect();
            let hr: Vec<_> = chunk.iter().map(|p| p.1.clone()).collect();
            Ok((Tensor::stack(&lr)?, Tensor::stack(&hr)?))
        })
        .collect::<Result<_>>()?;

    let mut velocity = vec![T::zero(); params(&weights).count()];
    let (lr, mu) = (T::lit(tcfg.lr), T::lit(tcfg.momentum));
    let mut history = Vec::with_capacity(tcfg.epochs);
    for _ in 0..tcfg.epochs {
        let mut epoch_loss = 0.0;
        for (x, target) in &batches {
            let pred = forward(cfg, &weights, x)?;
            let (l, g_pred) = loss(&pred, target, spec)?;
            epoch_loss += l.as_f64() * x.shape().batch as f64;
            let grads = backward(cfg, &weights, x, &g_pred)?;
            for ((p, v), &g) in params_mut(&mut weights).zip(&mut velocity).zip(params(&grads.weights)) {
                *v = mu * *v - lr * g;
                *p += *v;
            }
        }
        history.push(epoch_loss / crops.len() as f64);
    }
    Ok(TrainOutcome { weights, history })
}

/// Central finite-difference gradient check against [`backward`].
pub mod gradcheck {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    pub enum Param {
        Kernel { layer: usize, conv: usize, index: usize },
        Bias { layer: usize, conv: usize, index: usize },
        Input { index: usize },
    }

    #[derive(Clone, Debug)]
    pub struct Entry {
        pub param: Param,
        pub analytic: f64,
        pub numeric: f64,
    }

    impl Entry {
        pub fn within(&self, abs_tol: f64, rel_tol: f64) -> bool {
            let err = (self.analytic - self.numeric).abs();
            err <= abs_tol.max(rel_tol * self.analytic.abs().max(self.numeric.abs()))
        }
    }

    #[derive(Clone, Debug)]
    pub struct Report {
        pub entries: Vec<Entry>,
    }

    impl Report {
        pub fn failures(&self, abs_tol: f64, rel_tol: f64) -> Vec<&Entry> {
            self.entries.iter().filter(|e| !e.within(abs_tol, rel_tol)).collect()
        }

        pub fn max_abs_error(&self) -> f64 {
            self.entries.iter().map(|e| (e.analytic - e.numeric).abs()).fold(0.0, f64::max)
        }
    }

    fn param_mut<T: Scalar>(w: &mut WeightSet<T>, layer: usize, conv: usize, is_bias: bool, index: usize) -> &mut T {
        let c = w.layers[layer].convs_mut().swap_remove(conv);
        if is_bias {
            &mut c.bias[index]
        } else {
            &mut c.kernels[index]
        }
    }

    fn loss_at<T: Scalar>(
        cfg: &ModelConfig,
        w: &WeightSet<T>,
        x: &Tensor<T>,
        target: &Tensor<T>,
        spec: &LossSpec,
    ) -> Result<f64> {
        Ok(loss(&forward(cfg, w, x)?, target, spec)?.0.as_f64())
    }

    /// Compares every weight (and, with `include_input`, every input pixel)
    /// gradient of `loss(forward(x), target)` with `(L(p+eps) - L(p-eps)) / 2eps`.
    pub fn check<T: Scalar>(
        cfg: &ModelConfig,
        w: &WeightSet<T>,
        x: &Tensor<T>,
        target: &Tensor<T>,
        spec: &LossSpec,
        eps: f64,
        include_input: bool,
    ) -> Result<Report> {
        let (_, g_pred) = loss(&forward(cfg, w, x)?, target, spec)?;
        let grads = backward(cfg, w, x, &g_pred)?;
        let e = T::lit(eps);
        let mut entries = Vec::new();
        let mut probe = w.clone();
        for li in 0..w.layers.len() {
            let n_convs = w.layers[li].convs().len();
            for ci in 0..n_convs {
                for is_bias in [false, true] {
                    let len = {
                        let c = w.layers[li].convs()[ci];
                        if is_bias {
                            c.bias.len()
                        } else {
                            c.kernels.len()
                        }
                    };
                    for idx in 0..len {
                        let orig = *param_mut(&mut probe, li, ci, is_bias, idx);
                        *param_mut(&mut probe, li, ci, is_bias, idx) = orig + e;
                        let up = loss_at(cfg, &probe, x, target, spec)?;
                        *param_mut(&mut probe, li, ci, is_bias, idx) = orig - e;
                        let down = loss_at(cfg, &probe, x, target, spec)?;
                        *param_mut(&mut probe, li, ci, is_bias, idx) = orig;
                        let gc = grads.weights.layers[li].convs()[ci];
                        let analytic = if is_bias { gc.bias[idx] } else { gc.kernels[idx] };
                        let param = if is_bias {
                            Param::Bias { layer: li, conv: ci, index: idx }
                        } else {
                            Param::Kernel { layer: li, conv: ci, index: idx }
                        };
                        entries.push(Entry { param, analytic: analytic.as_f64(), numeric: (up - down) / (2.0 * eps) });
                    }
                }
            }
        }
        if include_input {
            let mut xp = x.clone();
            for idx in 0..x.data().len() {
                let orig = xp.data()[idx];
                xp.data_mut()[idx] = orig + e;
                let up = loss_at(cfg, w, &xp, target, spec)?;
                xp.data_mut()[idx] = orig - e;
                let down = loss_at(cfg, w, &xp, target, spec)?;
                xp.data_mut()[idx] = orig;
                entries.push(Entry {
                    param: Param::Input { index: idx },
                    analytic: grads.input.data()[idx].as_f64(),
                    numeric: (up - down) / (2.0 * eps),
                });
            }
        }
        Ok(Report { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Form;
    use crate::testutil::{nearest_upscale, rand_tensor};

    fn plane(v: &[f64]) -> Tensor<f64> {
        Tensor::plane(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction_is_free() {
        let t = rand_tensor::<f64>(Shape::new(1, 1, 4, 4), 1);
        for kind in [LossKind::Mae, LossKind::Mse, LossKind::Huber] {
            let (l, g) = loss(&t, &t, &LossSpec::new(kind)).unwrap();
            assert_eq!(l, 0.0);
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn huber_piecewise_values() {
        let h = LossSpec::huber(1.0).unwrap();
        assert_eq!(loss(&plane(&[0.5]), &plane(&[0.0]), &h).unwrap().0, 0.125);
        assert_eq!(loss(&plane(&[2.0]), &plane(&[0.0]), &h).unwrap().0, 1.5);
        // both branches give delta^2 / 2 at the boundary
        let d = 0.7;
        let hd = LossSpec::huber(d).unwrap();
        let at = loss(&plane(&[d]), &plane(&[0.0]), &hd).unwrap().0;
        assert!((at - 0.5 * d * d).abs() < 1e-15);
        assert!((d * (d - 0.5 * d) - 0.5 * d * d).abs() < 1e-15);
        assert!(LossSpec::huber(0.0).is_err());
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let pred = plane(&[0.3, -0.8, 1.9, -2.4, 0.05]);
        let target = plane(&[0.0; 5]);
        for spec in [LossSpec::new(LossKind::Mae), LossSpec::new(LossKind::Mse), LossSpec::new(LossKind::Huber)] {
            let (_, g) = loss(&pred, &target, &spec).unwrap();
            for i in 0..5 {
                let mut up = pred.clone();
                up.data_mut()[i] += 1e-4;
                let mut down = pred.clone();
                down.data_mut()[i] -= 1e-4;
                let fd = (loss(&up, &target, &spec).unwrap().0 - loss(&down, &target, &spec).unwrap().0) / 2e-4;
                assert!((fd - g.data()[i]).abs() < 1e-3, "{spec:?} element {i}");
            }
        }
    }

    #[test]
    fn mae_subgradient_at_zero_is_zero() {
        let (_, g) = loss(&plane(&[1.0]), &plane(&[1.0]), &LossSpec::new(LossKind::Mae)).unwrap();
        assert_eq!(g.data(), &[0.0]);
    }

    #[test]
    fn loss_shape_mismatch() {
        assert!(matches!(
            loss(&plane(&[1.0]), &plane(&[1.0, 2.0]), &LossSpec::new(LossKind::Mse)),
            Err(Error::Shape(_))
        ));
    }

    fn tiny() -> ModelConfig {
        ModelConfig::new(1, 1, 1, 2).with_channels(4, 8)
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cfg = tiny();
        let w = WeightSet::<f64>::expand(&cfg, 3).unwrap();
        let x = rand_tensor::<f64>(Shape::new(1, 1, 8, 8), 4);
        let g = backward(&cfg, &w, &x, &Tensor::zeros(Shape::new(1, 1, 16, 16))).unwrap();
        assert!(params(&g.weights).all(|&v| v == 0.0));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences_grouped() {
        let cfg = ModelConfig::new(2, 2, 2, 2).with_channels(4, 8);
        let mut w = WeightSet::<f64>::expand(&cfg, 5).unwrap();
        // zero biases leave dead-input pre-activations exactly on the ReLU kink
        for (k, c) in w.layers.iter_mut().flat_map(|l| l.convs_mut()).enumerate() {
            for (j, b) in c.bias.iter_mut().enumerate() {
                *b = 0.05 * ((k * 7 + j) as f64).sin();
            }
        }
        let x = rand_tensor::<f64>(Shape::new(2, 1, 6, 6), 6);
        let target = rand_tensor::<f64>(Shape::new(2, 1, 12, 12), 7);
        let report = gradcheck::check(&cfg, &w, &x, &target, &LossSpec::new(LossKind::Mse), 1e-5, true).unwrap();
        assert!(report.max_abs_error() < 1e-7, "{}", report.max_abs_error());
        let c = w.collapse(&cfg).unwrap();
        let report = gradcheck::check(&cfg, &c, &x, &target, &LossSpec::new(LossKind::Mse), 1e-5, false).unwrap();
        assert!(report.max_abs_error() < 1e-7);
    }

    #[test]
    fn traced_forward_matches_plain_forward() {
        let cfg = tiny();
        let w = WeightSet::<f32>::expand(&cfg, 2).unwrap();
        let x = rand_tensor::<f32>(Shape::new(1, 1, 8, 8), 1);
        let mut rec = Recorder::default();
        assert_eq!(forward_probed(&cfg, &w, &x, &mut rec).unwrap(), forward(&cfg, &w, &x).unwrap());
        assert_eq!(rec.0.len(), 2 + cfg.layer_count() * 2);
    }

    #[test]
    fn zero_net_on_identity_task_stays_at_zero_loss() {
        let cfg = tiny();
        let pairs: Vec<_> = (0..3)
            .map(|s| {
                let lr = rand_tensor::<f64>(Shape::new(1, 1, 10, 10), s);
                let hr = nearest_upscale(&lr, 2);
                (lr, hr)
            })
            .collect();
        let tcfg = TrainConfig { epochs: 5, batch: 2, patch: 8, ..TrainConfig::default() };
        let zero = WeightSet::zeros(&cfg, Form::Expanded).unwrap();
        let out = fit_from(&cfg, &tcfg, &LossSpec::new(LossKind::Mse), &pairs, zero.clone()).unwrap();
        assert!(out.history.iter().all(|&l| l == 0.0));
        assert_eq!(out.weights, zero);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let cfg = tiny();
        let lr = rand_tensor::<f64>(Shape::new(1, 1, 8, 8), 1);
        let hr = rand_tensor::<f64>(Shape::new(1, 1, 16, 16), 2);
        let tcfg = TrainConfig { lr: 0.0, epochs: 2, batch: 1, patch: 8, ..TrainConfig::default() };
        let start = WeightSet::expand(&cfg, tcfg.seed).unwrap();
        let out = fit(&cfg, &tcfg, &LossSpec::new(LossKind::Mae), &[(lr, hr)]).unwrap();
        assert_eq!(out.weights, start);
    }

    #[test]
    fn fit_rejects_bad_pairs() {
        let cfg = tiny();
        let lr = rand_tensor::<f32>(Shape::new(1, 1, 8, 8), 1);
        let hr = rand_tensor::<f32>(Shape::new(1, 1, 15, 16), 2);
        let tcfg = TrainConfig { patch: 8, ..TrainConfig::default() };
        let spec = LossSpec::new(LossKind::Mse);
        assert!(matches!(fit(&cfg, &tcfg, &spec, &[(lr, hr)]), Err(Error::Data(_))));
        assert!(matches!(fit::<f32>(&cfg, &tcfg, &spec, &[]), Err(Error::Contract(_))));
    }
}
