//! The luma super-resolution network.
//!
//! Topology: `N` feature-extraction convs, `M` (optionally grouped) mapping
//! convs wrapped by an inner residual, a final conv producing `r*r` channels,
//! the input plane broadcast-added onto every one of those channels, and a
//! depth-to-space shuffle. ReLU follows every feature and mapping conv; the
//! final conv and the residual adds are linear.
//!
//! Weights exist in two forms. The expanded form replaces each conv by a
//! `f x f` conv into `p` wide channels followed by a `1 x 1` projection back;
//! since nothing nonlinear sits between the pair, it folds exactly into a
//! single `f x f` conv (the collapsed form) for inference.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{contract_err, shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{add, add_broadcast, conv2d, depth_to_space, relu, ConvWeights, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature-extraction layer count `N`.
    pub n_feat: usize,
    /// Mapping layer count `M`.
    pub n_map: usize,
    pub channels: usize,
    /// Wide channel count `p` of the expanded form.
    pub expansion: usize,
    pub feat_kernels: Vec<usize>,
    pub map_kernel: usize,
    /// Groups of the mapping convs; feature and final convs are ungrouped.
    pub groups: usize,
    /// Upscale factor `r`; the final conv emits `r*r` channels.
    pub scale: usize,
    pub final_kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_feat: 3,
            n_map: 11,
            channels: 16,
            expansion: 256,
            feat_kernels: vec![7, 5, 3],
            map_kernel: 3,
            groups: 1,
            scale: 4,
            final_kernel: 3,
        }
    }
}

/// Kernel sizes used for `n` feature-extraction layers.
pub fn default_feat_kernels(n: usize) -> Vec<usize> {
    match n {
        1 => vec![5],
        2 => vec![7, 5],
        3 => vec![7, 5, 3],
        _ => [7, 5].into_iter().chain(std::iter::repeat(3)).take(n).collect(),
    }
}

impl ModelConfig {
    /// Default widths and kernels with the given topology knobs.
    pub fn new(n_feat: usize, n_map: usize, groups: usize, scale: usize) -> Self {
        Self { n_feat, n_map, groups, scale, feat_kernels: default_feat_kernels(n_feat), ..Self::default() }
    }

    pub fn with_channels(mut self, channels: usize, expansion: usize) -> Self {
        self.channels = channels;
        self.expansion = expansion;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_feat == 0 || self.n_map == 0 {
            return Err(contract_err!("need at least one feature and one mapping layer"));
        }
        if self.feat_kernels.len() != self.n_feat {
            return Err(contract_err!(
                "{} feature kernels listed for {} feature layers",
                self.feat_kernels.len(),
                self.n_feat
            ));
        }
        let kernels = self.feat_kernels.iter().chain([&self.map_kernel, &self.final_kernel]);
        if let Some(k) = kernels.into_iter().find(|&&k| k % 2 == 0) {
            return Err(contract_err!("kernel sizes must be odd, got {k}"));
        }
        if self.channels == 0 || self.expansion == 0 || self.scale == 0 {
            return Err(contract_err!("channels, expansion and scale must be >= 1"));
        }
        if self.groups == 0 || !self.channels.is_multiple_of(self.groups) {
            return Err(contract_err!("groups {} must divide channels {}", self.groups, self.channels));
        }
        if !self.expansion.is_multiple_of(self.groups) {
            return Err(contract_err!("groups {} must divide expansion {}", self.groups, self.expansion));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.n_feat + self.n_map + 1
    }

    /// Logical conv layers in network order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let c = self.channels;
        let feat = self.feat_kernels.iter().enumerate().map(|(i, &k)| LayerSpec {
            kind: LayerKind::Feature,
            in_channels: if i == 0 { 1 } else { c },
            out_channels: c,
            kernel: k,
            groups: 1,
        });
        let map = (0..self.n_map).map(|_| LayerSpec {
            kind: LayerKind::Mapping,
            in_channels: c,
            out_channels: c,
            kernel: self.map_kernel,
            groups: self.groups,
        });
        let last = LayerSpec {
            kind: LayerKind::Final,
            in_channels: c,
            out_channels: self.scale * self.scale,
            kernel: self.final_kernel,
            groups: 1,
        };
        feat.chain(map).chain(std::iter::once(last)).collect()
    }

    pub fn largest_kernel(&self) -> usize {
        self.layer_specs().iter().map(|l| l.kernel).max().unwrap_or(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Feature,
    Mapping,
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub groups: usize,
}

impl LayerSpec {
    pub fn activated(&self) -> bool {
        self.kind != LayerKind::Final
    }

    /// Kernel + bias count in the given form with wide width `p`.
    pub fn param_count(&self, form: Form, p: usize) -> usize {
        let (n, m, f, g) = (self.in_channels, self.out_channels, self.kernel, self.groups);
        match form {
            Form::Collapsed => m * (n / g) * f * f + m,
            Form::Expanded => (n / g) * p * f * f + p + (p / g) * m + m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Expanded,
    Collapsed,
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Form::Expanded => "expanded",
            Form::Collapsed => "collapsed",
        })
    }
}

impl FromStr for Form {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expanded" => Ok(Form::Expanded),
            "collapsed" => Ok(Form::Collapsed),
            other => Err(Error::Format(format!("unknown weight form `{other}`"))),
        }
    }
}

/// One logical conv layer.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Collapsed(ConvWeights<T>),
    /// `wide`: n -> p with the layer's kernel; `project`: p -> m, 1x1.
    Expanded {
        wide: ConvWeights<T>,
        project: ConvWeights<T>,
    },
}

impl<T: Scalar> Layer<T> {
    pub fn form(&self) -> Form {
        match self {
            Layer::Collapsed(_) => Form::Collapsed,
            Layer::Expanded { .. } => Form::Expanded,
        }
    }

    pub fn convs(&self) -> Vec<&ConvWeights<T>> {
        match self {
            Layer::Collapsed(c) => vec![c],
            Layer::Expanded { wide, project } => vec![wide, project],
        }
    }

    pub fn convs_mut(&mut self) -> Vec<&mut ConvWeights<T>> {
        match self {
            Layer::Collapsed(c) => vec![c],
            Layer::Expanded { wide, project } => vec![wide, project],
        }
    }

    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|c| c.param_count()).sum()
    }

    fn zeros(spec: &LayerSpec, form: Form, p: usize) -> Self {
        let g = spec.groups;
        match form {
            Form::Collapsed => {
                Layer::Collapsed(ConvWeights::zeros(spec.out_channels, spec.in_channels, spec.kernel, g))
            }
            Form::Expanded => Layer::Expanded {
                wide: ConvWeights::zeros(p, spec.in_channels, spec.kernel, g),
                project: ConvWeights::zeros(spec.out_channels, p, 1, g),
            },
        }
    }

    fn matches(&self, spec: &LayerSpec, p: usize) -> bool {
        let want = Layer::<T>::zeros(spec, self.form(), p);
        self.convs().iter().zip(want.convs()).all(|(a, b)| a.same_geometry(b))
    }

    /// Folds an expanded pair into a single conv; collapsed layers pass through.
    pub fn collapse(&self) -> Layer<T> {
        let (a, b) = match self {
            Layer::Collapsed(c) => return Layer::Collapsed(c.clone()),
            Layer::Expanded { wide, project } => (wide, project),
        };
        let g = a.groups;
        let taps = a.taps();
        let wide_per_group = a.out_per_group();
        let mut out = ConvWeights::zeros(b.out_channels, a.in_channels(), a.kernel, g);
        for oc in 0..b.out_channels {
            let group = oc / b.out_per_group();
            let mut bias = b.bias[oc];
            for ql in 0..wide_per_group {
                let q = group * wide_per_group + ql;
                let beta = b.kernel_slice(oc, ql)[0];
                bias += beta * a.bias[q];
                for icl in 0..a.in_per_group {
                    let src = a.kernel_slice(q, icl);
                    let start = (oc * a.in_per_group + icl) * taps;
                    for (d, &s) in out.kernels[start..start + taps].iter_mut().zip(src) {
                        *d += beta * s;
                    }
                }
            }
            out.bias[oc] = bias;
        }
        Layer::Collapsed(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet<T> {
    pub form: Form,
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> WeightSet<T> {
    pub fn zeros(cfg: &ModelConfig, form: Form) -> Result<Self> {
        cfg.validate()?;
        let layers = cfg.layer_specs().iter().map(|s| Layer::zeros(s, form, cfg.expansion)).collect();
        Ok(Self { form, layers })
    }

    /// Seeded uniform initialisation with variance `gain / fan_in`
    /// (`fan_in = in_per_group * f * f`): gain 2 before a ReLU, 1 for the
    /// final conv. Biases start at zero. Convs are filled in network order
    /// (wide before project).
    pub fn init(cfg: &ModelConfig, form: Form, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(cfg, form)?;
        let mut rng = SplitMix64::seed_from_u64(seed);
        for (layer, spec) in w.layers.iter_mut().zip(cfg.layer_specs()) {
            // variance gain / fan_in for the layer as a whole; in expanded
            // form the wide half is unit-gain and the projection carries it
            let gain = if spec.activated() { 2.0 } else { 1.0 };
            let convs = layer.convs_mut();
            let last = convs.len() - 1;
            for (i, conv) in convs.into_iter().enumerate() {
                let g = if i == last { gain } else { 1.0 };
                let bound = (3.0 * g / (conv.in_per_group * conv.taps()) as f64).sqrt();
                for k in conv.kernels.iter_mut() {
                    *k = T::lit(rng.random_range(-bound..=bound));
                }
            }
        }
        Ok(w)
    }

    /// Seeded expanded-form weights for training.
    pub fn expand(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        Self::init(cfg, Form::Expanded, seed)
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        cfg.validate()?;
        let specs = cfg.layer_specs();
        if specs.len() != self.layers.len() {
            return Err(shape_err!("config implies {} layers, weights have {}", specs.len(), self.layers.len()));
        }
        for (i, (spec, layer)) in specs.iter().zip(&self.layers).enumerate() {
            if layer.form() != self.form {
                return Err(contract_err!("layer {i} is {}, weight set is {}", layer.form(), self.form));
            }
            if !layer.matches(spec, cfg.expansion) {
                return Err(shape_err!("layer {i} does not have the shape implied by the config"));
            }
        }
        Ok(())
    }

    pub fn collapse(&self, cfg: &ModelConfig) -> Result<Self> {
        if self.form != Form::Expanded {
            return Err(contract_err!("collapse needs expanded weights, got {}", self.form));
        }
        self.validate(cfg)?;
        Ok(Self { form: Form::Collapsed, layers: self.layers.iter().map(Layer::collapse).collect() })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn cast<U: Scalar>(&self) -> WeightSet<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Collapsed(c) => Layer::Collapsed(c.cast()),
                Layer::Expanded { wide, project } => Layer::Expanded { wide: wide.cast(), project: project.cast() },
            })
            .collect();
        WeightSet { form: self.form, layers }
    }
}

/// Parameter total (kernels + biases) of a configuration in the given form.
pub fn param_count(cfg: &ModelConfig, form: Form) -> usize {
    cfg.layer_specs().iter().map(|s| s.param_count(form, cfg.expansion)).sum()
}

/// Points in the dataflow where a [`Probe`] sees (and may replace) the
/// running activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tap {
    /// The luma input, before any layer.
    Input,
    /// Output of the wide conv of expanded layer `i`.
    Wide(usize),
    /// Output of logical layer `i`, after its ReLU when it has one.
    Layer(usize),
    /// Sum of the mapping block's input and output.
    Residual,
}

pub trait Probe<T> {
    fn tap(&mut self, tap: Tap, t: Tensor<T>) -> Result<Tensor<T>>;
}

pub struct NoProbe;

impl<T> Probe<T> for NoProbe {
    #[inline]
    fn tap(&mut self, _: Tap, t: Tensor<T>) -> Result<Tensor<T>> {
        Ok(t)
    }
}

fn apply_layer<T: Scalar>(i: usize, layer: &Layer<T>, x: &Tensor<T>, probe: &mut impl Probe<T>) -> Result<Tensor<T>> {
    match layer {
        Layer::Collapsed(c) => conv2d(x, c),
        Layer::Expanded { wide, project } => {
            let mid = probe.tap(Tap::Wide(i), conv2d(x, wide)?)?;
            conv2d(&mid, project)
        }
    }
}

/// Forward pass on a batch of single-channel planes. The output is not clamped.
pub fn forward<T: Scalar>(cfg: &ModelConfig, w: &WeightSet<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    forward_probed(cfg, w, y, &mut NoProbe)
}

/// [`forward`] with a probe invoked at every [`Tap`].
pub fn forward_probed<T: Scalar>(
    cfg: &ModelConfig,
    w: &WeightSet<T>,
    y: &Tensor<T>,
    probe: &mut impl Probe<T>,
) -> Result<Tensor<T>> {
    w.validate(cfg)?;
    if y.shape().channels != 1 {
        return Err(contract_err!("network input must have 1 channel, got {}", y.shape()));
    }
    let n_feat = cfg.n_feat;
    let n_inner = n_feat + cfg.n_map;
    let input = probe.tap(Tap::Input, y.clone())?;

    let mut x = input.clone();
    for i in 0..n_feat {
        x = relu(&apply_layer(i, &w.layers[i], &x, probe)?);
        x = probe.tap(Tap::Layer(i), x)?;
    }
    let mut u = x.clone();
    for i in n_feat..n_inner {
        u = relu(&apply_layer(i, &w.layers[i], &u, probe)?);
        u = probe.tap(Tap::Layer(i), u)?;
    }
    let t2 = probe.tap(Tap::Residual, add(&x, &u)?)?;
    let z = apply_layer(n_inner, &w.layers[n_inner], &t2, probe)?;
    let z = probe.tap(Tap::Layer(n_inner), z)?;
    depth_to_space(&add_broadcast(&z, &input)?, cfg.scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::testutil::{nearest_upscale, rand_tensor};

    fn small(n: usize, m: usize, g: usize, r: usize) -> ModelConfig {
        ModelConfig::new(n, m, g, r).with_channels(8, 16)
    }

    #[test]
    fn default_counts() {
        let cfg = ModelConfig::default();
        assert_eq!(param_count(&cfg, Form::Collapsed), 37_376);
        let g4 = ModelConfig { groups: 4, ..ModelConfig::default() };
        assert_eq!(param_count(&g4, Form::Collapsed), 18_368);
    }

    #[test]
    fn expanded_mapping_pair_counts() {
        let cfg = ModelConfig::default();
        let w = WeightSet::<f32>::expand(&cfg, 0).unwrap();
        let Layer::Expanded { wide, project } = &w.layers[cfg.n_feat] else { panic!() };
        assert_eq!(wide.param_count(), 16 * 256 * 9 + 256);
        assert_eq!(project.param_count(), 256 * 16 + 16);
        assert_eq!(w.param_count(), param_count(&cfg, Form::Expanded));
        assert_eq!(w.collapse(&cfg).unwrap().layers.len(), cfg.n_feat + cfg.n_map + 1);
    }

    #[test]
    fn final_conv_width_follows_scale() {
        let c2 = ModelConfig::new(3, 11, 1, 2);
        let c4 = ModelConfig::new(3, 11, 1, 4);
        let (a, b) = (c2.layer_specs(), c4.layer_specs());
        assert_eq!(a.last().unwrap().out_channels, 4);
        assert_eq!(b.last().unwrap().out_channels, 16);
        assert_eq!(a[..a.len() - 1], b[..b.len() - 1]);
        assert_eq!(param_count(&c4, Form::Collapsed) - param_count(&c2, Form::Collapsed), 12 * 16 * 9 + 12);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let cfg = small(2, 5, 2, 3);
        let a = WeightSet::<f32>::expand(&cfg, 42).unwrap();
        assert_eq!(a, WeightSet::expand(&cfg, 42).unwrap());
        assert_ne!(a, WeightSet::expand(&cfg, 43).unwrap());
    }

    #[test]
    fn collapse_with_identity_projection_is_verbatim() {
        let a = ConvWeights::new(2, 1, 3, 1, (0..18).map(|v| v as f64 * 0.1).collect(), vec![0.5, -0.5]).unwrap();
        let project = ConvWeights::new(2, 2, 1, 1, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let layer = Layer::Expanded { wide: a.clone(), project };
        assert_eq!(layer.collapse(), Layer::Collapsed(a));
    }

    #[test]
    fn collapse_two_wide_channels() {
        let k1: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let k2: Vec<f64> = (0..9).map(|v| 1.0 - v as f64 * 0.5).collect();
        let wide = ConvWeights::new(2, 1, 3, 1, [k1.clone(), k2.clone()].concat(), vec![0.1, 0.2]).unwrap();
        let project = ConvWeights::new(1, 2, 1, 1, vec![2.0, -3.0], vec![0.7]).unwrap();
        let Layer::Collapsed(c) = (Layer::Expanded { wide, project }).collapse() else { panic!() };
        let expect: Vec<f64> = k1.iter().zip(&k2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        assert_eq!(c.kernels, expect);
        assert!((c.bias[0] - (0.7 + 0.2 - 0.6)).abs() < 1e-12);
    }

    #[test]
    fn collapse_rejects_collapsed() {
        let cfg = small(1, 1, 1, 2);
        let w = WeightSet::<f32>::zeros(&cfg, Form::Collapsed).unwrap();
        assert!(matches!(w.collapse(&cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn collapsed_matches_expanded() {
        for (n, m, g, r) in [(1, 5, 1, 2), (2, 5, 2, 3), (3, 5, 4, 4)] {
            let cfg = small(n, m, g, r);
            let w = WeightSet::<f64>::expand(&cfg, 9).unwrap();
            let c = w.collapse(&cfg).unwrap();
            let x = rand_tensor::<f64>(Shape::new(2, 1, 9, 7), 3);
            let diff = forward(&cfg, &w, &x).unwrap().max_abs_diff(&forward(&cfg, &c, &x).unwrap());
            assert!(diff.unwrap() < 1e-10);
        }
    }

    #[test]
    fn zero_network_is_nearest_upscale() {
        for r in [2, 3, 4] {
            let cfg = small(3, 5, 4, r);
            let w = WeightSet::<f32>::zeros(&cfg, Form::Collapsed).unwrap();
            let x = rand_tensor::<f32>(Shape::new(1, 1, 5, 6), r as u64);
            let out = forward(&cfg, &w, &x).unwrap();
            assert_eq!(out, nearest_upscale(&x, r));
        }
    }

    #[test]
    fn output_shape() {
        let cfg = small(3, 5, 1, 4);
        let w = WeightSet::<f32>::init(&cfg, Form::Collapsed, 1).unwrap();
        let out = forward(&cfg, &w, &Tensor::zeros(Shape::new(1, 1, 16, 16))).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 64, 64));
    }

    #[test]
    fn rejects_multichannel_and_mismatched_weights() {
        let cfg = small(1, 1, 1, 2);
        let w = WeightSet::<f32>::zeros(&cfg, Form::Collapsed).unwrap();
        let x = Tensor::zeros(Shape::new(1, 2, 4, 4));
        assert!(matches!(forward(&cfg, &w, &x), Err(Error::Contract(_))));
        let other = small(1, 1, 1, 3);
        let y = Tensor::zeros(Shape::new(1, 1, 4, 4));
        assert!(matches!(forward(&other, &w, &y), Err(Error::Shape(_))));
    }

    #[test]
    fn collapsed_count_ignores_expansion() {
        let a = ModelConfig::default().with_channels(16, 64);
        let b = ModelConfig::default().with_channels(16, 512);
        assert_eq!(param_count(&a, Form::Collapsed), param_count(&b, Form::Collapsed));
        assert!(param_count(&a, Form::Expanded) < param_count(&b, Form::Expanded));
    }
}
