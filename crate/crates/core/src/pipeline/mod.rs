//! Full-frame upscaling of 4:2:0 YCbCr frames.
//!
//! Luma goes through the network at the largest integer factor that fits the
//! target and, if that falls short, a Lanczos-3 stage. Chroma is interpolated
//! in one step from its source size to half the final luma size.

pub mod resample;

use std::fmt;
use std::str::FromStr;

use crate::error::{contract_err, shape_err, Error, Result};
use crate::model::{forward, ModelConfig, WeightSet};
use crate::quant::QuantizedModel;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use resample::{interp_bicubic, interp_bilinear, interp_nearest, lanczos_resample, Filter};

/// Integer network factors the planner may choose from.
pub const NET_FACTORS: [usize; 4] = [4, 3, 2, 1];

/// Width and height in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl Resolution {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn scaled(self, k: usize) -> Self {
        Self::new(self.width * k, self.height * k)
    }

    /// 4:2:0 chroma size for this luma size.
    pub fn chroma(self) -> Self {
        Self::new(self.width.div_ceil(2), self.height.div_ceil(2))
    }

    pub fn of<T: Scalar>(plane: &Tensor<T>) -> Self {
        Self::new(plane.width(), plane.height())
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for Resolution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| contract_err!("resolution must look like WIDTHxHEIGHT, got `{s}`"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| contract_err!("bad resolution component `{v}`"))
        };
        Ok(Self::new(parse(w)?, parse(h)?))
    }
}

/// How a resolution change is split between the network and Lanczos.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FramePlan {
    /// 1 bypasses the network.
    pub net_factor: usize,
    pub resample_target: Option<Resolution>,
}

impl FramePlan {
    /// Resolution the plan lands on for the given input.
    pub fn output(&self, input: Resolution) -> Resolution {
        self.resample_target.unwrap_or(input.scaled(self.net_factor))
    }
}

/// Largest supported integer factor `k` with `input * k <= output` on both
/// axes, plus a Lanczos stage when that does not land exactly on `output`.
pub fn plan(input: Resolution, output: Resolution) -> Result<FramePlan> {
    if output.width < input.width || output.height < input.height {
        return Err(contract_err!("cannot plan a downscale from {input} to {output}"));
    }
    if input.width == 0 || input.height == 0 {
        return Err(contract_err!("input resolution must be non-empty"));
    }
    let net_factor = NET_FACTORS
        .into_iter()
        .find(|&k| input.width * k <= output.width && input.height * k <= output.height)
        .unwrap_or(1);
    let resample_target = (input.scaled(net_factor) != output).then_some(output);
    Ok(FramePlan { net_factor, resample_target })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChromaMethod {
    Nearest,
    #[default]
    Bilinear,
    Bicubic,
}

impl ChromaMethod {
    pub fn filter(self) -> Filter {
        match self {
            ChromaMethod::Nearest => Filter::Nearest,
            ChromaMethod::Bilinear => Filter::Bilinear,
            ChromaMethod::Bicubic => Filter::CATMULL_ROM,
        }
    }
}

impl FromStr for ChromaMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(ChromaMethod::Nearest),
            "bilinear" => Ok(ChromaMethod::Bilinear),
            "bicubic" => Ok(ChromaMethod::Bicubic),
            other => Err(contract_err!("unknown chroma method `{other}`")),
        }
    }
}

/// A 4:2:0 frame with samples in `[0, 1]`, each plane a `1x1xHxW` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub y: Tensor<T>,
    pub cb: Tensor<T>,
    pub cr: Tensor<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn new(y: Tensor<T>, cb: Tensor<T>, cr: Tensor<T>) -> Result<Self> {
        for (name, p) in [("Y", &y), ("Cb", &cb), ("Cr", &cr)] {
            let s = p.shape();
            if s.batch != 1 || s.channels != 1 {
                return Err(shape_err!("{name} plane must be 1x1xHxW, got {s}"));
            }
        }
        let want = Resolution::of(&y).chroma();
        if Resolution::of(&cb) != want || Resolution::of(&cr) != want {
            return Err(shape_err!(
                "chroma planes {} / {} do not match 4:2:0 size {want}",
                Resolution::of(&cb),
                Resolution::of(&cr)
            ));
        }
        Ok(Self { y, cb, cr })
    }

    /// Every sample of every plane set to `v`.
    pub fn uniform(res: Resolution, v: T) -> Self {
        let c = res.chroma();
        let plane = |r: Resolution| Tensor::plane(r.height, r.width, vec![v; r.width * r.height]);
        Self::new(plane(res).unwrap(), plane(c).unwrap(), plane(c).unwrap())
            .expect("uniform frame has consistent planes")
    }

    pub fn resolution(&self) -> Resolution {
        Resolution::of(&self.y)
    }

    pub fn planes(&self) -> [&Tensor<T>; 3] {
        [&self.y, &self.cb, &self.cr]
    }

    pub fn clamp01(&self) -> Self {
        Self { y: self.y.clamp01(), cb: self.cb.clamp01(), cr: self.cr.clamp01() }
    }
}

#[derive(Clone, Debug)]
pub enum NetWeights<T> {
    Float(WeightSet<T>),
    Quantized(QuantizedModel<T>),
}

/// A configured luma network, float or simulated fixed-point.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub cfg: ModelConfig,
    pub weights: NetWeights<T>,
}

impl<T: Scalar> Network<T> {
    pub fn float(cfg: ModelConfig, weights: WeightSet<T>) -> Result<Self> {
        weights.validate(&cfg)?;
        Ok(Self { cfg, weights: NetWeights::Float(weights) })
    }

    pub fn quantized(cfg: ModelConfig, model: QuantizedModel<T>) -> Result<Self> {
        model.weights.validate(&cfg)?;
        Ok(Self { cfg, weights: NetWeights::Quantized(model) })
    }

    pub fn scale(&self) -> usize {
        self.cfg.scale
    }

    pub fn forward(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.weights {
            NetWeights::Float(w) => forward(&self.cfg, w, y),
            NetWeights::Quantized(q) => q.forward(&self.cfg, y),
        }
    }
}

/// Luma through the network (when `plan.net_factor > 1`) and optional
/// Lanczos stage; chroma straight to its final size with `chroma`. All
/// planes are clamped to `[0, 1]`.
pub fn upscale_frame<T: Scalar>(
    frame: &Frame<T>,
    plan: &FramePlan,
    net: Option<&Network<T>>,
    chroma: ChromaMethod,
) -> Result<Frame<T>> {
    let input = frame.resolution();
    let target = plan.output(input);
    let mut y = match (plan.net_factor, net) {
        (1, _) => frame.y.clone(),
        (k, Some(n)) if n.scale() == k => n.forward(&frame.y)?,
        (k, Some(n)) => {
            return Err(contract_err!("plan needs a x{k} network, weights are x{}", n.scale()));
        }
        (k, None) => return Err(contract_err!("plan needs a x{k} network, none given")),
    };
    if Resolution::of(&y) != target {
        y = lanczos_resample(&y, target.width, target.height)?;
    }
    let c = target.chroma();
    let cb = resample::resize(&frame.cb, c.width, c.height, chroma.filter())?;
    let cr = resample::resize(&frame.cr, c.width, c.height, chroma.filter())?;
    Ok(Frame::new(y, cb, cr)?.clamp01())
}
