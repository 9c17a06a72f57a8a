//! Seeded fixtures and independent oracles for unit tests.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::scalar::Scalar;
use crate::tensor::{ConvWeights, Shape, Tensor};

/// Uniform [0, 1) tensor.
pub fn rand_tensor<T: Scalar>(shape: Shape, seed: u64) -> Tensor<T> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let data = (0..shape.len()).map(|_| T::lit(rng.random::<f64>())).collect();
    Tensor::new(shape, data).unwrap()
}

pub fn rand_weights<T: Scalar>(out: usize, inp: usize, kernel: usize, groups: usize, seed: u64) -> ConvWeights<T> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut w = ConvWeights::zeros(out, inp, kernel, groups);
    for v in w.kernels.iter_mut().chain(w.bias.iter_mut()) {
        *v = T::lit(rng.random_range(-1.0..1.0));
    }
    w
}

/// Pixel replication by integer factor, written directly from the definition.
pub fn nearest_upscale<T: Scalar>(x: &Tensor<T>, r: usize) -> Tensor<T> {
    let s = x.shape();
    let mut out = Vec::new();
    for b in 0..s.batch {
        for c in 0..s.channels {
            for y in 0..s.height * r {
                for xx in 0..s.width * r {
                    out.push(x.at(b, c, y / r, xx / r));
                }
            }
        }
    }
    Tensor::new(Shape::new(s.batch, s.channels, s.height * r, s.width * r), out).unwrap()
}
