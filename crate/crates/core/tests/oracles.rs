//! Library results against naive reference implementations.

use arsr::model::{forward, ModelConfig, WeightSet};
use arsr::tensor::conv2d;
use arsr::{ConvWeights, Form, Shape, Tensor};

fn pseudo(n: usize, seed: usize) -> Vec<f64> {
    (0..n).map(|i| (((i + 1) * 2654435761 + seed * 40503) % 10007) as f64 / 10007.0 - 0.5).collect()
}

/// Zero-padded grouped convolution, one output sample at a time.
fn conv_oracle(x: &Tensor<f64>, w: &ConvWeights<f64>) -> Tensor<f64> {
    let s = x.shape();
    let (k, ipg, opg) = (w.kernel as isize, w.in_per_group, w.out_channels / w.groups);
    let pad = k / 2;
    Tensor::from_fn(Shape::new(s.batch, w.out_channels, s.height, s.width), |b, oc, y, xx| {
        let mut acc = w.bias[oc];
        for icl in 0..ipg {
            let ic = (oc / opg) * ipg + icl;
            for ky in 0..k {
                for kx in 0..k {
                    let (sy, sx) = (y as isize + ky - pad, xx as isize + kx - pad);
                    if sy < 0 || sx < 0 || sy >= s.height as isize || sx >= s.width as isize {
                        continue;
                    }
                    let wi = ((oc * ipg + icl) as isize * k + ky) * k + kx;
                    acc += w.kernels[wi as usize] * x.at(b, ic, sy as usize, sx as usize);
                }
            }
        }
        acc
    })
}

#[test]
fn conv_matches_oracle() {
    for (g, ipg, opg, k, h, w) in [(1, 3, 2, 3, 5, 7), (2, 2, 3, 5, 6, 4), (4, 1, 1, 7, 9, 9), (1, 1, 1, 1, 2, 3)] {
        let out = g * opg;
        let wts = ConvWeights::new(out, ipg, k, g, pseudo(out * ipg * k * k, 1), pseudo(out, 2)).unwrap();
        let x = Tensor::new(Shape::new(2, g * ipg, h, w), pseudo(2 * g * ipg * h * w, 3)).unwrap();
        let got = conv2d(&x, &wts).unwrap();
        let want = conv_oracle(&x, &wts);
        let d = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12, "g={g} k={k}: {d}");
    }
}

/// The whole network written out as nested loops.
#[test]
fn network_matches_layerwise_oracle() {
    let cfg = ModelConfig::new(2, 2, 2, 3).with_channels(4, 8);
    let w = WeightSet::<f64>::init(&cfg, Form::Collapsed, 9).unwrap();
    let x = Tensor::new(Shape::new(1, 1, 5, 6), pseudo(30, 4)).unwrap();
    let conv = |t: &Tensor<f64>, i: usize| conv_oracle(t, w.layers[i].convs()[0]);
    let relu = |t: Tensor<f64>| t.map(|v| v.max(0.0));

    let mut t = x.clone();
    for i in 0..2 {
        t = relu(conv(&t, i));
    }
    let mut u = t.clone();
    for i in 2..4 {
        u = relu(conv(&u, i));
    }
    let skip = Tensor::from_fn(t.shape(), |b, c, y, xx| t.at(b, c, y, xx) + u.at(b, c, y, xx));
    let z = conv(&skip, 4);
    let r = 3;
    let want = Tensor::from_fn(Shape::new(1, 1, 15, 18), |_, _, y, xx| {
        z.at(0, (y % r) * r + xx % r, y / r, xx / r) + x.at(0, 0, y / r, xx / r)
    });
    let got = forward(&cfg, &w, &x).unwrap();
    let d = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-12, "{d}");
}

#[test]
fn lanczos_impulse_response() {
    use arsr::pipeline::resample::{lanczos, resize, Filter};
    // upscaling a unit impulse by 2 samples the kernel at quarter offsets
    let mut data = vec![0.0f64; 16];
    data[8] = 1.0;
    let x = Tensor::plane(1, 16, data).unwrap();
    let up = resize(&x, 32, 1, Filter::LANCZOS3).unwrap();
    for (d, &v) in up.data().iter().enumerate() {
        let src = (d as f64 + 0.5) / 2.0 - 0.5;
        let taps: Vec<f64> =
            ((src - 3.0).floor() as i64..=(src + 3.0).ceil() as i64).map(|i| lanczos(src - i as f64, 3.0)).collect();
        let norm: f64 = taps.iter().sum();
        // far from the edges clamping does not merge taps
        if (4..28).contains(&d) {
            assert!((v - lanczos(src - 8.0, 3.0) / norm).abs() < 1e-12, "d={d}");
        }
    }
}
