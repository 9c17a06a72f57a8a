use arsr::quant::{calibrate, fake_quant, QuantParams};
use arsr::tensor::{conv2d, depth_to_space, space_to_depth};
use arsr::{ConvWeights, Shape, Tensor};
use proptest::prelude::*;

fn tensor(shape: Shape) -> impl Strategy<Value = Tensor<f64>> {
    let n = shape.batch * shape.channels * shape.height * shape.width;
    prop::collection::vec(-1.0f64..1.0, n).prop_map(move |d| Tensor::new(shape, d).unwrap())
}

fn conv_case() -> impl Strategy<Value = (ConvWeights<f64>, Tensor<f64>, Tensor<f64>, f64)> {
    (1usize..=2, 1usize..=2, 1usize..=2, prop_oneof![Just(1usize), Just(3), Just(5)], 3usize..8, 3usize..8)
        .prop_flat_map(|(g, ipg, opg, k, h, w)| {
            let out = g * opg;
            let shape = Shape::new(1, g * ipg, h, w);
            (
                prop::collection::vec(-1.0f64..1.0, out * ipg * k * k),
                prop::collection::vec(-1.0f64..1.0, out),
                tensor(shape),
                tensor(shape),
                -2.0f64..2.0,
            )
                .prop_map(move |(kern, bias, a, b, s)| (ConvWeights::new(out, ipg, k, g, kern, bias).unwrap(), a, b, s))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_is_affine((w, a, b, s) in conv_case()) {
        // conv(a + s b) - conv(0) == (conv(a) - conv(0)) + s (conv(b) - conv(0))
        let zero = Tensor::zeros(a.shape());
        let c0 = conv2d(&zero, &w).unwrap();
        let mix = Tensor::from_fn(a.shape(), |n, c, y, x| a.at(n, c, y, x) + s * b.at(n, c, y, x));
        let lhs = conv2d(&mix, &w).unwrap();
        let (ca, cb) = (conv2d(&a, &w).unwrap(), conv2d(&b, &w).unwrap());
        for i in 0..lhs.data().len() {
            let rhs = ca.data()[i] + s * (cb.data()[i] - c0.data()[i]);
            prop_assert!((lhs.data()[i] - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_to_space_is_a_permutation(r in 1usize..5, h in 1usize..5, w in 1usize..5, c in 1usize..3) {
        let shape = Shape::new(1, c * r * r, h, w);
        let t = Tensor::from_fn(shape, |_, ch, y, x| ((ch * h + y) * w + x) as f64);
        let d = depth_to_space(&t, r).unwrap();
        prop_assert_eq!(d.shape(), Shape::new(1, c, h * r, w * r));
        let mut seen: Vec<f64> = d.data().to_vec();
        seen.sort_by(f64::total_cmp);
        let want: Vec<f64> = (0..shape.channels * h * w).map(|v| v as f64).collect();
        prop_assert_eq!(seen, want);
        prop_assert_eq!(space_to_depth(&d, r).unwrap(), t);
    }

    #[test]
    fn fake_quant_is_idempotent_and_odd(vals in prop::collection::vec(-4.0f64..4.0, 1..64), bits in 2u32..=16, pow2: bool) {
        let q = calibrate(&vals, bits, pow2).unwrap();
        let t = Tensor::plane(1, vals.len(), vals.clone()).unwrap();
        let once = fake_quant(&t, &q);
        prop_assert_eq!(fake_quant(&once, &q), once.clone());
        let neg = fake_quant(&t.map(|v| -v), &q);
        for (a, b) in once.data().iter().zip(neg.data()) {
            prop_assert_eq!(*a, -*b);
        }
        for (v, s) in vals.iter().zip(once.data()) {
            prop_assert!((v - s).abs() <= q.scale / 2.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn pow2_scales_are_exact(peak in 1e-6f64..1e6, bits in 2u32..=16) {
        let q: QuantParams<f64> = calibrate(&[peak], bits, true).unwrap();
        let k = q.shift().unwrap();
        prop_assert_eq!(q.scale * 2f64.powi(-k), 1.0);
        prop_assert!(q.scale >= peak / (2f64.powi(bits as i32 - 1) - 1.0));
        prop_assert!(q.scale / 2.0 < peak / (2f64.powi(bits as i32 - 1) - 1.0));
    }
}

#[test]
fn more_bits_never_hurt() {
    let vals: Vec<f64> = (0..997).map(|i| ((i * 7919) % 2003) as f64 / 1001.0 - 1.0).collect();
    let t = Tensor::plane(1, vals.len(), vals.clone()).unwrap();
    let err = |bits| {
        let q = calibrate(&vals, bits, false).unwrap();
        let s = fake_quant(&t, &q);
        vals.iter().zip(s.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    };
    let errs: Vec<f64> = (4..=16).map(err).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}
