//! Property tests for the tensor engine and haze physics invariants.

use priornet_core::dcp::dark_channel;
use priornet_core::physics::{
    ideal_k, restore, synthesize_haze, HazeParams, Image, TransmissionMap,
};
use priornet_core::tape::Tape;
use priornet_core::tensor::Tensor;
use proptest::prelude::*;

fn vecs(len: usize, lo: f32, hi: f32) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(lo..hi, len)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn conv_delta_kernel_is_identity(
        c in 1usize..4,
        h in 3usize..8,
        w in 3usize..8,
        raw in proptest::collection::vec(-4.0f32..4.0, 3 * 7 * 7),
    ) {
        let data: Vec<f32> = raw.iter().take(c * h * w).cloned().collect();
        prop_assume!(data.len() == c * h * w);
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(vec![c, h, w], data.clone()));
        let mut weight = Tensor::zeros(vec![c, c, 3, 3]);
        for o in 0..c {
            weight.data_mut()[((o * c + o) * 3 + 1) * 3 + 1] = 1.0;
        }
        let wv = tape.leaf(&weight);
        let b = tape.leaf(&Tensor::zeros(vec![c]));
        let y = tape.conv2d(x, wv, b).unwrap();
        prop_assert_eq!(tape.data(y), &data[..]);
    }

    #[test]
    fn conv_is_linear(
        xa in vecs(2 * 5 * 5, -1.0, 1.0),
        xb in vecs(2 * 5 * 5, -1.0, 1.0),
        wdata in vecs(2 * 2 * 9, -1.0, 1.0),
        a in -2.0f32..2.0,
        b in -2.0f32..2.0,
    ) {
        let run = |data: Vec<f32>| -> Vec<f32> {
            let mut tape = Tape::new();
            let x = tape.leaf(&Tensor::new(vec![2, 5, 5], data));
            let w = tape.leaf(&Tensor::new(vec![2, 2, 3, 3], wdata.clone()));
            let zb = tape.leaf(&Tensor::zeros(vec![2]));
            let y = tape.conv2d(x, w, zb).unwrap();
            tape.data(y).to_vec()
        };
        let combined: Vec<f32> = xa.iter().zip(&xb).map(|(p, q)| a * p + b * q).collect();
        let lhs = run(combined);
        let ya = run(xa);
        let yb = run(xb);
        for i in 0..lhs.len() {
            let rhs = a * ya[i] + b * yb[i];
            prop_assert!((lhs[i] - rhs).abs() < 1e-5, "at {}: {} vs {}", i, lhs[i], rhs);
        }
    }

    // spreads beyond ~18 saturate an f32 softmax entry to exactly 1.0,
    // far outside anything the pooled query vectors produce
    #[test]
    fn softmax_is_a_distribution(
        data in vecs(3 * 4, -7.5, 7.5),
        axis in 0usize..2,
    ) {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(vec![3, 4], data));
        let y = tape.softmax(x, axis).unwrap();
        let out = tape.data(y);
        for v in out {
            prop_assert!(*v > 0.0 && *v < 1.0);
        }
        let (outer, len, inner) = match axis {
            0 => (1, 3, 4),
            _ => (3, 4, 1),
        };
        for o in 0..outer {
            for i in 0..inner {
                let sum: f32 = (0..len).map(|a| out[o * len * inner + a * inner + i]).sum();
                prop_assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn haze_round_trip_recovers_scene(
        jdata in vecs(3 * 6 * 6, 0.0, 1.0),
        tdata in vecs(6 * 6, 0.08, 1.0),
        a in 0.5f32..1.0,
        b_is_half in proptest::bool::ANY,
    ) {
        let clear = Image::new(6, 6, jdata);
        let t = TransmissionMap::new(6, 6, tdata);
        let params = HazeParams::uniform(a, 1.0, t);
        let bias = if b_is_half { 0.5 } else { 1.0 };
        let hazy = synthesize_haze(&clear, &params).unwrap();
        let k = ideal_k(&hazy, &params, bias);
        let restored = restore(&hazy, &k, bias).unwrap();
        for i in 0..hazy.data().len() {
            if (hazy.data()[i] - 1.0).abs() >= 1e-3 {
                prop_assert!(
                    (restored.data()[i] - clear.data()[i]).abs() < 1e-5,
                    "pixel {}: {} vs {}",
                    i,
                    restored.data()[i],
                    clear.data()[i]
                );
            }
        }
    }

    #[test]
    fn dark_channel_scales_with_global_brightness(
        data in vecs(3 * 6 * 6, 0.0, 1.0),
        scale in 0.05f32..1.0,
    ) {
        let img = Image::new(6, 6, data);
        let scaled = Image::from_fn(6, 6, |c, y, x| scale * img.get(c, y, x));
        let base = dark_channel(&img, 3);
        let got = dark_channel(&scaled, 3);
        for (g, b) in got.iter().zip(&base) {
            prop_assert!((g - scale * b).abs() < 1e-6);
        }
    }
}
