//! Reusable gradient-check suite: every tape operation and the full
//! network graph, analytic gradients vs central differences of the f64
//! oracle. Call sites choose the instance count.

use priornet_core::model::{ModelWeights, PriorNetConfig, Variant};
use priornet_core::rng::SplitMix64;
use priornet_core::tape::{Tape, Var};
use priornet_core::tensor::Tensor;

use crate::{fd, oracle};

type BuildFn = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;
type EvalFn = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;

struct OpInstance {
    inputs: Vec<Tensor>,
    build: BuildFn,
    eval: EvalFn,
}

fn to64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|v| *v as f64).collect()
}

/// Forward+backward on the tape, then compare every input element's
/// analytic gradient against a central difference of the oracle under a
/// fixed random linear readout.
fn check_instances(name: &str, count: usize, gen: impl Fn(u64) -> OpInstance) {
    for i in 0..count {
        let inst = gen(1000 + i as u64);
        let mut tape = Tape::new();
        let vars: Vec<Var> = inst.inputs.iter().map(|t| tape.leaf(t)).collect();
        let out = (inst.build)(&mut tape, &vars);

        let mut wrng = SplitMix64::new(777 + i as u64);
        let readout: Vec<f32> = (0..tape.data(out).len())
            .map(|_| {
                let sign = if wrng.next_f32() < 0.5 { -1.0 } else { 1.0 };
                sign * wrng.uniform(0.5, 1.5)
            })
            .collect();
        let readout_t = tape.leaf(&Tensor::new(tape.shape(out).to_vec(), readout.clone()));
        let weighted = tape.mul(out, readout_t).unwrap();
        let loss = tape.sum_all(weighted);
        tape.backward(loss).unwrap();

        let readout64: Vec<f64> = readout.iter().map(|v| *v as f64).collect();
        let mut eval = |p: &[Vec<f64>]| -> f64 {
            (inst.eval)(p)
                .iter()
                .zip(&readout64)
                .map(|(o, w)| o * w)
                .sum()
        };
        let mut p64: Vec<Vec<f64>> = inst.inputs.iter().map(to64).collect();
        for (pi, var) in vars.iter().enumerate() {
            let grad = tape
                .grad(*var)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; inst.inputs[pi].numel()]);
            for j in 0..grad.len() {
                let fd_val = fd::central_diff(&mut eval, &mut p64, pi, j);
                assert!(
                    fd::grads_agree(grad[j] as f64, fd_val),
                    "{name} instance {i}: input {pi} element {j}: analytic {} vs fd {fd_val}",
                    grad[j]
                );
            }
        }
    }
}

fn rand_tensor(rng: &mut SplitMix64, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let numel = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..numel).map(|_| rng.uniform(lo, hi)).collect(),
    )
}

/// Values bounded away from zero so ReLU kinks stay outside the
/// finite-difference interval.
fn rand_tensor_off_zero(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
    let numel = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..numel)
            .map(|_| {
                let sign = if rng.next_f32() < 0.5 { -1.0 } else { 1.0 };
                sign * rng.uniform(0.1, 1.0)
            })
            .collect(),
    )
}

pub fn conv2d(n: usize) {
    check_instances("conv2d", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let (ci, co) = (1 + rng.next_usize(3), 1 + rng.next_usize(3));
        let k = [1, 3, 5][rng.next_usize(3)];
        let (h, w) = (5 + rng.next_usize(3), 5 + rng.next_usize(3));
        let x = rand_tensor(&mut rng, &[ci, h, w], -1.0, 1.0);
        let wt = rand_tensor(&mut rng, &[co, ci, k, k], -0.7, 0.7);
        let b = rand_tensor(&mut rng, &[co], -0.5, 0.5);
        OpInstance {
            inputs: vec![x, wt, b],
            build: Box::new(|tape, v| tape.conv2d(v[0], v[1], v[2]).unwrap()),
            eval: Box::new(move |p| {
                oracle::conv2d(&p[0], (ci, h, w), &p[1], (co, k), &p[2], 1).0
            }),
        }
    });
}

pub fn strided_conv2d(n: usize) {
    check_instances("conv2d_strided", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let (ci, co) = (1 + rng.next_usize(2), 1 + rng.next_usize(3));
        let (h, w) = (6 + rng.next_usize(3), 6 + rng.next_usize(3));
        let x = rand_tensor(&mut rng, &[ci, h, w], -1.0, 1.0);
        let wt = rand_tensor(&mut rng, &[co, ci, 3, 3], -0.7, 0.7);
        let b = rand_tensor(&mut rng, &[co], -0.5, 0.5);
        OpInstance {
            inputs: vec![x, wt, b],
            build: Box::new(|tape, v| tape.conv2d_strided(v[0], v[1], v[2], 2).unwrap()),
            eval: Box::new(move |p| {
                oracle::conv2d(&p[0], (ci, h, w), &p[1], (co, 3), &p[2], 2).0
            }),
        }
    });
}

pub fn fully_connected(n: usize) {
    check_instances("fully_connected", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let (m, nn) = (1 + rng.next_usize(5), 1 + rng.next_usize(5));
        let x = rand_tensor(&mut rng, &[nn], -1.0, 1.0);
        let wt = rand_tensor(&mut rng, &[m, nn], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[m], -1.0, 1.0);
        OpInstance {
            inputs: vec![x, wt, b],
            build: Box::new(|tape, v| tape.fully_connected(v[0], v[1], v[2]).unwrap()),
            eval: Box::new(move |p| oracle::fully_connected(&p[0], &p[1], &p[2], m, nn)),
        }
    });
}

pub fn activations(n: usize) {
    check_instances("relu", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let x = rand_tensor_off_zero(&mut rng, &[3, 4, 4]);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.relu(v[0])),
            eval: Box::new(|p| oracle::relu(&p[0])),
        }
    });
    check_instances("sigmoid", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let x = rand_tensor(&mut rng, &[2, 3, 5], -2.5, 2.5);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.sigmoid(v[0])),
            eval: Box::new(|p| oracle::sigmoid_vec(&p[0])),
        }
    });
    check_instances("softmax", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let shape = [2, 4, 3];
        let axis = rng.next_usize(3);
        let x = rand_tensor(&mut rng, &shape, -2.0, 2.0);
        OpInstance {
            inputs: vec![x],
            build: Box::new(move |tape, v| tape.softmax(v[0], axis).unwrap()),
            eval: Box::new(move |p| oracle::softmax(&p[0], &shape, axis)),
        }
    });
    check_instances("clamp01", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        // three bands, each at least 0.05 from the clamp corners
        let data: Vec<f32> = (0..24)
            .map(|_| match rng.next_usize(3) {
                0 => rng.uniform(-0.5, -0.05),
                1 => rng.uniform(0.05, 0.95),
                _ => rng.uniform(1.05, 1.5),
            })
            .collect();
        let x = Tensor::new(vec![2, 3, 4], data);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.clamp01(v[0])),
            eval: Box::new(|p| oracle::clamp01(&p[0])),
        }
    });
}

pub fn pooling(n: usize) {
    check_instances("avg_pool_global", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let x = rand_tensor(&mut rng, &[3, 5, 4], -1.0, 1.0);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.avg_pool_global(v[0]).unwrap()),
            eval: Box::new(|p| oracle::avg_pool_global(&p[0], (3, 5, 4))),
        }
    });
    check_instances("max_pool_global", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        // spaced and shuffled values keep the argmax stable under the
        // finite-difference step
        let plane = 12;
        let mut data = Vec::new();
        for _ in 0..2 {
            let mut vals: Vec<f32> = (0..plane).map(|i| i as f32 * 0.05).collect();
            rng.shuffle(&mut vals);
            data.extend(vals);
        }
        let x = Tensor::new(vec![2, 3, 4], data);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.max_pool_global(v[0]).unwrap()),
            eval: Box::new(|p| oracle::max_pool_global(&p[0], (2, 3, 4))),
        }
    });
    for (window, stride, h, w) in [(3usize, 2usize, 7usize, 7usize), (8, 4, 9, 12)] {
        check_instances("sliding_avg_pool", n, move |seed| {
            let mut rng = SplitMix64::new(seed);
            let x = rand_tensor(&mut rng, &[2, h, w], -1.0, 1.0);
            OpInstance {
                inputs: vec![x],
                build: Box::new(move |tape, v| {
                    tape.sliding_avg_pool(v[0], window, stride).unwrap()
                }),
                eval: Box::new(move |p| {
                    oracle::sliding_avg_pool(&p[0], (2, h, w), window, stride).0
                }),
            }
        });
    }
}

pub fn elementwise(n: usize) {
    for which in ["add", "sub", "mul"] {
        check_instances(which, n, move |seed| {
            let mut rng = SplitMix64::new(seed);
            let a = rand_tensor(&mut rng, &[2, 3, 3], -1.0, 1.0);
            let b = rand_tensor(&mut rng, &[2, 3, 3], -1.0, 1.0);
            OpInstance {
                inputs: vec![a, b],
                build: Box::new(move |tape, v| match which {
                    "add" => tape.add(v[0], v[1]).unwrap(),
                    "sub" => tape.sub(v[0], v[1]).unwrap(),
                    _ => tape.mul(v[0], v[1]).unwrap(),
                }),
                eval: Box::new(move |p| {
                    p[0].iter()
                        .zip(&p[1])
                        .map(|(x, y)| match which {
                            "add" => x + y,
                            "sub" => x - y,
                            _ => x * y,
                        })
                        .collect()
                }),
            }
        });
    }
    // the documented broadcast: a [1,h,w] map against [c,h,w]
    for map_side_left in [true, false] {
        check_instances("mul_broadcast", n, move |seed| {
            let mut rng = SplitMix64::new(seed);
            let map = rand_tensor(&mut rng, &[1, 3, 4], -1.0, 1.0);
            let full = rand_tensor(&mut rng, &[3, 3, 4], -1.0, 1.0);
            let plane = 12;
            let inputs = if map_side_left {
                vec![map, full]
            } else {
                vec![full, map]
            };
            OpInstance {
                inputs,
                build: Box::new(|tape, v| tape.mul(v[0], v[1]).unwrap()),
                eval: Box::new(move |p| {
                    let (map, full) = if map_side_left {
                        (&p[0], &p[1])
                    } else {
                        (&p[1], &p[0])
                    };
                    (0..3 * plane).map(|i| full[i] * map[i % plane]).collect()
                }),
            }
        });
    }
}

pub fn shape_ops(n: usize) {
    check_instances("broadcast_channels", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let v = rand_tensor(&mut rng, &[4], -1.0, 1.0);
        OpInstance {
            inputs: vec![v],
            build: Box::new(|tape, v| tape.broadcast_channels(v[0], 3, 5).unwrap()),
            eval: Box::new(|p| {
                let mut out = Vec::with_capacity(4 * 15);
                for ch in 0..4 {
                    out.extend(std::iter::repeat_n(p[0][ch], 15));
                }
                out
            }),
        }
    });
    check_instances("concat_channels", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let a = rand_tensor(&mut rng, &[1, 3, 3], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[2, 3, 3], -1.0, 1.0);
        let c = rand_tensor(&mut rng, &[1, 3, 3], -1.0, 1.0);
        OpInstance {
            inputs: vec![a, b, c],
            build: Box::new(|tape, v| tape.concat_channels(v).unwrap()),
            eval: Box::new(|p| {
                let mut out = p[0].clone();
                out.extend_from_slice(&p[1]);
                out.extend_from_slice(&p[2]);
                out
            }),
        }
    });
    check_instances("reshape", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let x = rand_tensor(&mut rng, &[3, 2, 4], -1.0, 1.0);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.reshape(v[0], vec![6, 4]).unwrap()),
            eval: Box::new(|p| p[0].clone()),
        }
    });
    check_instances("matmul", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let (m, k, p) = (
            1 + rng.next_usize(4),
            1 + rng.next_usize(4),
            1 + rng.next_usize(4),
        );
        let a = rand_tensor(&mut rng, &[m, k], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[k, p], -1.0, 1.0);
        OpInstance {
            inputs: vec![a, b],
            build: Box::new(|tape, v| tape.matmul(v[0], v[1]).unwrap()),
            eval: Box::new(move |pp| oracle::matmul(&pp[0], &pp[1], m, k, p)),
        }
    });
    check_instances("upsample_nearest", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let x = rand_tensor(&mut rng, &[2, 2, 3], -1.0, 1.0);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.upsample_nearest(v[0], 5, 7).unwrap()),
            eval: Box::new(|p| oracle::upsample_nearest(&p[0], (2, 2, 3), 5, 7)),
        }
    });
}

pub fn reductions(n: usize) {
    check_instances("mean_all", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let x = rand_tensor(&mut rng, &[3, 4, 2], -1.0, 1.0);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.mean_all(v[0])),
            eval: Box::new(|p| vec![p[0].iter().sum::<f64>() / p[0].len() as f64]),
        }
    });
    check_instances("sum_all", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let x = rand_tensor(&mut rng, &[2, 2, 2], -1.0, 1.0);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| tape.sum_all(v[0])),
            eval: Box::new(|p| vec![p[0].iter().sum()]),
        }
    });
    check_instances("add_scalar_and_scale", n, |seed| {
        let mut rng = SplitMix64::new(seed);
        let x = rand_tensor(&mut rng, &[2, 3, 2], -1.0, 1.0);
        OpInstance {
            inputs: vec![x],
            build: Box::new(|tape, v| {
                let shifted = tape.add_scalar(v[0], 0.7);
                tape.scale(shifted, -1.3)
            }),
            eval: Box::new(|p| p[0].iter().map(|v| -1.3 * (v + 0.7)).collect()),
        }
    });
}

/// Every per-op check at `n` instances each.
pub fn all_ops(n: usize) {
    conv2d(n);
    strided_conv2d(n);
    fully_connected(n);
    activations(n);
    pooling(n);
    elementwise(n);
    shape_ops(n);
    reductions(n);
}

/// End-to-end: the training loss through the whole network, every
/// parameter, cycling the five architecture variants. Uses bias 0.5 and
/// mid-range images so no restoration output sits near the clamp rails
/// during the finite-difference sweep.
///
/// Probes whose +-h interval flips a ReLU/argmax/clamp gate are not
/// derivative estimates and are skipped; the skipped fraction must stay
/// small (measured ~3%, bounded at 5%), and a skipped element still
/// gets covered by the other instances, whose weights move the gate
/// geometry.
pub fn full_graph(instances: usize, seed_base: u64) {
    let mut probes = 0usize;
    let mut skipped = 0usize;
    for i in 0..instances {
        let variant = Variant::ALL[i % Variant::ALL.len()];
        let config = PriorNetConfig {
            bias_b: 0.5,
            variant,
            ..PriorNetConfig::default()
        };
        let model = ModelWeights::build(config, seed_base + i as u64).unwrap();
        let mut rng = SplitMix64::new(seed_base + 100 + i as u64);
        let (h, w) = (8, 8);
        let input = rand_tensor(&mut rng, &[3, h, w], 0.1, 0.9);
        let target = rand_tensor(&mut rng, &[3, h, w], 0.1, 0.9);

        let mut tape = Tape::new();
        let staged = model.stage(&mut tape);
        let input_var = tape.leaf(&input);
        let target_var = tape.leaf(&target);
        let out = staged.dehaze(&mut tape, input_var).unwrap();
        let diff = tape.sub(target_var, out).unwrap();
        let sq = tape.mul(diff, diff).unwrap();
        let loss = tape.mean_all(sq);
        tape.backward(loss).unwrap();
        let grads = staged.read_grads(&tape);

        let input64 = to64(&input);
        let target64 = to64(&target);
        let mut p64 = oracle::params_f64(&model);
        let center_sig = oracle::priornet_loss_gated(&model, &p64, &input64, &target64, (h, w))
            .1
             .0;
        let mut eval = |p: &[Vec<f64>]| -> (f64, u64) {
            let (loss, sig) = oracle::priornet_loss_gated(&model, p, &input64, &target64, (h, w));
            (loss, sig.0)
        };
        for pi in 0..p64.len() {
            for j in 0..p64[pi].len() {
                probes += 1;
                match fd::central_diff_gated(&mut eval, &mut p64, pi, j, center_sig) {
                    None => skipped += 1,
                    Some(fd_val) => {
                        assert!(
                            fd::grads_agree(grads[pi][j] as f64, fd_val),
                            "variant {variant:?} instance {i}: param {pi} elem {j}: \
                             analytic {} vs fd {fd_val}",
                            grads[pi][j]
                        );
                    }
                }
            }
        }
    }
    assert!(
        (skipped as f64) < 0.05 * probes as f64,
        "too many gate-flip probes skipped: {skipped} of {probes}"
    );
}
