//! Oracles shared by several test targets.
#![allow(dead_code)]

use gibbs_lens::network::{
    backward, build_custom, forward, ArchShape, Capture, NetworkSpec, Parameters,
};
use gibbs_lens::rng::SeededRng;
use gibbs_lens::tensor::{cross_entropy, Tensor};

pub fn random_tensor(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform() * 4.0 - 2.0)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-9 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Valid cross-correlation of an HWC input with [kh, kw, cin, cout] kernels.
pub fn naive_conv(x: &Tensor, k: &Tensor, b: &[f64]) -> Vec<f64> {
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw, cout) = (k.shape()[0], k.shape()[1], k.shape()[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let xi = |i: usize, j: usize, c: usize| x.data()[(i * w + j) * cin + c];
    let ki =
        |a: usize, bb: usize, c: usize, o: usize| k.data()[((a * kw + bb) * cin + c) * cout + o];
    let mut out = vec![0.0; oh * ow * cout];
    for i in 0..oh {
        for j in 0..ow {
            for o in 0..cout {
                let mut s = b[o];
                for a in 0..kh {
                    for bb in 0..kw {
                        for c in 0..cin {
                            s += xi(i + a, j + bb, c) * ki(a, bb, c, o);
                        }
                    }
                }
                out[(i * ow + j) * cout + o] = s;
            }
        }
    }
    out
}

/// 2×2 stride-2 max pooling, odd edges dropped.
pub fn naive_maxpool(x: &Tensor) -> Vec<f64> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow * c];
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    best = best.max(x.data()[((2 * i + a) * w + 2 * j + b) * c + ch]);
                }
                out[(i * ow + j) * c + ch] = best;
            }
        }
    }
    out
}

/// Whole-network checks use a five-point stencil with a larger step: the
/// loss is O(1) while some gradients are O(1e-7), which a small three-point
/// step drowns in rounding.
pub const H_NET: f64 = 1e-3;

/// Pool winners and ReLU signs; finite differences are only valid while these hold.
fn kinks(capture: &Capture) -> Vec<(Vec<usize>, Vec<bool>)> {
    capture
        .layers
        .iter()
        .filter_map(|r| {
            r.argmax.as_ref().map(|a| {
                (
                    a.clone(),
                    r.output.data().iter().map(|&v| v > 0.0).collect(),
                )
            })
        })
        .collect()
}

fn net_loss(
    spec: &NetworkSpec,
    params: &Parameters,
    image: &Tensor,
    label: usize,
) -> (f64, Capture) {
    let c = forward(spec, params, image).unwrap();
    (cross_entropy(c.probabilities(), label).unwrap(), c)
}

#[derive(Debug, Default)]
pub struct FdSweep {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel: f64,
    pub worst: String,
}

/// Compare every parameter gradient of the reduced network with finite
/// differences, skipping entries whose perturbation crosses a kink.
pub fn reduced_network_sweep(seeds: std::ops::Range<u64>) -> FdSweep {
    let mut sweep = FdSweep::default();
    for seed in seeds {
        let (spec, mut params) = build_custom(ArchShape::reduced(), seed).unwrap();
        let mut rng = SeededRng::new(100 + seed);
        let image = Tensor::from_fn(&[8, 8, 1], |_| rng.standard_normal());
        let label = rng.below(10);
        let (_, capture) = net_loss(&spec, &params, &image, label);
        let base = kinks(&capture);
        let grads = backward(&spec, &params, &capture, label).unwrap();

        for t in 0..params.tensors.len() {
            for i in 0..params.tensors[t].len() {
                let orig = params.tensors[t].data()[i];
                let mut at = |delta: f64| {
                    params.tensors[t].data_mut()[i] = orig + delta;
                    net_loss(&spec, &params, &image, label)
                };
                let samples = [at(2.0 * H_NET), at(H_NET), at(-H_NET), at(-2.0 * H_NET)];
                params.tensors[t].data_mut()[i] = orig;
                if samples.iter().any(|(_, c)| kinks(c) != base) {
                    sweep.skipped += 1;
                    continue;
                }
                let [f2, f1, m1, m2] = samples.map(|s| s.0);
                let numeric = (-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * H_NET);
                let analytic = grads.tensors[t].data()[i];
                let e = rel_err(analytic, numeric);
                if e > sweep.max_rel {
                    sweep.max_rel = e;
                    sweep.worst = format!(
                        "seed {seed} tensor {t} entry {i}: analytic {analytic} numeric {numeric}"
                    );
                }
                sweep.checked += 1;
            }
        }
    }
    sweep
}
