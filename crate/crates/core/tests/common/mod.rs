#![allow(dead_code)]

use cat_core::{AttentionParams, PositionBiasNet};
use cat_tensor::{Element, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_f64(shape, &data).unwrap()
}

fn var<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Var<T> {
    Var::constant(random(rng, shape, scale))
}

/// Attention parameters with weights large enough to make the softmax far
/// from uniform.
pub fn attention_params<T: Element>(rng: &mut ChaCha8Rng, c: usize, heads: usize, hidden: usize) -> AttentionParams<T> {
    let s = 1.0;
    AttentionParams {
        wq: var(rng, &[c, c], s),
        bq: var(rng, &[c], s),
        wk: var(rng, &[c, c], s),
        bk: var(rng, &[c], s),
        wv: var(rng, &[c, c], s),
        bv: var(rng, &[c], s),
        wp: var(rng, &[c, c], s),
        bp: var(rng, &[c], s),
        lcm: Some((var(rng, &[3, 3, c, 1], s), var(rng, &[c], s))),
        pos: PositionBiasNet {
            w1: var(rng, &[2, hidden], s),
            b1: var(rng, &[hidden], s),
            w2: var(rng, &[hidden, hidden], s),
            b2: var(rng, &[hidden], s),
            w3: var(rng, &[hidden, heads], s),
            b3: var(rng, &[heads], s),
        },
        heads,
    }
}

pub fn max_diff<T: Element>(a: &Tensor<T>, b: &Tensor<f64>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (Element::to_f64(x) - y).abs())
        .fold(0.0, f64::max)
}
