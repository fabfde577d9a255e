#![allow(dead_code)]

use l0cert::perspective::PerspectiveContext;
use l0cert::problem::{generate_synthetic, LossKind, NodeState, ProblemInstance, SyntheticSpec};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha20Rng, p: usize, scale: f64) -> Array1<f64> {
    (0..p).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random node with `p ≤ max_p`; see [`random_node`].
pub fn random_ctx(rng: &mut ChaCha20Rng, max_p: usize) -> PerspectiveContext {
    let p = rng.random_range(1..=max_p);
    let k = rng.random_range(1..=p);
    let m = rng.random_range(0.5..3.0);
    random_node(rng, p, k, m)
}

/// Each coordinate is fixed to zero with probability 0.2 or to one with
/// probability 0.15 (while the budget allows).
pub fn random_node(rng: &mut ChaCha20Rng, p: usize, k: usize, m: f64) -> PerspectiveContext {
    let mut zeros = Vec::new();
    let mut ones = Vec::new();
    for j in 0..p {
        let u: f64 = rng.random();
        if u < 0.2 {
            zeros.push(j);
        } else if u < 0.35 && ones.len() < k {
            ones.push(j);
        }
    }
    let node = NodeState::from_sets(p, &zeros, &ones, k).unwrap();
    PerspectiveContext::new(&node, k, m).unwrap()
}

/// A point of `dom g`: draws a feasible `z` and sets `β_j = ±u_j M z_j`.
pub fn feasible_beta(rng: &mut ChaCha20Rng, ctx: &PerspectiveContext) -> Array1<f64> {
    let m = ctx.m();
    let mut beta = Array1::zeros(ctx.p());
    for &j in ctx.ones() {
        beta[j] = rng.random_range(-m..=m);
    }
    let free = ctx.free();
    let mut z: Vec<f64> = free.iter().map(|_| rng.random::<f64>()).collect();
    let total: f64 = z.iter().sum();
    let k_bar = ctx.k_bar() as f64;
    if total > k_bar {
        z.iter_mut().for_each(|v| *v *= k_bar / total);
    }
    for (&j, zj) in free.iter().zip(&z) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        beta[j] = sign * rng.random::<f64>() * m * zj;
    }
    beta
}

pub fn synthetic(n: usize, p: usize, k_true: usize, loss: LossKind, seed: u64) -> ProblemInstance {
    let data = generate_synthetic(&SyntheticSpec {
        n,
        p,
        k_true,
        task: loss,
        seed,
        ..Default::default()
    })
    .unwrap();
    data.instance(1.0, 2.0, k_true).unwrap()
}

/// The reference instance: seed 0, `n = p = 200`, `k = 5`, `σ = 0.5`,
/// `λ₂ = 1`, `M = 2`.
pub fn seed0(loss: LossKind) -> ProblemInstance {
    synthetic(200, 200, 5, loss, 0)
}

pub fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
