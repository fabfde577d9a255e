//! The implicit perspective regularizer
//!
//! ```text
//! g(β) = inf_z { ½ Σ_j β_j² / z_j : (β, z) ∈ D }
//! ```
//!
//! at a branch-and-bound node, where `D` fixes `z` on `J0 ∪ J1`, keeps
//! `z_j ∈ [0, 1]` on the free set, bounds `|β_j| ≤ M z_j` and `Σ z ≤ k`.
//! Its conjugate has the closed form
//!
//! ```text
//! g*(α) = Σ_{J1} H_M(α_j) + TopSum_{k̄}(H_M(α_{Jf}))
//! ```
//!
//! with `H_M` the Huber function and `k̄ = k − |J1|`. This module evaluates `g`
//! exactly by building a sparse majorizer of the sorted free magnitudes, and
//! computes `prox_{ρ g*}` by isotonic regression (PAVA) on the sorted
//! magnitudes. `prox_{ρ g}` follows from the Moreau decomposition.

mod pava;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::problem::NodeState;

/// Node data needed by the regularizer kernels, with the index sets cached.
#[derive(Debug, Clone)]
pub struct PerspectiveContext {
    node: NodeState,
    k: usize,
    m: f64,
    zeros: Vec<usize>,
    ones: Vec<usize>,
    free: Vec<usize>,
}

impl PerspectiveContext {
    pub fn new(node: &NodeState, k: usize, m: f64) -> Result<Self> {
        if node.n_one() > k {
            return Err(Error::InvalidInstance(format!(
                "|J1| = {} exceeds k = {k}",
                node.n_one()
            )));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidInstance(format!("M must be positive, got {m}")));
        }
        Ok(PerspectiveContext {
            zeros: node.zeros().collect(),
            ones: node.ones().collect(),
            free: node.free().collect(),
            node: node.clone(),
            k,
            m,
        })
    }

    /// Root-node context.
    pub fn root(p: usize, k: usize, m: f64) -> Result<Self> {
        Self::new(&NodeState::root(p)?, k, m)
    }

    pub fn node(&self) -> &NodeState {
        &self.node
    }
    pub fn p(&self) -> usize {
        self.node.p()
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn zeros(&self) -> &[usize] {
        &self.zeros
    }
    pub fn ones(&self) -> &[usize] {
        &self.ones
    }
    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// `k̄ = k − |J1|`.
    pub fn k_bar(&self) -> usize {
        self.k - self.ones.len()
    }

    /// `p̄ = |Jf|`.
    pub fn p_bar(&self) -> usize {
        self.free.len()
    }

    /// Number of free coordinates the budget can switch fully on.
    pub fn k_eff(&self) -> usize {
        self.k_bar().min(self.p_bar())
    }

    /// Additive slack applied to the domain inequalities.
    fn slack(&self, beta_inf: f64) -> f64 {
        1e-12 * beta_inf.max(self.k_bar() as f64 * self.m).max(1.0)
    }
}

/// `H_M(a)`: `½a²` for `|a| ≤ M`, else `M|a| − ½M²`.
pub fn huber(m: f64, a: f64) -> f64 {
    let abs = a.abs();
    if abs <= m {
        0.5 * a * a
    } else {
        m * abs - 0.5 * m * m
    }
}

/// `argmin_u ½(u − x)² + ρ H_M(u)`.
pub fn prox_huber(m: f64, rho: f64, x: f64) -> f64 {
    if x.abs() <= (1.0 + rho) * m {
        x / (1.0 + rho)
    } else {
        x - rho * m * x.signum()
    }
}

/// Sum of the `k` largest entries of `v`.
pub fn top_k_sum(v: &[f64], k: usize) -> f64 {
    assert!(k <= v.len(), "top_k_sum: k = {k} exceeds length {}", v.len());
    if k == 0 {
        return 0.0;
    }
    if k == v.len() {
        return v.iter().sum();
    }
    let mut buf = v.to_vec();
    buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    buf[..k].iter().sum()
}

// Neumaier-compensated sum of absolute values.
fn abs_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let a = v.abs();
        let t = sum + a;
        if sum >= a {
            comp += (sum - t) + a;
        } else {
            comp += (a - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn inf_norm(beta: &Array1<f64>) -> f64 {
    beta.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Membership in `dom g`: `β_{J0} = 0`, `|β_j| ≤ M` elsewhere and
/// `Σ_{Jf} |β_j| ≤ k̄ M`, each up to a `1e-12` relative slack.
pub fn dom_check(ctx: &PerspectiveContext, beta: &Array1<f64>) -> bool {
    if beta.len() != ctx.p() || beta.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let slack = ctx.slack(inf_norm(beta));
    if ctx.zeros.iter().any(|&j| beta[j].abs() > slack) {
        return false;
    }
    let box_ok = |j: &usize| beta[*j].abs() <= ctx.m + slack;
    if !ctx.ones.iter().all(box_ok) || !ctx.free.iter().all(box_ok) {
        return false;
    }
    abs_sum(ctx.free.iter().map(|&j| beta[j])) <= ctx.k_bar() as f64 * ctx.m + slack
}

/// `g(β)`, or `+∞` outside the domain.
pub fn eval_g(ctx: &PerspectiveContext, beta: &Array1<f64>) -> f64 {
    if !dom_check(ctx, beta) {
        return f64::INFINITY;
    }
    let m = ctx.m;
    let fixed: f64 = ctx
        .ones
        .iter()
        .map(|&j| {
            let a = beta[j].abs().min(m);
            a * a
        })
        .sum();

    let k_eff = ctx.k_eff();
    if k_eff == 0 {
        return 0.5 * fixed;
    }
    let mut mags: Vec<f64> = ctx.free.iter().map(|&j| beta[j].abs().min(m)).collect();
    let mut theta = abs_sum(mags.iter().copied());
    let budget = ctx.k_bar() as f64 * m;
    if theta > budget {
        // within slack (dom_check passed): pull back onto the budget face
        let scale = budget / theta;
        mags.iter_mut().for_each(|a| *a *= scale);
        theta = budget;
    }

    if k_eff < mags.len() {
        mags.select_nth_unstable_by(k_eff - 1, |a, b| b.total_cmp(a));
    }
    let top = &mut mags[..k_eff];
    top.sort_unstable_by(|a, b| b.total_cmp(a));

    // Peel off entries larger than the running average of what is left; the
    // remainder is spread evenly over the unfilled slots.
    let mut omega_sq = 0.0;
    for (j, &a) in top.iter().enumerate() {
        let slots = (k_eff - j) as f64;
        let avg = theta / slots;
        if avg >= a {
            omega_sq += slots * avg * avg;
            break;
        }
        omega_sq += a * a;
        theta = (theta - a).max(0.0);
    }
    0.5 * (fixed + omega_sq)
}

/// `g*(α)`; coordinates in `J0` do not contribute.
pub fn eval_g_conjugate(ctx: &PerspectiveContext, alpha: &Array1<f64>) -> f64 {
    let m = ctx.m;
    let fixed: f64 = ctx.ones.iter().map(|&j| huber(m, alpha[j])).sum();
    let free: Vec<f64> = ctx.free.iter().map(|&j| huber(m, alpha[j])).collect();
    fixed + top_k_sum(&free, ctx.k_eff())
}

// Sort key on free positions: magnitude descending, then index ascending.
fn by_magnitude(mags: &[f64]) -> impl Fn(&u32, &u32) -> Ordering + '_ {
    move |&a, &b| {
        mags[b as usize]
            .total_cmp(&mags[a as usize])
            .then(a.cmp(&b))
    }
}

// Heap entry ordered so that the weakest kept position sits on top.
#[derive(PartialEq)]
struct Kept {
    mag: f64,
    idx: u32,
}

impl Eq for Kept {}

impl Ord for Kept {
    fn cmp(&self, other: &Self) -> Ordering {
        other.mag.total_cmp(&self.mag).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Kept {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `len` largest free magnitudes as positions into `free`, in sort-key
/// order, together with the largest magnitude left out (`0` if none).
fn largest_prefix(beta: &Array1<f64>, free: &[usize], len: usize) -> (Vec<u32>, f64) {
    let p_bar = free.len();
    let mag = |i: u32| beta[free[i as usize]].abs();
    if 4 * len <= p_bar {
        // short prefix: a single streaming pass with a bounded heap
        let mut heap = BinaryHeap::with_capacity(len);
        let mut rest_max = 0.0f64;
        for i in 0..p_bar as u32 {
            let a = mag(i);
            if heap.len() < len {
                heap.push(Kept { mag: a, idx: i });
                continue;
            }
            let mut weakest = heap.peek_mut().expect("heap is full");
            if a > weakest.mag {
                rest_max = rest_max.max(weakest.mag);
                *weakest = Kept { mag: a, idx: i };
            } else {
                rest_max = rest_max.max(a);
            }
        }
        let order = heap.into_sorted_vec().into_iter().map(|e| e.idx).collect();
        return (order, rest_max);
    }
    let mags: Vec<f64> = free.iter().map(|&j| beta[j].abs()).collect();
    let cmp = by_magnitude(&mags);
    let mut order: Vec<u32> = (0..p_bar as u32).collect();
    if len < p_bar {
        order.select_nth_unstable_by(len - 1, &cmp);
    }
    let rest_max = order[len..].iter().map(|&i| mags[i as usize]).fold(0.0f64, f64::max);
    order.truncate(len);
    order.sort_unstable_by(&cmp);
    (order, rest_max)
}

/// `prox_{ρ g*}(β)`, computed exactly.
///
/// `J0` passes through, `J1` gets the scalar Huber prox, and the free block is
/// an isotonic regression on the sorted magnitudes with weight `ρ` on the
/// first `k̄` positions. Positions past `k̄` carry zero weight and keep their
/// input, so only the prefix that PAVA actually pools needs to be sorted; the
/// prefix grows geometrically until its last fitted value dominates
/// everything left over.
pub fn prox_g_conjugate(ctx: &PerspectiveContext, rho: f64, beta: &Array1<f64>) -> Array1<f64> {
    assert!(rho > 0.0, "prox_g_conjugate: rho must be positive");
    assert_eq!(beta.len(), ctx.p(), "prox_g_conjugate: dimension mismatch");
    let m = ctx.m;
    let mut alpha = beta.clone();
    for &j in &ctx.ones {
        alpha[j] = prox_huber(m, rho, beta[j]);
    }

    let k_eff = ctx.k_eff();
    let p_bar = ctx.p_bar();
    if k_eff == 0 {
        return alpha;
    }

    let mut len = p_bar.min((2 * k_eff).max(32));
    let mut targets = Vec::with_capacity(len);
    let mut weights = Vec::with_capacity(len);
    let mut fitted = Vec::with_capacity(len);
    let order = loop {
        let (order, rest_max) = largest_prefix(beta, &ctx.free, len);
        targets.clear();
        weights.clear();
        for (pos, &i) in order.iter().enumerate() {
            targets.push(beta[ctx.free[i as usize]].abs());
            weights.push(if pos < k_eff { rho } else { 0.0 });
        }
        let blocks = pava::pava_blocks(m, &targets, &weights);
        let last = blocks.last().map_or(0.0, |b| b.value);
        if len == p_bar || last >= rest_max {
            pava::expand(&blocks, &mut fitted);
            break order;
        }
        len = p_bar.min(2 * len);
    };

    for (pos, &i) in order.iter().enumerate() {
        let j = ctx.free[i as usize];
        let b = beta[j];
        alpha[j] = if b == 0.0 { 0.0 } else { fitted[pos].copysign(b) };
    }
    alpha
}

/// `prox_{ρ g}(β) = β − ρ prox_{ρ⁻¹ g*}(β / ρ)`.
///
/// The result is snapped onto `dom g`: `J0` is set to exactly zero and any
/// round-off excess over the box or the `ℓ1` budget is trimmed.
pub fn prox_g(ctx: &PerspectiveContext, rho: f64, beta: &Array1<f64>) -> Array1<f64> {
    assert!(rho > 0.0, "prox_g: rho must be positive");
    let inv = 1.0 / rho;
    let scaled = beta * inv;
    let conj = prox_g_conjugate(ctx, inv, &scaled);
    let mut out = beta - &(conj * rho);
    snap_to_domain(ctx, &mut out);
    out
}

pub(crate) fn snap_to_domain(ctx: &PerspectiveContext, beta: &mut Array1<f64>) {
    let m = ctx.m;
    for &j in &ctx.zeros {
        beta[j] = 0.0;
    }
    for &j in ctx.ones.iter().chain(ctx.free.iter()) {
        beta[j] = beta[j].clamp(-m, m);
    }
    let budget = ctx.k_bar() as f64 * m;
    let l1 = abs_sum(ctx.free.iter().map(|&j| beta[j]));
    if l1 > budget {
        let scale = budget / l1;
        for &j in &ctx.free {
            beta[j] *= scale;
        }
    }
}
