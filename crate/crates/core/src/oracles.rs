//! Slow reference implementations for tests.
//!
//! None of these call into [`crate::perspective`] or [`crate::solver`]; they
//! rebuild every quantity from the definitions so that agreement with the
//! production kernels is meaningful. Node index sets are taken from a
//! [`PerspectiveContext`] but nothing else is.

use ndarray::Array1;

use crate::bnb::box_constrained_fit_with;
use crate::error::{Error, Result};
use crate::losses;
use crate::perspective::PerspectiveContext;
use crate::problem::ProblemInstance;

/// Budgets and tolerances for the reference solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Bisection steps for the waterfilling multiplier.
    pub waterfilling_iters: usize,
    /// Stop the waterfilling search once `|Σz − k̄|` is below this.
    pub waterfilling_tol: f64,
    /// Relative slack allowed when checking `dom g`.
    pub feasibility_tol: f64,
    /// Bisection steps on the top-sum threshold in the conjugate prox.
    pub prox_bisection_iters: usize,
    pub relaxation_max_iters: usize,
    /// Stop the relaxation solve when a step moves `β` by less than this
    /// (relative to `max(‖β‖, 1)`).
    pub relaxation_step_tol: f64,
    /// Largest number of supports the enumerator will visit.
    pub enumerate_limit: u128,
    pub fit_tol: f64,
    pub fit_max_iters: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            waterfilling_iters: 400,
            waterfilling_tol: 1e-12,
            feasibility_tol: 1e-9,
            prox_bisection_iters: 200,
            relaxation_max_iters: 200_000,
            relaxation_step_tol: 1e-15,
            enumerate_limit: 100_000,
            fit_tol: 1e-10,
            fit_max_iters: 200_000,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let budgets = [
            self.waterfilling_iters,
            self.prox_bisection_iters,
            self.relaxation_max_iters,
            self.fit_max_iters,
        ];
        if budgets.contains(&0) || self.enumerate_limit == 0 {
            return Err(Error::InvalidConfig("oracle budgets must be positive".into()));
        }
        let tols = [
            self.waterfilling_tol,
            self.feasibility_tol,
            self.relaxation_step_tol,
            self.fit_tol,
        ];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidConfig("oracle tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// `sup_{|t| ≤ M} (a t − t²/2)`.
fn box_quadratic_sup(m: f64, a: f64) -> f64 {
    let t = a.clamp(-m, m);
    a * t - 0.5 * t * t
}

/// `argmin_a ½(a − b)² + ρ sup_{|t|≤M}(a t − t²/2)`, from `a + ρ clamp(a, ±M) = b`.
fn scalar_prox(m: f64, rho: f64, b: f64) -> f64 {
    if b.abs() <= (1.0 + rho) * m {
        b / (1.0 + rho)
    } else {
        b - rho * m * b.signum()
    }
}

/// `g(β) = min_z ½ Σ β_j² / z_j` over the node's `z`-polytope, solved through
/// the KKT form `z_j ∝ |β_j|` clipped to `[|β_j|/M, 1]`.
pub fn oracle_g_waterfilling(ctx: &PerspectiveContext, beta: &Array1<f64>, cfg: &OracleConfig) -> f64 {
    let m = ctx.m();
    let limit = m * (1.0 + cfg.feasibility_tol);
    if ctx.zeros().iter().any(|&j| beta[j].abs() > cfg.feasibility_tol * m) {
        return f64::INFINITY;
    }
    let mut value = 0.0;
    for &j in ctx.ones() {
        if beta[j].abs() > limit {
            return f64::INFINITY;
        }
        value += 0.5 * beta[j] * beta[j];
    }

    let k_bar = ctx.k().saturating_sub(ctx.ones().len()) as f64;
    let mut a = Vec::with_capacity(ctx.free().len());
    for &j in ctx.free() {
        let b = beta[j].abs();
        if b > limit {
            return f64::INFINITY;
        }
        if b > 0.0 {
            a.push(b.min(m));
        }
    }
    if a.is_empty() {
        return value;
    }
    if a.len() as f64 <= k_bar {
        return value + 0.5 * a.iter().map(|v| v * v).sum::<f64>();
    }
    let floor_sum: f64 = a.iter().map(|v| v / m).sum();
    if floor_sum > k_bar + cfg.feasibility_tol * k_bar.max(1.0) {
        return f64::INFINITY;
    }
    if floor_sum >= k_bar {
        // every z sits on its lower bound
        return value + 0.5 * m * a.iter().sum::<f64>();
    }

    let z_sum = |s: f64| a.iter().map(|v| (v * s).clamp(v / m, 1.0)).sum::<f64>();
    let min_a = a.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (1.0 / m, 1.0 / min_a);
    let mut s = hi;
    for _ in 0..cfg.waterfilling_iters {
        s = 0.5 * (lo + hi);
        let total = z_sum(s);
        if (total - k_bar).abs() <= cfg.waterfilling_tol {
            break;
        }
        if total > k_bar {
            hi = s;
        } else {
            lo = s;
        }
    }
    value + 0.5 * a.iter().map(|v| v * v / (v * s).clamp(v / m, 1.0)).sum::<f64>()
}

/// `g*(α) = max_z Σ z_j sup_{|t|≤M}(α_j t − t²/2)` over the node polytope,
/// maximized by enumerating every vertex (free subsets of size `≤ k̄`).
pub fn oracle_g_conjugate_enumerate(ctx: &PerspectiveContext, alpha: &Array1<f64>) -> f64 {
    let m = ctx.m();
    let fixed: f64 = ctx.ones().iter().map(|&j| box_quadratic_sup(m, alpha[j])).sum();
    let free: Vec<f64> = ctx.free().iter().map(|&j| box_quadratic_sup(m, alpha[j])).collect();
    let k_bar = ctx.k().saturating_sub(ctx.ones().len());
    assert!(free.len() < 31, "subset enumeration is limited to 30 free coordinates");

    let mut best = 0.0f64;
    for mask in 0u32..(1u32 << free.len()) {
        if mask.count_ones() as usize > k_bar {
            continue;
        }
        let total: f64 = (0..free.len()).filter(|i| mask >> i & 1 == 1).map(|i| free[i]).sum();
        best = best.max(total);
    }
    fixed + best
}

/// Per-coordinate minimizer of `½(a − b)² + ρ max(H(a) − τ, 0)` for `b ≥ 0`,
/// with the multiplier `λ ∈ [0, 1]` of the active hinge.
fn hinge_prox(m: f64, rho: f64, tau: f64, b: f64) -> (f64, f64) {
    if box_quadratic_sup(m, b) <= tau {
        return (b, 0.0);
    }
    let full = scalar_prox(m, rho, b);
    if box_quadratic_sup(m, full) >= tau {
        return (full, 1.0);
    }
    // pinned on the level set H(a) = τ
    let a = if tau <= 0.5 * m * m {
        (2.0 * tau).sqrt()
    } else {
        (tau + 0.5 * m * m) / m
    };
    let lambda = if a > 0.0 { (b - a) / (rho * a.min(m)) } else { 1.0 };
    (a, lambda.clamp(0.0, 1.0))
}

/// `argmin_a ½‖a − β‖² + ρ g*(a)`.
///
/// Writes the top-`k̄` sum as `min_τ k̄τ + Σ max(H(a_j) − τ, 0)` and bisects
/// on `τ` until the hinge multipliers sum to `k̄`.
pub fn oracle_prox_conjugate(
    ctx: &PerspectiveContext,
    rho: f64,
    beta: &Array1<f64>,
    cfg: &OracleConfig,
) -> Array1<f64> {
    let m = ctx.m();
    let mut out = beta.clone();
    for &j in ctx.ones() {
        out[j] = scalar_prox(m, rho, beta[j]);
    }
    let free = ctx.free();
    let k_bar = ctx.k().saturating_sub(ctx.ones().len());
    let mags: Vec<f64> = free.iter().map(|&j| beta[j].abs()).collect();
    let nonzero = mags.iter().filter(|&&b| b > 0.0).count();
    let apply = |out: &mut Array1<f64>, tau: f64| {
        for (&j, &b) in free.iter().zip(&mags) {
            out[j] = hinge_prox(m, rho, tau, b).0 * beta[j].signum();
        }
    };
    if k_bar == 0 {
        return out;
    }
    if nonzero <= k_bar {
        apply(&mut out, 0.0);
        return out;
    }
    let multipliers = |tau: f64| mags.iter().map(|&b| hinge_prox(m, rho, tau, b).1).sum::<f64>();
    let mut lo = 0.0;
    let mut hi = mags.iter().map(|&b| box_quadratic_sup(m, b)).fold(0.0, f64::max);
    for _ in 0..cfg.prox_bisection_iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if multipliers(mid) > k_bar as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    apply(&mut out, 0.5 * (lo + hi));
    for (&j, &b) in free.iter().zip(&mags) {
        if b == 0.0 {
            out[j] = 0.0;
        }
    }
    out
}

/// `prox_{ρg}(β) = β − ρ prox_{g*/ρ}(β/ρ)`.
pub fn oracle_prox_g(ctx: &PerspectiveContext, rho: f64, beta: &Array1<f64>, cfg: &OracleConfig) -> Array1<f64> {
    let scaled = beta / rho;
    beta - &(oracle_prox_conjugate(ctx, 1.0 / rho, &scaled, cfg) * rho)
}

/// Objective `½‖a − β‖² + ρ g*(a)` of the conjugate prox, with `g*` from the
/// vertex enumeration.
pub fn conjugate_prox_objective(ctx: &PerspectiveContext, rho: f64, beta: &Array1<f64>, a: &Array1<f64>) -> f64 {
    let d = a - beta;
    0.5 * d.dot(&d) + rho * oracle_g_conjugate_enumerate(ctx, a)
}

#[derive(Debug, Clone)]
pub struct OracleRelaxation {
    /// `F(Xβ) + 2λ₂ g(β)` at the returned point.
    pub value: f64,
    pub beta: Array1<f64>,
    pub iterations: usize,
}

/// Long-run proximal gradient on the node relaxation with backtracking on the
/// step, using [`oracle_prox_g`] and [`oracle_g_waterfilling`].
pub fn oracle_relaxation(inst: &ProblemInstance, ctx: &PerspectiveContext, cfg: &OracleConfig) -> OracleRelaxation {
    let two_l2 = 2.0 * inst.lambda2;
    let score = |beta: &Array1<f64>| {
        losses::loss_value(inst.loss, &inst.x.dot(beta), &inst.y) + two_l2 * oracle_g_waterfilling(ctx, beta, cfg)
    };
    let mut beta = Array1::zeros(inst.p());
    let mut lip = 1.0f64;
    let mut iterations = 0;
    for it in 1..=cfg.relaxation_max_iters {
        iterations = it;
        let z = inst.x.dot(&beta);
        let fz = losses::loss_value(inst.loss, &z, &inst.y);
        let grad = inst.x.t().dot(&losses::loss_gradient(inst.loss, &z, &inst.y));
        let next = loop {
            let trial = oracle_prox_g(ctx, two_l2 / lip, &(&beta - &(&grad / lip)), cfg);
            let d = &trial - &beta;
            let model = fz + grad.dot(&d) + 0.5 * lip * d.dot(&d);
            let actual = losses::loss_value(inst.loss, &inst.x.dot(&trial), &inst.y);
            if actual <= model + 1e-13 * model.abs().max(1.0) {
                break trial;
            }
            lip *= 2.0;
        };
        let moved = (&next - &beta).mapv(|v| v * v).sum().sqrt();
        let scale = next.dot(&next).sqrt().max(1.0);
        beta = next;
        if moved <= cfg.relaxation_step_tol * scale {
            break;
        }
    }
    OracleRelaxation {
        value: score(&beta),
        beta,
        iterations,
    }
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub objective: f64,
    /// Sorted 0-based support of the best fit.
    pub support: Vec<usize>,
    pub beta: Array1<f64>,
    pub supports_enumerated: usize,
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r.min(n));
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Number of supports of size at most `k` among `p` coordinates.
pub fn support_count(p: usize, k: usize) -> u128 {
    (0..=k.min(p)).map(|r| binomial(p, r)).sum()
}

/// Best box-constrained fit over every support of size `≤ k`.
pub fn oracle_certify_enumerate(inst: &ProblemInstance, cfg: &OracleConfig) -> Result<Enumeration> {
    let p = inst.p();
    let k = inst.k.min(p);
    let total = support_count(p, k);
    if total > cfg.enumerate_limit {
        return Err(Error::InstanceTooLarge {
            supports: total,
            limit: cfg.enumerate_limit,
        });
    }
    let zero = Array1::zeros(p);
    let mut best = Enumeration {
        objective: inst.objective(&zero),
        support: Vec::new(),
        beta: zero,
        supports_enumerated: 1,
    };
    let mut support: Vec<usize> = Vec::with_capacity(k);
    for size in 1..=k {
        support.clear();
        support.extend(0..size);
        loop {
            let beta = box_constrained_fit_with(inst, &support, None, cfg.fit_tol, cfg.fit_max_iters);
            let obj = inst.objective(&beta);
            best.supports_enumerated += 1;
            if obj < best.objective {
                best.objective = obj;
                best.support = support.clone();
                best.beta = beta;
            }
            // next combination in lexicographic order
            let Some(i) = (0..size).rev().find(|&i| support[i] < p - size + i) else {
                break;
            };
            support[i] += 1;
            for t in i + 1..size {
                support[t] = support[t - 1] + 1;
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{LossKind, NodeState};
    use ndarray::{array, Array2};

    fn cfg() -> OracleConfig {
        OracleConfig::default()
    }

    #[test]
    fn waterfilling_values() {
        let root = PerspectiveContext::root(2, 1, 2.0).unwrap();
        assert_eq!(oracle_g_waterfilling(&root, &array![0.0, 0.0], &cfg()), 0.0);
        let v = oracle_g_waterfilling(&root, &array![1.4, 0.6], &cfg());
        assert!((v - 2.0).abs() < 1e-12, "{v}");
        let tight = PerspectiveContext::root(2, 1, 1.0).unwrap();
        assert_eq!(oracle_g_waterfilling(&tight, &array![0.8, 0.4], &cfg()), f64::INFINITY);
        let slack = PerspectiveContext::root(2, 2, 1.0).unwrap();
        assert!((oracle_g_waterfilling(&slack, &array![0.5, 0.5], &cfg()) - 0.25).abs() < 1e-15);

        let node = NodeState::from_sets(3, &[], &[0], 2).unwrap();
        let ctx = PerspectiveContext::new(&node, 2, 1.0).unwrap();
        let v = oracle_g_waterfilling(&ctx, &array![0.5, 0.3, 0.2], &cfg());
        assert!((v - 0.25).abs() < 1e-12, "{v}");
    }

    #[test]
    fn conjugate_enumeration() {
        let root = PerspectiveContext::root(3, 2, 1.0).unwrap();
        let v = oracle_g_conjugate_enumerate(&root, &array![0.5, 2.0, 0.1]);
        assert!((v - 1.625).abs() < 1e-15);
    }

    #[test]
    fn prox_conjugate_examples() {
        let root = PerspectiveContext::root(2, 1, 1.0).unwrap();
        let a = oracle_prox_conjugate(&root, 1.0, &array![3.0, 3.0], &cfg());
        assert!((&a - &array![2.5, 2.5]).iter().all(|d| d.abs() < 1e-12), "{a}");
        let a = oracle_prox_conjugate(&root, 1.0, &array![3.0, 0.2], &cfg());
        assert!((&a - &array![2.0, 0.2]).iter().all(|d| d.abs() < 1e-12), "{a}");
        let a = oracle_prox_conjugate(&root, 1.0, &array![0.0, 0.0], &cfg());
        assert_eq!(a, array![0.0, 0.0]);
        let b = oracle_prox_g(&root, 1.0, &array![3.0, 3.0], &cfg());
        assert!((&b - &array![0.5, 0.5]).iter().all(|d| d.abs() < 1e-12), "{b}");
    }

    #[test]
    fn relaxation_with_zero_labels() {
        let inst =
            ProblemInstance::new(Array2::eye(3), Array1::zeros(3), LossKind::Squared, 1.0, 1.0, 1).unwrap();
        let ctx = PerspectiveContext::root(3, 1, 1.0).unwrap();
        let r = oracle_relaxation(&inst, &ctx, &cfg());
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(support_count(12, 2), 79);
        assert_eq!(support_count(3, 5), 8);
        let x = Array2::from_shape_fn((12, 12), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y = Array1::from_shape_fn(12, |i| i as f64 * 0.3 - 1.0);
        let inst = ProblemInstance::new(x, y.clone(), LossKind::Squared, 1.0, 2.0, 2).unwrap();
        let e = oracle_certify_enumerate(&inst, &cfg()).unwrap();
        assert_eq!(e.supports_enumerated, 79);
        assert!(e.support.len() <= 2);

        let inst0 = ProblemInstance { k: 0, ..inst.clone() };
        let e0 = oracle_certify_enumerate(&inst0, &cfg()).unwrap();
        assert_eq!(e0.objective, 0.5 * y.dot(&y));
        assert!(e0.support.is_empty());

        let small = OracleConfig {
            enumerate_limit: 10,
            ..cfg()
        };
        assert!(matches!(
            oracle_certify_enumerate(&inst, &small),
            Err(Error::InstanceTooLarge { supports: 79, limit: 10 })
        ));
    }

    #[test]
    fn rejects_zero_budget() {
        let bad = OracleConfig {
            prox_bisection_iters: 0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
