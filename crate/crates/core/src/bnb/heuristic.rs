//! Restricted refits, beam-search incumbents and the branching rule.

use std::collections::HashSet;

use ndarray::{Array1, Axis};

use crate::error::{Error, Result};
use crate::losses::{self, curvature_upper, spectral_norm_sq};
use crate::problem::{Fixing, NodeState, ProblemInstance};

/// A feasible point of the cardinality-constrained problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    /// Sorted 0-based indices allowed to be nonzero.
    pub support: Vec<usize>,
    pub beta: Array1<f64>,
    /// `f(Xβ, y) + λ₂‖β‖²`.
    pub objective: f64,
}

impl Incumbent {
    pub fn zero(inst: &ProblemInstance) -> Incumbent {
        let beta = Array1::zeros(inst.p());
        Incumbent {
            support: Vec::new(),
            objective: inst.objective(&beta),
            beta,
        }
    }

    pub fn nonzeros(&self) -> impl Iterator<Item = usize> + '_ {
        self.support.iter().copied().filter(|&j| self.beta[j] != 0.0)
    }
}

pub const FIT_TOL: f64 = 1e-8;
pub const FIT_MAX_ITERS: usize = 5000;

/// Minimizes `f(Xβ, y) + λ₂‖β‖²` over `β` supported on `support` with
/// `‖β‖∞ ≤ M`.
pub fn box_constrained_fit(inst: &ProblemInstance, support: &[usize]) -> Array1<f64> {
    box_constrained_fit_with(inst, support, None, FIT_TOL, FIT_MAX_ITERS)
}

/// Accelerated projected gradient (clip to the box) with gradient-based
/// restarts, stopped once the gradient mapping `L‖β − clip(β − ∇/L)‖` falls
/// below `tol`.
pub fn box_constrained_fit_with(
    inst: &ProblemInstance,
    support: &[usize],
    init: Option<&Array1<f64>>,
    tol: f64,
    max_iters: usize,
) -> Array1<f64> {
    let p = inst.p();
    let mut full = Array1::zeros(p);
    if support.is_empty() {
        return full;
    }
    let m = inst.m;
    let lambda2 = inst.lambda2;
    let xs = inst.x.select(Axis(1), support);
    let lip = curvature_upper(inst.loss) * spectral_norm_sq(&xs).unwrap_or_else(|_| {
        // Frobenius norm always dominates the spectral norm
        xs.iter().map(|v| v * v).sum()
    }) + 2.0 * lambda2;

    let clip = |v: f64| v.clamp(-m, m);
    let mut b: Array1<f64> = match init {
        Some(w) => support.iter().map(|&j| clip(w[j])).collect(),
        None => Array1::zeros(support.len()),
    };
    let mut y = b.clone();
    let mut momentum = 1.0f64;
    for _ in 0..max_iters {
        let zy = xs.dot(&y);
        let grad = xs.t().dot(&losses::loss_gradient(inst.loss, &zy, &inst.y)) + &y * (2.0 * lambda2);
        let next: Array1<f64> = (&y - &(grad / lip)).mapv(clip);
        let step = &next - &y;
        let residual = lip * step.dot(&step).sqrt();
        // restart when momentum points against the gradient step
        let restart = step.dot(&(&next - &b)) < 0.0;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        if restart {
            momentum = 1.0;
            y.assign(&next);
        } else {
            y = &next + &((&next - &b) * ((momentum - 1.0) / t_next));
            momentum = t_next;
        }
        b = next;
        if residual <= tol {
            break;
        }
    }
    for (&j, &v) in support.iter().zip(b.iter()) {
        full[j] = v;
    }
    full
}

fn refit(inst: &ProblemInstance, support: Vec<usize>, init: Option<&Array1<f64>>) -> Incumbent {
    let beta = box_constrained_fit_with(inst, &support, init, FIT_TOL, FIT_MAX_ITERS);
    Incumbent {
        objective: inst.objective(&beta),
        support,
        beta,
    }
}

/// `∇_β [f(Xβ, y) + λ₂‖β‖²]`.
fn objective_gradient(inst: &ProblemInstance, beta: &Array1<f64>) -> Array1<f64> {
    let z = inst.x.dot(beta);
    inst.x.t().dot(&losses::loss_gradient(inst.loss, &z, &inst.y)) + beta * (2.0 * inst.lambda2)
}

fn better(a: &Incumbent, b: &Incumbent) -> std::cmp::Ordering {
    a.objective
        .total_cmp(&b.objective)
        .then_with(|| a.support.cmp(&b.support))
}

/// Beam search over supports that contain `J1` and otherwise draw from `Jf`.
///
/// Each beam member is extended by its `beam_width` free coordinates with the
/// largest objective-gradient magnitude; all extensions are refit and the
/// best `beam_width` survive. Stops at `min(k, |J1| + |Jf|)` nonzeros.
pub fn incumbent_search(inst: &ProblemInstance, node: &NodeState, beam_width: usize) -> Incumbent {
    let beam_width = beam_width.max(1);
    let ones: Vec<usize> = node.ones().collect();
    let target = inst.k.min(node.n_one() + node.n_free());

    let start = refit(inst, ones, None);
    let mut best = start.clone();
    let mut beam = vec![start];
    let mut size = node.n_one();
    while size < target {
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut next: Vec<Incumbent> = Vec::new();
        for member in &beam {
            let grad = objective_gradient(inst, &member.beta);
            let mut cands: Vec<usize> = node
                .free()
                .filter(|j| member.support.binary_search(j).is_err())
                .collect();
            cands.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()).then(a.cmp(&b)));
            for &j in cands.iter().take(beam_width) {
                let mut support = member.support.clone();
                let pos = support.binary_search(&j).unwrap_err();
                support.insert(pos, j);
                if !seen.insert(support.clone()) {
                    continue;
                }
                next.push(refit(inst, support, Some(&member.beta)));
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by(better);
        next.truncate(beam_width);
        if better(&next[0], &best).is_lt() {
            best = next[0].clone();
        }
        beam = next;
        size += 1;
    }
    best
}

/// Among the incumbent's nonzeros in `Jf`, the one whose removal raises the
/// objective the most (no refit). Ties go to the smaller index.
pub fn select_branch_variable(
    inst: &ProblemInstance,
    incumbent: &Incumbent,
    node: &NodeState,
) -> Result<usize> {
    let z = inst.x.dot(&incumbent.beta);
    let ridge = incumbent.beta.dot(&incumbent.beta);
    let mut choice: Option<(usize, f64)> = None;
    for j in incumbent.nonzeros() {
        if node.fixing(j) != Fixing::Free {
            continue;
        }
        let bj = incumbent.beta[j];
        let zj = &z - &(&inst.x.column(j) * bj);
        let dropped =
            losses::loss_value(inst.loss, &zj, &inst.y) + inst.lambda2 * (ridge - bj * bj);
        let score = dropped - incumbent.objective;
        if choice.is_none_or(|(_, s)| score > s) {
            choice = Some((j, score));
        }
    }
    choice.map(|(j, _)| j).ok_or(Error::NoBranchCandidate)
}
