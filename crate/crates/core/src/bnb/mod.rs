//! Best-first branch-and-bound over the support partition.
//!
//! Each node runs a beam-search incumbent, solves its perspective relaxation
//! to a lower bound, and is either pruned, closed (nothing left to branch on)
//! or split on the free coordinate whose removal from the node incumbent
//! hurts the objective most. The queue is ordered by the bound inherited from
//! the parent, so the smallest open key is always a valid global lower bound.

mod heuristic;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perspective::PerspectiveContext;
use crate::problem::{NodeState, ProblemInstance};
use crate::solver::{self, RelaxationSolver, SolverConfig};

pub use heuristic::{
    box_constrained_fit, box_constrained_fit_with, incumbent_search, select_branch_variable, Incumbent,
};

/// Which relaxation supplies node bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// Perspective relaxation with the cardinality budget.
    Perspective,
    /// Box-constrained ridge bound that ignores the budget. Valid but weak;
    /// useful as a baseline for node counts.
    BoxRidge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BnbConfig {
    /// Stop once `(upper − lower) / max(|upper|, 1e-12)` is at most this.
    pub tol_rel: f64,
    pub time_limit: f64,
    pub node_limit: usize,
    pub beam_width: usize,
    /// Start each child solve from the parent's relaxation iterate.
    pub warm_start: bool,
    /// Run the beam search at every node instead of only at the root.
    pub incumbent_every_node: bool,
    pub bound: BoundMode,
    pub solver: SolverConfig,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            tol_rel: 1e-6,
            time_limit: f64::INFINITY,
            node_limit: 1_000_000,
            beam_width: 5,
            warm_start: true,
            incumbent_every_node: true,
            bound: BoundMode::Perspective,
            solver: SolverConfig::default(),
        }
    }
}

impl BnbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel >= 0.0) {
            return Err(Error::InvalidConfig(format!("tol_rel must be nonnegative, got {}", self.tol_rel)));
        }
        if self.time_limit.is_nan() || self.time_limit < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "time_limit must be nonnegative, got {}",
                self.time_limit
            )));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam_width must be at least 1".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    /// Every node was pruned or closed.
    Optimal,
    /// The relative gap reached `tol_rel` with nodes still open.
    GapLimit,
    TimeLimit,
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub status: Status,
    pub incumbent: Incumbent,
    /// Valid lower bound on the optimal value of the whole problem.
    pub lower_bound: f64,
    pub gap_rel: f64,
    pub nodes_explored: usize,
    pub nodes_pruned: usize,
    pub max_depth: usize,
    /// Wall time spent inside relaxation solves.
    pub lb_seconds: f64,
    pub total_seconds: f64,
    /// Global bounds after each explored node.
    pub progress: Vec<Progress>,
}

/// Snapshot of the global bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub nodes_explored: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl Certificate {
    pub fn objective(&self) -> f64 {
        self.incumbent.objective
    }

    pub fn report(&self, config: &BnbConfig) -> CertificateReport {
        CertificateReport {
            status: self.status,
            objective: self.incumbent.objective,
            lower_bound: self.lower_bound,
            gap_rel: self.gap_rel,
            support: self.incumbent.nonzeros().map(|j| j + 1).collect(),
            beta: self.incumbent.nonzeros().map(|j| (j + 1, self.incumbent.beta[j])).collect(),
            nodes_explored: self.nodes_explored,
            nodes_pruned: self.nodes_pruned,
            max_depth: self.max_depth,
            lb_seconds: self.lb_seconds,
            total_seconds: self.total_seconds,
            config: config.clone(),
        }
    }
}

/// Serializable certificate. Indices are 1-based; `beta` lists the nonzero
/// `(index, value)` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub status: Status,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap_rel: f64,
    pub support: Vec<usize>,
    pub beta: Vec<(usize, f64)>,
    pub nodes_explored: usize,
    pub nodes_pruned: usize,
    pub max_depth: usize,
    pub lb_seconds: f64,
    pub total_seconds: f64,
    pub config: BnbConfig,
}

pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    ((upper - lower) / upper.abs().max(1e-12)).max(0.0)
}

// A bound at or above this is no better than the incumbent.
fn prune_threshold(incumbent: f64) -> f64 {
    if incumbent > 0.0 {
        incumbent * (1.0 - 1e-12)
    } else {
        incumbent - 1e-9
    }
}

struct Entry {
    bound: f64,
    seq: u64,
    node: NodeState,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then(self.seq.cmp(&other.seq))
    }
}

/// Solves the cardinality-constrained problem to relative gap `tol_rel`.
pub fn certify(inst: &ProblemInstance, config: &BnbConfig) -> Result<Certificate> {
    config.validate()?;
    let started = Instant::now();
    let p = inst.p();
    let k = inst.k;
    let bound_k = match config.bound {
        BoundMode::Perspective => k,
        BoundMode::BoxRidge => p,
    };
    let relax = RelaxationSolver::new(inst)?;

    let root = NodeState::root(p)?;
    // a dual point at β = 0 bounds the root before any solve
    let root_ctx = PerspectiveContext::new(&root, bound_k, inst.m)?;
    let zeta0 = solver::induced_dual(inst, &Array1::zeros(p));
    let root_bound = solver::dual_objective(inst, &root_ctx, &zeta0);

    let mut incumbent = Incumbent::zero(inst);
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Reverse(Entry {
        bound: root_bound,
        seq,
        node: root,
    }));

    let mut closed_lb = f64::INFINITY;
    let mut nodes_explored = 0usize;
    let mut nodes_pruned = 0usize;
    let mut max_depth = 0usize;
    let mut lb_seconds = 0.0;
    let mut progress = Vec::new();

    let status = loop {
        let open_lb = heap.peek().map_or(f64::INFINITY, |Reverse(e)| e.bound);
        if heap.is_empty() {
            break Status::Optimal;
        }
        let lb = open_lb.min(closed_lb).min(incumbent.objective);
        if nodes_explored > 0 {
            progress.push(Progress {
                nodes_explored,
                lower_bound: lb,
                upper_bound: incumbent.objective,
            });
            if relative_gap(incumbent.objective, lb) <= config.tol_rel {
                break Status::GapLimit;
            }
        }
        let elapsed = started.elapsed().as_secs_f64();
        if elapsed >= config.time_limit {
            break Status::TimeLimit;
        }
        if nodes_explored >= config.node_limit {
            break Status::NodeLimit;
        }

        let Reverse(Entry { bound, node, .. }) = heap.pop().expect("queue is nonempty");
        if bound >= prune_threshold(incumbent.objective) {
            closed_lb = closed_lb.min(bound);
            nodes_pruned += 1;
            continue;
        }
        nodes_explored += 1;
        max_depth = max_depth.max(node.depth);

        let local = (config.incumbent_every_node || nodes_explored == 1)
            .then(|| incumbent_search(inst, &node, config.beam_width));
        if let Some(cand) = &local {
            if cand.objective < incumbent.objective {
                incumbent = cand.clone();
            }
        }

        let ctx = PerspectiveContext::new(&node, bound_k, inst.m)?;
        let mut node_cfg = config.solver.clone();
        node_cfg.tol_gap = node_cfg
            .tol_gap
            .min(0.1 * config.tol_rel * incumbent.objective.abs().max(1e-12))
            .max(f64::MIN_POSITIVE);
        node_cfg.max_seconds = node_cfg.max_seconds.min((config.time_limit - elapsed).max(0.0));
        node_cfg.record_trace = false;
        let warm = if config.warm_start { node.warm_start.as_ref() } else { None };
        let res = relax.solve(&ctx, &node_cfg, warm, Some(incumbent.objective))?;
        lb_seconds += res.seconds;
        let node_lb = res.lower_bound.max(bound);

        if node_lb >= prune_threshold(incumbent.objective) {
            closed_lb = closed_lb.min(node_lb);
            nodes_pruned += 1;
            continue;
        }
        if node.n_free() == 0 || node.k_bar(k) >= node.n_free() {
            // no cardinality decision left: the refit on J1 ∪ Jf is the node optimum
            if local.is_none() {
                let cand = incumbent_search(inst, &node, config.beam_width);
                if cand.objective < incumbent.objective {
                    incumbent = cand;
                }
            }
            closed_lb = closed_lb.min(node_lb);
            continue;
        }

        let source = local.as_ref().unwrap_or(&incumbent);
        let j = match select_branch_variable(inst, source, &node) {
            Ok(j) => j,
            Err(Error::NoBranchCandidate) => fallback_branch(&node, &res.state.beta),
            Err(e) => return Err(e),
        };
        for value in [true, false] {
            let mut child = node.fix(j, value, k)?;
            child.parent_bound = Some(node_lb);
            if config.warm_start {
                child.warm_start = Some(res.state.beta.clone());
            }
            seq += 1;
            heap.push(Reverse(Entry {
                bound: node_lb,
                seq,
                node: child,
            }));
        }
    };

    let open_lb = heap
        .iter()
        .map(|Reverse(e)| e.bound)
        .fold(f64::INFINITY, f64::min);
    let lower_bound = open_lb.min(closed_lb).min(incumbent.objective);
    progress.push(Progress {
        nodes_explored,
        lower_bound,
        upper_bound: incumbent.objective,
    });
    Ok(Certificate {
        status,
        gap_rel: relative_gap(incumbent.objective, lower_bound),
        incumbent,
        lower_bound,
        nodes_explored,
        nodes_pruned,
        max_depth,
        lb_seconds,
        total_seconds: started.elapsed().as_secs_f64(),
        progress,
    })
}

// Free coordinate with the largest relaxed magnitude; ties to the smaller index.
fn fallback_branch(node: &NodeState, relaxed: &Array1<f64>) -> usize {
    node.free()
        .max_by(|&a, &b| relaxed[a].abs().total_cmp(&relaxed[b].abs()).then(b.cmp(&a)))
        .expect("branching requires a free variable")
}
