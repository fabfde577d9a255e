//! Primal–dual first-order solver for the node relaxation
//!
//! ```text
//! Φ(β) = F(Xβ) + G(β),           G = 2λ₂ g
//! Ψ(ζ) = −F*(−ζ) − G*(Xᵀζ),      G*(u) = 2λ₂ g*(u / 2λ₂)
//! ```
//!
//! Each iterate `β` induces the dual point `ζ = −∇F(Xβ)`, so `Φ(β) − Ψ(ζ)` is
//! an exactly computable bound on suboptimality and `Ψ(ζ)` is a valid lower
//! bound on the relaxation at every iteration. With [`Restart::GapBased`] the
//! momentum of FISTA is reset each time the gap has shrunk by a factor `η`
//! relative to the start of the current epoch.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{self, curvature_upper, spectral_norm_sq};
use crate::perspective::{self, PerspectiveContext};
use crate::problem::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Proximal gradient with the global step `1/L`.
    Pgd,
    /// FISTA with the global step `1/L`.
    Fista,
    /// FISTA with backtracking on `L`.
    FistaLinesearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restart {
    /// Reset momentum once the duality gap has contracted by `eta > 1`.
    GapBased { eta: f64 },
    /// Reset momentum whenever the primal objective increases.
    FunctionHeuristic,
    None,
}

/// Default gap contraction factor `e³`.
pub fn default_eta() -> f64 {
    3f64.exp()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub restart: Restart,
    /// Absolute duality-gap tolerance.
    pub tol_gap: f64,
    pub max_iters: usize,
    pub max_seconds: f64,
    pub linesearch_growth: f64,
    pub linesearch_shrink: f64,
    /// Evaluate the dual objective every this many iterations.
    pub eval_every: usize,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Fista,
            restart: Restart::GapBased { eta: default_eta() },
            tol_gap: 1e-6,
            max_iters: 200_000,
            max_seconds: f64::INFINITY,
            linesearch_growth: 2.0,
            linesearch_shrink: 1.5,
            eval_every: 1,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if let Restart::GapBased { eta } = self.restart {
            if !(eta > 1.0 && eta.is_finite()) {
                return bad(format!("restart factor eta must exceed 1, got {eta}"));
            }
        }
        if !(self.tol_gap > 0.0) {
            return bad(format!("tol_gap must be positive, got {}", self.tol_gap));
        }
        if !(self.linesearch_growth > 1.0 && self.linesearch_shrink > 1.0) {
            return bad("line-search factors must exceed 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if self.max_seconds.is_nan() || self.max_seconds < 0.0 {
            return bad(format!("max_seconds must be nonnegative, got {}", self.max_seconds));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PrimalDualState {
    pub beta: Array1<f64>,
    pub zeta: Array1<f64>,
    pub phi: f64,
    pub psi: f64,
    pub gap: f64,
    pub iter: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GapTol,
    IterLimit,
    TimeLimit,
    PrimalBelowIncumbent,
    DualAboveIncumbent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub phi: f64,
    pub psi: f64,
    pub gap: f64,
    pub restarted: bool,
    /// Best dual value so far; not part of the CSV schema.
    pub lower_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: PrimalDualState,
    /// Largest dual objective seen.
    pub lower_bound: f64,
    pub termination: Termination,
    pub trace: Option<Vec<TraceRecord>>,
    pub seconds: f64,
    /// Step-size constant used at the final iteration.
    pub lipschitz: f64,
}

/// `Φ(β) = F(Xβ) + 2λ₂ g(β)`.
pub fn primal_objective(inst: &ProblemInstance, ctx: &PerspectiveContext, beta: &Array1<f64>) -> f64 {
    let g = perspective::eval_g(ctx, beta);
    if !g.is_finite() {
        return f64::INFINITY;
    }
    let z = inst.x.dot(beta);
    losses::loss_value(inst.loss, &z, &inst.y) + 2.0 * inst.lambda2 * g
}

/// `ζ = −∇F(Xβ)`.
pub fn induced_dual(inst: &ProblemInstance, beta: &Array1<f64>) -> Array1<f64> {
    let z = inst.x.dot(beta);
    -losses::loss_gradient(inst.loss, &z, &inst.y)
}

/// `G*(u) = 2λ₂ g*(u / 2λ₂)`.
pub fn regularizer_conjugate(ctx: &PerspectiveContext, lambda2: f64, u: &Array1<f64>) -> f64 {
    let scale = 2.0 * lambda2;
    scale * perspective::eval_g_conjugate(ctx, &(u / scale))
}

/// `Ψ(ζ) = −F*(−ζ) − G*(Xᵀζ)`; `−∞` when `−ζ ∉ dom F*`.
pub fn dual_objective(inst: &ProblemInstance, ctx: &PerspectiveContext, zeta: &Array1<f64>) -> f64 {
    let neg = -zeta;
    let f_conj = losses::loss_conjugate(inst.loss, &neg, &inst.y);
    if !f_conj.is_finite() {
        return f64::NEG_INFINITY;
    }
    let u = inst.x.t().dot(zeta);
    -f_conj - regularizer_conjugate(ctx, inst.lambda2, &u)
}

/// `⌈log_η(gap0 / tol)⌉`, the number of restart epochs needed to reach `tol`
/// when every epoch contracts the gap by `η`.
pub fn restart_budget(eta: f64, gap0: f64, tol: f64) -> usize {
    assert!(eta > 1.0 && gap0 > tol && tol > 0.0);
    let epochs = (gap0 / tol).ln() / eta.ln();
    // shave round-off so exact powers of eta are not bumped up
    (epochs - 1e-12).ceil().max(0.0) as usize
}

/// Relaxation solver bound to one instance, with `L = curvature · ‖X‖₂²`
/// computed once.
#[derive(Debug, Clone)]
pub struct RelaxationSolver<'a> {
    inst: &'a ProblemInstance,
    lipschitz: f64,
}

struct Evaluated {
    phi: f64,
    psi: f64,
    zeta: Array1<f64>,
}

impl<'a> RelaxationSolver<'a> {
    pub fn new(inst: &'a ProblemInstance) -> Result<Self> {
        let lipschitz = curvature_upper(inst.loss) * spectral_norm_sq(&inst.x)?;
        Ok(RelaxationSolver { inst, lipschitz })
    }

    pub fn with_lipschitz(inst: &'a ProblemInstance, lipschitz: f64) -> Self {
        RelaxationSolver { inst, lipschitz }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Moves a (possibly parent-node) iterate into `dom g` at this node.
    pub fn project_warm_start(&self, ctx: &PerspectiveContext, warm: &Array1<f64>) -> Array1<f64> {
        let mut w = warm.clone();
        for &j in ctx.zeros() {
            w[j] = 0.0;
        }
        perspective::prox_g(ctx, 1e-8, &w)
    }

    fn evaluate(
        &self,
        ctx: &PerspectiveContext,
        beta: &Array1<f64>,
        z: ArrayView1<f64>,
        with_dual: bool,
    ) -> Result<Evaluated> {
        let inst = self.inst;
        let eval = losses::evaluate(inst.loss, z, inst.y.view())?;
        let phi = eval.value + 2.0 * inst.lambda2 * perspective::eval_g(ctx, beta);
        if !with_dual {
            return Ok(Evaluated {
                phi,
                psi: f64::NEG_INFINITY,
                zeta: Array1::zeros(0),
            });
        }
        let zeta = -eval.gradient;
        let psi = dual_objective(inst, ctx, &zeta);
        Ok(Evaluated { phi, psi, zeta })
    }

    pub fn solve(
        &self,
        ctx: &PerspectiveContext,
        config: &SolverConfig,
        warm_start: Option<&Array1<f64>>,
        incumbent_value: Option<f64>,
    ) -> Result<SolveResult> {
        config.validate()?;
        let inst = self.inst;
        let p = inst.p();
        if ctx.p() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: ctx.p(),
            });
        }
        let started = Instant::now();
        let two_l2 = 2.0 * inst.lambda2;

        let mut x = match warm_start {
            Some(w) if w.len() == p => self.project_warm_start(ctx, w),
            Some(w) => {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: w.len(),
                })
            }
            None => Array1::zeros(p),
        };
        let mut zx = inst.x.dot(&x);
        let first = self.evaluate(ctx, &x, zx.view(), true)?;
        if !first.phi.is_finite() {
            return Err(Error::NonFiniteIterate { iteration: 0 });
        }

        let mut trace = config.record_trace.then(Vec::new);
        let mut state = PrimalDualState {
            gap: first.phi - first.psi,
            beta: x.clone(),
            zeta: first.zeta,
            phi: first.phi,
            psi: first.psi,
            iter: 0,
            restarts: 0,
        };
        if let Some(t) = trace.as_mut() {
            t.push(TraceRecord {
                iter: 0,
                phi: state.phi,
                psi: state.psi,
                gap: state.gap,
                restarted: false,
                lower_bound: state.psi,
            });
        }
        let mut lower_bound = state.psi;
        let mut epoch_gap = state.gap;
        let mut lipschitz = self.lipschitz.max(f64::MIN_POSITIVE);

        let check = |state: &PrimalDualState, lower_bound: f64| -> Option<Termination> {
            if let Some(inc) = incumbent_value {
                if lower_bound >= inc {
                    return Some(Termination::DualAboveIncumbent);
                }
            }
            if state.gap <= config.tol_gap {
                return Some(Termination::GapTol);
            }
            if let Some(inc) = incumbent_value {
                if state.phi <= inc {
                    return Some(Termination::PrimalBelowIncumbent);
                }
            }
            None
        };

        let finish = |state: PrimalDualState,
                      lower_bound: f64,
                      termination: Termination,
                      trace: Option<Vec<TraceRecord>>,
                      lipschitz: f64| SolveResult {
            state,
            lower_bound,
            termination,
            trace,
            seconds: started.elapsed().as_secs_f64(),
            lipschitz,
        };

        if let Some(term) = check(&state, lower_bound) {
            return Ok(finish(state, lower_bound, term, trace, lipschitz));
        }

        let mut y = x.clone();
        let mut zy = zx.clone();
        let mut momentum = 1.0f64;
        let mut phi_prev = state.phi;

        for iter in 1..=config.max_iters {
            if started.elapsed().as_secs_f64() > config.max_seconds {
                state.iter = iter - 1;
                return Ok(finish(state, lower_bound, Termination::TimeLimit, trace, lipschitz));
            }

            let at_y = losses::evaluate(inst.loss, zy.view(), inst.y.view())?;
            let grad = inst.x.t().dot(&at_y.gradient);

            let (x_new, zx_new) = loop {
                let step = 1.0 / lipschitz;
                let trial = perspective::prox_g(ctx, two_l2 * step, &(&y - &(&grad * step)));
                let z_trial = inst.x.dot(&trial);
                if config.method != Method::FistaLinesearch {
                    break (trial, z_trial);
                }
                let d = &trial - &y;
                let model = at_y.value + grad.dot(&d) + 0.5 * lipschitz * d.dot(&d);
                let actual = losses::loss_value(inst.loss, &z_trial, &inst.y);
                if actual <= model + 1e-12 * model.abs().max(1.0) {
                    break (trial, z_trial);
                }
                lipschitz *= config.linesearch_growth;
            };

            let with_dual = iter % config.eval_every == 0;
            let ev = self.evaluate(ctx, &x_new, zx_new.view(), with_dual)?;
            if !ev.phi.is_finite() {
                return Err(Error::NonFiniteIterate { iteration: iter });
            }

            // momentum extrapolation
            match config.method {
                Method::Pgd => {
                    y.assign(&x_new);
                    zy.assign(&zx_new);
                }
                Method::Fista | Method::FistaLinesearch => {
                    let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                    let c = (momentum - 1.0) / next;
                    y = &x_new + &((&x_new - &x) * c);
                    zy = &zx_new + &((&zx_new - &zx) * c);
                    momentum = next;
                }
            }
            x = x_new;
            zx = zx_new;

            state.beta.assign(&x);
            state.phi = ev.phi;
            state.iter = iter;
            let mut restarted = false;
            if with_dual {
                state.psi = ev.psi;
                state.zeta = ev.zeta;
                state.gap = ev.phi - ev.psi;
                lower_bound = lower_bound.max(ev.psi);
                if let Restart::GapBased { eta } = config.restart {
                    restarted = state.gap <= epoch_gap / eta;
                }
            }
            if config.restart == Restart::FunctionHeuristic {
                restarted = ev.phi > phi_prev;
            }
            phi_prev = ev.phi;
            if restarted {
                momentum = 1.0;
                y.assign(&x);
                zy.assign(&zx);
                state.restarts += 1;
                if with_dual {
                    epoch_gap = state.gap;
                }
                if config.method == Method::FistaLinesearch {
                    lipschitz /= config.linesearch_shrink;
                }
            }

            if with_dual {
                if let Some(t) = trace.as_mut() {
                    t.push(TraceRecord {
                        iter,
                        phi: state.phi,
                        psi: state.psi,
                        gap: state.gap,
                        restarted,
                        lower_bound,
                    });
                }
                if let Some(term) = check(&state, lower_bound) {
                    return Ok(finish(state, lower_bound, term, trace, lipschitz));
                }
            }
        }
        Ok(finish(state, lower_bound, Termination::IterLimit, trace, lipschitz))
    }
}

/// One-shot relaxation solve; computes the step-size constant on every call.
pub fn solve_relaxation(
    inst: &ProblemInstance,
    ctx: &PerspectiveContext,
    config: &SolverConfig,
    warm_start: Option<&Array1<f64>>,
    incumbent_value: Option<f64>,
) -> Result<SolveResult> {
    RelaxationSolver::new(inst)?.solve(ctx, config, warm_start, incumbent_value)
}

/// Writes `iter,phi,psi,gap,restarted` lines.
pub fn write_trace_csv<W: std::io::Write>(mut out: W, trace: &[TraceRecord]) -> std::io::Result<()> {
    writeln!(out, "iter,phi,psi,gap,restarted")?;
    for r in trace {
        writeln!(
            out,
            "{},{:.17e},{:.17e},{:.17e},{}",
            r.iter, r.phi, r.psi, r.gap, r.restarted as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_synthetic, LossKind, SyntheticSpec};
    use ndarray::{array, Array2};

    fn identity_instance(y: Array1<f64>, k: usize) -> ProblemInstance {
        let p = y.len();
        ProblemInstance::new(Array2::eye(p), y, LossKind::Squared, 1.0, 1.0, k).unwrap()
    }

    #[test]
    fn primal_objective_examples() {
        let inst = identity_instance(array![0.0, 0.0], 2);
        let ctx = PerspectiveContext::root(2, 2, 1.0).unwrap();
        assert_eq!(primal_objective(&inst, &ctx, &array![0.0, 0.0]), 0.0);
        assert!((primal_objective(&inst, &ctx, &array![0.5, 0.0]) - 0.375).abs() < 1e-15);
        assert_eq!(primal_objective(&inst, &ctx, &array![1.5, 0.0]), f64::INFINITY);
        let inst = identity_instance(array![1.0, -2.0], 2);
        assert!((primal_objective(&inst, &ctx, &array![0.0, 0.0]) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn induced_dual_examples() {
        let inst = identity_instance(array![1.0, -2.0], 1);
        assert_eq!(induced_dual(&inst, &array![0.0, 0.0]), array![1.0, -2.0]);
        assert_eq!(induced_dual(&inst, &array![1.0, -2.0]), array![0.0, 0.0]);
        let logit = ProblemInstance::new(
            Array2::eye(3),
            array![1.0, 1.0, 1.0],
            LossKind::Logistic,
            1.0,
            1.0,
            1,
        )
        .unwrap();
        assert_eq!(induced_dual(&logit, &Array1::zeros(3)), array![0.5, 0.5, 0.5]);
    }

    #[test]
    fn dual_at_zero() {
        let inst = identity_instance(array![1.0, -2.0], 1);
        let ctx = PerspectiveContext::root(2, 1, 1.0).unwrap();
        assert_eq!(dual_objective(&inst, &ctx, &Array1::zeros(2)), 0.0);
    }

    #[test]
    fn conjugate_scaling_small_u() {
        // k ≥ p root, |u| small: G*(u) = Σ u²/(4λ₂)
        let ctx = PerspectiveContext::root(3, 3, 1.0).unwrap();
        let u = array![0.3, -0.1, 0.2];
        for lambda2 in [0.5, 1.0, 3.0] {
            let expected = u.dot(&u) / (4.0 * lambda2);
            assert!((regularizer_conjugate(&ctx, lambda2, &u) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn restart_budget_examples() {
        assert_eq!(restart_budget(1f64.exp(), 1.0, 1e-6), 14);
        assert_eq!(restart_budget(2f64.exp(), 1.0, 1e-6), 7);
        let eta = 3f64.exp();
        assert_eq!(restart_budget(eta, 1e-6 * eta, 1e-6), 1);
    }

    #[test]
    fn zero_labels_converge_immediately() {
        let spec = SyntheticSpec {
            n: 30,
            p: 20,
            k_true: 2,
            ..Default::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        let inst = ProblemInstance::new(data.x, Array1::zeros(30), LossKind::Squared, 1.0, 2.0, 3)
            .unwrap();
        let ctx = PerspectiveContext::root(20, 3, 2.0).unwrap();
        let cfg = SolverConfig {
            tol_gap: 1e-10,
            ..Default::default()
        };
        let res = solve_relaxation(&inst, &ctx, &cfg, None, None).unwrap();
        assert_eq!(res.termination, Termination::GapTol);
        assert!(res.state.iter <= 2);
    }

    #[test]
    fn impossible_incumbent_prunes_at_start() {
        let spec = SyntheticSpec {
            n: 30,
            p: 20,
            k_true: 2,
            ..Default::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        let inst = data.instance(1.0, 2.0, 3).unwrap();
        let ctx = PerspectiveContext::root(20, 3, 2.0).unwrap();
        let psi0 = dual_objective(&inst, &ctx, &induced_dual(&inst, &Array1::zeros(20)));
        let res = solve_relaxation(&inst, &ctx, &SolverConfig::default(), None, Some(psi0 - 1.0))
            .unwrap();
        assert_eq!(res.termination, Termination::DualAboveIncumbent);
        assert_eq!(res.state.iter, 0);
    }

    #[test]
    fn loose_tolerance_stops_at_start() {
        let data = generate_synthetic(&SyntheticSpec {
            n: 30,
            p: 20,
            k_true: 2,
            ..Default::default()
        })
        .unwrap();
        let inst = data.instance(1.0, 2.0, 3).unwrap();
        let ctx = PerspectiveContext::root(20, 3, 2.0).unwrap();
        let gap0 = {
            let z = induced_dual(&inst, &Array1::zeros(20));
            primal_objective(&inst, &ctx, &Array1::zeros(20)) - dual_objective(&inst, &ctx, &z)
        };
        let cfg = SolverConfig {
            tol_gap: gap0 * 2.0,
            ..Default::default()
        };
        let res = solve_relaxation(&inst, &ctx, &cfg, None, None).unwrap();
        assert_eq!(res.termination, Termination::GapTol);
        assert_eq!(res.state.iter, 0);
    }

    #[test]
    fn invalid_eta_rejected() {
        let cfg = SolverConfig {
            restart: Restart::GapBased { eta: 1.0 },
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(
            &mut buf,
            &[TraceRecord {
                iter: 3,
                phi: 1.0,
                psi: 0.5,
                gap: 0.5,
                restarted: true,
                lower_bound: 0.5,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,phi,psi,gap,restarted"));
        assert!(lines.next().unwrap().starts_with("3,1.0"));
    }
}
