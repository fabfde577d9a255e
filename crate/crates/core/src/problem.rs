//! Problem instances, branch-and-bound node states and the synthetic data
//! generator.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The generalized linear model loss `f(z, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `½‖z − y‖²`.
    #[serde(alias = "squarederror", alias = "squared_error")]
    Squared,
    /// `Σ log(1 + exp(−yᵢ zᵢ))` with labels in `{−1, +1}`.
    Logistic,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "squared" | "squarederror" | "squared_error" | "ls" => Ok(LossKind::Squared),
            "logistic" | "logit" => Ok(LossKind::Logistic),
            other => Err(Error::Parse(format!("unknown loss {other:?}"))),
        }
    }
}

/// `min f(Xβ, y) + λ₂‖β‖²  s.t.  ‖β‖∞ ≤ M, ‖β‖₀ ≤ k`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub loss: LossKind,
    pub lambda2: f64,
    pub m: f64,
    pub k: usize,
}

impl ProblemInstance {
    /// Builds and validates an instance.
    pub fn new(
        x: Array2<f64>,
        y: Array1<f64>,
        loss: LossKind,
        lambda2: f64,
        m: f64,
        k: usize,
    ) -> Result<Self> {
        let inst = ProblemInstance {
            x,
            y,
            loss,
            lambda2,
            m,
            k,
        };
        validate_instance(&inst)?;
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `f(Xβ, y) + λ₂‖β‖²`, the objective of the cardinality-constrained problem.
    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        let z = self.x.dot(beta);
        crate::losses::loss_value(self.loss, &z, &self.y) + self.lambda2 * beta.dot(beta)
    }
}

/// Checks every structural requirement of a [`ProblemInstance`].
pub fn validate_instance(inst: &ProblemInstance) -> Result<()> {
    let (n, p) = inst.x.dim();
    let bad = |msg: String| Err(Error::InvalidInstance(msg));
    if n == 0 || p == 0 {
        return bad(format!("X must be non-empty, got {n}x{p}"));
    }
    if inst.y.len() != n {
        return bad(format!("y has length {} but X has {n} rows", inst.y.len()));
    }
    if let Some(((i, j), v)) = inst.x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return bad(format!("X[{i},{j}] = {v} is not finite"));
    }
    if inst.x.iter().all(|&v| v == 0.0) {
        return bad("X must have at least one nonzero entry".into());
    }
    if let Some((i, v)) = inst.y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return bad(format!("y[{i}] = {v} is not finite"));
    }
    if inst.loss == LossKind::Logistic {
        if let Some((i, v)) = inst
            .y
            .iter()
            .enumerate()
            .find(|(_, &v)| v != 1.0 && v != -1.0)
        {
            return bad(format!("logistic labels must be -1 or +1, y[{i}] = {v}"));
        }
    }
    if !(inst.lambda2 > 0.0 && inst.lambda2.is_finite()) {
        return bad(format!("lambda2 must be positive, got {}", inst.lambda2));
    }
    if !(inst.m > 0.0 && inst.m.is_finite()) {
        return bad(format!("M must be positive, got {}", inst.m));
    }
    if inst.k < 1 || inst.k > p {
        return bad(format!("k must lie in [1, {p}], got {}", inst.k));
    }
    Ok(())
}

/// How a binary indicator `z_j` is treated at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fixing {
    Zero,
    One,
    Free,
}

/// A branch-and-bound node: the partition `(J0, J1, Jf)` of the variables.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    fixing: Vec<Fixing>,
    n_one: usize,
    n_free: usize,
    pub depth: usize,
    pub parent_bound: Option<f64>,
    pub warm_start: Option<Array1<f64>>,
}

impl NodeState {
    /// The root node: every variable free.
    pub fn root(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::EmptyProblem);
        }
        Ok(NodeState {
            fixing: vec![Fixing::Free; p],
            n_one: 0,
            n_free: p,
            depth: 0,
            parent_bound: None,
            warm_start: None,
        })
    }

    /// Builds a node from explicit index sets, applying the empty-budget
    /// normalization. The sets must partition `0..p`.
    pub fn from_sets(p: usize, zeros: &[usize], ones: &[usize], k: usize) -> Result<Self> {
        let mut node = NodeState::root(p)?;
        for &j in zeros {
            if j >= p || node.fixing[j] != Fixing::Free {
                return Err(Error::IndexNotFree { index: j });
            }
            node.fixing[j] = Fixing::Zero;
            node.n_free -= 1;
        }
        for &j in ones {
            if j >= p || node.fixing[j] != Fixing::Free {
                return Err(Error::IndexNotFree { index: j });
            }
            node.fixing[j] = Fixing::One;
            node.n_free -= 1;
            node.n_one += 1;
        }
        if node.n_one > k {
            return Err(Error::InvalidInstance(format!(
                "{} variables fixed to one exceeds k = {k}",
                node.n_one
            )));
        }
        node.normalize(k);
        Ok(node)
    }

    pub fn p(&self) -> usize {
        self.fixing.len()
    }

    pub fn fixing(&self, j: usize) -> Fixing {
        self.fixing[j]
    }

    pub fn fixings(&self) -> &[Fixing] {
        &self.fixing
    }

    pub fn zeros(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices(Fixing::Zero)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices(Fixing::One)
    }

    pub fn free(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices(Fixing::Free)
    }

    fn indices(&self, which: Fixing) -> impl Iterator<Item = usize> + '_ {
        self.fixing
            .iter()
            .enumerate()
            .filter(move |(_, &f)| f == which)
            .map(|(j, _)| j)
    }

    pub fn n_one(&self) -> usize {
        self.n_one
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Remaining cardinality budget `k − |J1|`.
    pub fn k_bar(&self, k: usize) -> usize {
        k.saturating_sub(self.n_one)
    }

    /// Moves `j` from the free set to `J0` (`value = false`) or `J1`.
    pub fn fix(&self, j: usize, value: bool, k: usize) -> Result<NodeState> {
        if j >= self.p() || self.fixing[j] != Fixing::Free {
            return Err(Error::IndexNotFree { index: j });
        }
        let mut child = self.clone();
        child.depth += 1;
        child.parent_bound = None;
        child.warm_start = None;
        child.n_free -= 1;
        if value {
            child.fixing[j] = Fixing::One;
            child.n_one += 1;
        } else {
            child.fixing[j] = Fixing::Zero;
        }
        child.normalize(k);
        Ok(child)
    }

    // Once the budget is spent, the free variables can only be zero.
    fn normalize(&mut self, k: usize) {
        if self.n_one >= k && self.n_free > 0 {
            for f in self.fixing.iter_mut().filter(|f| **f == Fixing::Free) {
                *f = Fixing::Zero;
            }
            self.n_free = 0;
        }
    }
}

/// Parameters of the correlated Gaussian design generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub k_true: usize,
    pub sigma: f64,
    pub snr: f64,
    pub coef_magnitude: f64,
    pub seed: u64,
    pub task: LossKind,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 200,
            p: 200,
            k_true: 5,
            sigma: 0.5,
            snr: 5.0,
            coef_magnitude: 1.0,
            seed: 0,
            task: LossKind::Squared,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n == 0 || self.p == 0 {
            return bad(format!("n and p must be positive, got n={} p={}", self.n, self.p));
        }
        if self.k_true == 0 || self.k_true > self.p {
            return bad(format!("k_true must lie in [1, {}], got {}", self.p, self.k_true));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("sigma must lie in (0, 1), got {}", self.sigma));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return bad(format!("snr must be positive, got {}", self.snr));
        }
        if !self.coef_magnitude.is_finite() || self.coef_magnitude == 0.0 {
            return bad(format!(
                "coefficient magnitude must be finite and nonzero, got {}",
                self.coef_magnitude
            ));
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub beta_true: Array1<f64>,
    pub loss: LossKind,
}

impl SyntheticData {
    pub fn instance(&self, lambda2: f64, m: f64, k: usize) -> Result<ProblemInstance> {
        ProblemInstance::new(self.x.clone(), self.y.clone(), self.loss, lambda2, m, k)
    }
}

/// `Σ_{jl} = σ^{|j−l|}`.
pub fn ar1_covariance(p: usize, sigma: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(j, l)| {
        let d = j.abs_diff(l);
        if d == 0 {
            1.0
        } else {
            sigma.powi(d as i32)
        }
    })
}

/// 0-based positions of the planted nonzeros: 1-based indices `j` with
/// `j mod ⌊p / k_true⌋ = 0`, first `k_true` of them.
pub fn planted_support(p: usize, k_true: usize) -> Vec<usize> {
    let spacing = (p / k_true).max(1);
    (1..=p)
        .filter(|j| j % spacing == 0)
        .take(k_true)
        .map(|j| j - 1)
        .collect()
}

/// Draws a synthetic instance. Rows of `X` follow `N(0, Σ)` with AR(1)
/// correlation; the draw order is all of `X` row-major, then the noise,
/// then (logistic only) one uniform per label. The stream is ChaCha20
/// seeded through `seed_from_u64`, so output is identical across platforms.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let SyntheticSpec { n, p, sigma, .. } = *spec;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    // x_{i1} = e_1, x_{ij} = σ x_{i,j−1} + √(1−σ²) e_j has covariance σ^{|j−l|}.
    let innov = (1.0 - sigma * sigma).sqrt();
    let mut x = Array2::<f64>::zeros((n, p));
    for mut row in x.rows_mut() {
        let mut prev = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            prev = if j == 0 { e } else { sigma * prev + innov * e };
            *v = prev;
        }
    }

    let mut beta_true = Array1::<f64>::zeros(p);
    for j in planted_support(p, spec.k_true) {
        beta_true[j] = spec.coef_magnitude;
    }

    let signal = x.dot(&beta_true);
    // The noise variance is ‖Xβ*‖ / SNR.
    let noise_sd = (signal.dot(&signal).sqrt() / spec.snr).sqrt();
    let noise: Array1<f64> = (0..n)
        .map(|_| noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let y = match spec.task {
        LossKind::Squared => &signal + &noise,
        LossKind::Logistic => signal
            .iter()
            .zip(noise.iter())
            .map(|(s, e)| {
                let prob = (s + e).clamp(0.0, 1.0);
                let u: f64 = rng.random();
                if u < prob {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect(),
    };

    Ok(SyntheticData {
        x,
        y,
        beta_true,
        loss: spec.task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> ProblemInstance {
        ProblemInstance {
            x: array![[1.0, 0.0], [0.0, 1.0]],
            y: array![1.0, 0.0],
            loss: LossKind::Squared,
            lambda2: 1.0,
            m: 1.0,
            k: 1,
        }
    }

    #[test]
    fn valid_instance_passes() {
        validate_instance(&tiny()).unwrap();
    }

    #[test]
    fn zero_design_is_rejected() {
        let mut inst = tiny();
        inst.x.fill(0.0);
        assert!(matches!(
            validate_instance(&inst),
            Err(Error::InvalidInstance(_))
        ));
    }

    #[test]
    fn logistic_labels_must_be_signs() {
        let mut inst = tiny();
        inst.loss = LossKind::Logistic;
        inst.y = array![1.0, 0.5];
        assert!(validate_instance(&inst).is_err());
        inst.y = array![1.0, -1.0];
        validate_instance(&inst).unwrap();
    }

    #[test]
    fn scalar_parameters_are_checked() {
        for f in [
            |i: &mut ProblemInstance| i.lambda2 = 0.0,
            |i: &mut ProblemInstance| i.m = -1.0,
            |i: &mut ProblemInstance| i.k = 0,
            |i: &mut ProblemInstance| i.k = 3,
            |i: &mut ProblemInstance| i.y[0] = f64::NAN,
            |i: &mut ProblemInstance| i.x[[1, 1]] = f64::INFINITY,
        ] {
            let mut inst = tiny();
            f(&mut inst);
            assert!(validate_instance(&inst).is_err());
        }
    }

    #[test]
    fn root_node() {
        let root = NodeState::root(3).unwrap();
        assert_eq!(root.free().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(root.ones().count() + root.zeros().count(), 0);
        assert_eq!(root.depth, 0);
        assert_eq!(NodeState::root(1).unwrap().free().collect::<Vec<_>>(), vec![0]);
        assert!(matches!(NodeState::root(0), Err(Error::EmptyProblem)));
    }

    #[test]
    fn fixing_moves_one_index() {
        let root = NodeState::root(3).unwrap();
        let child = root.fix(1, true, 2).unwrap();
        assert_eq!(child.ones().collect::<Vec<_>>(), vec![1]);
        assert_eq!(child.free().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(child.depth, 1);
    }

    #[test]
    fn spent_budget_drains_free_set() {
        let node = NodeState::from_sets(3, &[], &[0], 2).unwrap();
        let child = node.fix(1, true, 2).unwrap();
        assert_eq!(child.ones().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(child.zeros().collect::<Vec<_>>(), vec![2]);
        assert_eq!(child.n_free(), 0);
        assert_eq!(child.k_bar(2), 0);
    }

    #[test]
    fn fixing_a_fixed_index_fails() {
        let node = NodeState::root(3).unwrap().fix(0, false, 2).unwrap();
        assert!(matches!(node.fix(0, true, 2), Err(Error::IndexNotFree { index: 0 })));
        assert!(matches!(node.fix(7, true, 2), Err(Error::IndexNotFree { index: 7 })));
    }

    #[test]
    fn planted_support_positions() {
        assert_eq!(planted_support(10, 2), vec![4, 9]);
        assert_eq!(planted_support(200, 5), vec![39, 79, 119, 159, 199]);
        // 11 / 4 floors to 2: indices 2, 4, 6, 8 (1-based)
        assert_eq!(planted_support(11, 4), vec![1, 3, 5, 7]);
    }

    #[test]
    fn covariance_entries() {
        let s = ar1_covariance(4, 0.5);
        assert_eq!(s[[0, 1]], 0.5);
        assert_eq!(s[[0, 3]], 0.125);
        let id = ar1_covariance(3, 0.0);
        assert_eq!(id, Array2::<f64>::eye(3));
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = SyntheticSpec {
            n: 20,
            p: 10,
            k_true: 2,
            ..Default::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.beta_true[4], 1.0);
        assert_eq!(a.beta_true[9], 1.0);
        assert_eq!(a.beta_true.iter().filter(|&&b| b != 0.0).count(), 2);
        let other = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.x, other.x);
    }

    #[test]
    fn logistic_labels_are_signs() {
        let spec = SyntheticSpec {
            n: 50,
            p: 10,
            k_true: 2,
            task: LossKind::Logistic,
            ..Default::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        assert!(data.y.iter().all(|&v| v == 1.0 || v == -1.0));
        data.instance(1.0, 2.0, 2).unwrap();
    }

    #[test]
    fn empirical_covariance_converges() {
        let spec = SyntheticSpec {
            n: 50_000,
            p: 4,
            k_true: 1,
            ..Default::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        let emp = data.x.t().dot(&data.x) / spec.n as f64;
        let truth = ar1_covariance(4, 0.5);
        for (a, b) in emp.iter().zip(truth.iter()) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SyntheticSpec { sigma: 1.5, ..Default::default() },
            SyntheticSpec { sigma: 0.0, ..Default::default() },
            SyntheticSpec { p: 0, ..Default::default() },
            SyntheticSpec { k_true: 0, ..Default::default() },
            SyntheticSpec { snr: -1.0, ..Default::default() },
        ] {
            assert!(matches!(generate_synthetic(&spec), Err(Error::InvalidSpec(_))));
        }
    }
}
