//! GLM losses `F(z) = f(z, y)`: values, gradients, Fenchel conjugates and the
//! curvature constants used to pick step sizes.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::problem::LossKind;

/// Loss value together with `∂F/∂z`.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub gradient: Array1<f64>,
}

/// `log(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + e^{−x})`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dims(z: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<()> {
    if z.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: z.len(),
        });
    }
    Ok(())
}

fn value_unchecked(loss: LossKind, z: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    match loss {
        LossKind::Squared => {
            0.5 * z
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        }
        LossKind::Logistic => z
            .iter()
            .zip(y.iter())
            .map(|(zi, yi)| softplus(-yi * zi))
            .sum(),
    }
}

fn gradient_unchecked(loss: LossKind, z: ArrayView1<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    match loss {
        LossKind::Squared => &z - &y,
        LossKind::Logistic => z
            .iter()
            .zip(y.iter())
            .map(|(zi, yi)| -yi * sigmoid(-yi * zi))
            .collect(),
    }
}

/// `F(z)`. Logistic labels are assumed to be ±1.
pub fn loss_value(loss: LossKind, z: &Array1<f64>, y: &Array1<f64>) -> f64 {
    try_loss_value(loss, z.view(), y.view()).expect("loss_value: dimension mismatch")
}

pub fn try_loss_value(loss: LossKind, z: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    check_dims(z, y)?;
    Ok(value_unchecked(loss, z, y))
}

/// `∇F(z)`.
pub fn loss_gradient(loss: LossKind, z: &Array1<f64>, y: &Array1<f64>) -> Array1<f64> {
    try_loss_gradient(loss, z.view(), y.view()).expect("loss_gradient: dimension mismatch")
}

pub fn try_loss_gradient(
    loss: LossKind,
    z: ArrayView1<f64>,
    y: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_dims(z, y)?;
    Ok(gradient_unchecked(loss, z, y))
}

/// Value and gradient in one pass.
pub fn evaluate(loss: LossKind, z: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<LossEval> {
    check_dims(z, y)?;
    Ok(LossEval {
        value: value_unchecked(loss, z, y),
        gradient: gradient_unchecked(loss, z, y),
    })
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Conjugate of the scalar logistic loss `t ↦ log(1 + e^{−t})`, finite on `[−1, 0]`.
pub fn logistic_conjugate_scalar(s: f64) -> f64 {
    if (-1.0..=0.0).contains(&s) {
        xlogx(-s) + xlogx(1.0 + s)
    } else {
        f64::INFINITY
    }
}

/// `F*(u)`; `+∞` outside the domain.
pub fn loss_conjugate(loss: LossKind, u: &Array1<f64>, y: &Array1<f64>) -> f64 {
    assert_eq!(u.len(), y.len(), "loss_conjugate: dimension mismatch");
    match loss {
        LossKind::Squared => 0.5 * u.dot(u) + u.dot(y),
        LossKind::Logistic => u
            .iter()
            .zip(y.iter())
            .map(|(ui, yi)| logistic_conjugate_scalar(yi * ui))
            .sum(),
    }
}

/// Upper bound on `‖∇²F‖`; the smoothness constant of `β ↦ F(Xβ)` is this
/// times `‖X‖₂²`.
pub fn curvature_upper(loss: LossKind) -> f64 {
    match loss {
        LossKind::Squared => 1.0,
        LossKind::Logistic => 0.25,
    }
}

const POWER_MAX_ITERS: usize = 10_000;
const POWER_STOP: f64 = 1e-13;
const POWER_ACCEPT: f64 = 1e-6;

/// `‖X‖₂²` by power iteration on `XᵀX`, started from the normalized all-ones
/// vector.
///
/// A second run from a fixed irregular vector guards against the all-ones
/// start lying in an invariant subspace that misses the top eigenvector
/// (which happens for structured designs); the larger Rayleigh quotient wins.
pub fn spectral_norm_sq(x: &Array2<f64>) -> Result<f64> {
    let p = x.ncols();
    let ones = Array1::from_elem(p, 1.0);
    // additive recurrence with the plastic-number step: no rational structure
    let irregular = Array1::from_shape_fn(p, |j| ((j as f64 + 1.0) * 0.754_877_666_246_692_7).fract() - 0.5);
    let a = power_iterate(x, ones)?;
    let b = power_iterate(x, irregular)?;
    Ok(a.max(b))
}

fn power_iterate(x: &Array2<f64>, start: Array1<f64>) -> Result<f64> {
    let p = x.ncols();
    let mut v = &start / start.dot(&start).sqrt().max(f64::MIN_POSITIVE);
    let mut w = x.t().dot(&x.dot(&v));
    if w.iter().all(|&a| a == 0.0) {
        // start lies in the null space; restart on the heaviest column
        let j = (0..p)
            .max_by(|&a, &b| {
                let na = x.column(a).dot(&x.column(a));
                let nb = x.column(b).dot(&x.column(b));
                na.total_cmp(&nb).then(b.cmp(&a))
            })
            .unwrap_or(0);
        v.fill(0.0);
        v[j] = 1.0;
        w = x.t().dot(&x.dot(&v));
    }
    let mut lambda = v.dot(&w);
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let mut change = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        let norm = w.dot(&w).sqrt();
        v = &w / norm;
        w = x.t().dot(&x.dot(&v));
        let next = v.dot(&w);
        change = ((next - lambda) / next).abs();
        lambda = next;
        if change <= POWER_STOP {
            return Ok(lambda);
        }
    }
    if change <= POWER_ACCEPT {
        Ok(lambda)
    } else {
        Err(Error::ConvergenceFailure {
            iterations: POWER_MAX_ITERS,
            change,
        })
    }
}
