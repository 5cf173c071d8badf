//! Scalar/matrix primitives shared by the model and the losses: sequence
//! statistics, the epsilon-guarded cosine, GELU, AdamW, and the
//! finite-difference gradient oracle.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for gradient checking.

mod adamw;
mod gradcheck;
mod params;

pub use adamw::{adamw_step, AdamwHyper, OptimizerState};
pub use gradcheck::{grad_check, GradReport};
pub use params::{ParamEntry, ParamSet};

use ndarray::{Array1, Array2, ArrayView1, Axis, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps};
use thiserror::Error;

/// Row-major real matrix; rows are sequence positions, columns features.
pub type Tensor2D<T> = Array2<T>;

/// Real vector (one row of statistics, a bias, a pooled feature).
pub type Vector<T> = Array1<T>;

/// Floating-point scalar the numeric stack is generic over.
pub trait Real:
    Float
    + NumAssignOps
    + FromPrimitive
    + ScalarOperand
    + ndarray::LinalgScalar
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for lowering an `f64` literal into the working precision.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in target precision")
}

/// Denominator guard used by every cosine in the objective.
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("loss function is not deterministic: two identical calls disagree")]
    NonDeterministic,
    #[error("unknown parameter `{0}`")]
    MissingParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
}

fn ensure_finite<T: Real>(values: impl IntoIterator<Item = T>, what: &str) -> Result<(), NumericsError> {
    for v in values {
        if !v.is_finite() {
            return Err(NumericsError::NonFinite(what.to_string()));
        }
    }
    Ok(())
}

/// Per-column mean and population standard deviation over the rows of `x`.
///
/// Population variance (divide by the row count) keeps the statistic defined
/// for a single row.
pub fn seq_mean_std<T: Real>(x: &Tensor2D<T>) -> Result<(Vector<T>, Vector<T>), NumericsError> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(NumericsError::Shape(format!(
            "seq_mean_std needs a non-empty matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    ensure_finite(x.iter().copied(), "seq_mean_std input")?;
    let inv_rows = T::one() / real::<T>(x.nrows() as f64);
    let mu = x.sum_axis(Axis(0)) * inv_rows;
    let mut var = Vector::<T>::zeros(x.ncols());
    for row in x.rows() {
        for (k, &v) in row.iter().enumerate() {
            let d = v - mu[k];
            var[k] += d * d;
        }
    }
    var *= inv_rows;
    let sigma = var.mapv(Float::sqrt);
    Ok((mu, sigma))
}

/// Cosine similarity `dot(u,v) / (|u|·|v| + eps)`.
///
/// The additive epsilon sends zero vectors to cosine 0 instead of NaN.
pub fn cosine<T: Real>(u: ArrayView1<T>, v: ArrayView1<T>, eps: T) -> Result<T, NumericsError> {
    if u.len() != v.len() {
        return Err(NumericsError::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot = u.dot(&v);
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    Ok(dot / (nu * nv + eps))
}

/// GELU, tanh form: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let c = real::<T>(0.7978845608028654); // sqrt(2/pi)
    let k = real::<T>(0.044715);
    let half = real::<T>(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

/// Derivative of [`gelu`].
#[inline]
pub fn gelu_prime<T: Real>(x: T) -> T {
    let c = real::<T>(0.7978845608028654);
    let k = real::<T>(0.044715);
    let u = c * (x + k * x * x * x);
    gelu_prime_from_tanh(x, u.tanh())
}

/// GELU value together with the inner `tanh`, so backward passes can reuse
/// it instead of re-evaluating the transcendental.
#[inline]
pub fn gelu_parts<T: Real>(x: T) -> (T, T) {
    let c = real::<T>(0.7978845608028654);
    let k = real::<T>(0.044715);
    let half = real::<T>(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    (half * x * (T::one() + t), t)
}

/// [`gelu_prime`] given the cached inner `tanh`.
#[inline]
pub fn gelu_prime_from_tanh<T: Real>(x: T, t: T) -> T {
    let c = real::<T>(0.7978845608028654);
    let k = real::<T>(0.044715);
    let half = real::<T>(0.5);
    let three = real::<T>(3.0);
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * k * x * x)
}
