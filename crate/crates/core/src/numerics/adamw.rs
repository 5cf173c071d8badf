//! AdamW with bias correction and decoupled weight decay.
//!
//! Decay is applied multiplicatively to the raw parameter, not folded into
//! the gradient: `theta -= lr*wd*theta + lr * m_hat / (sqrt(v_hat) + eps)`.

use super::{real, NumericsError, ParamSet, Real, Tensor2D};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamwHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamwHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamwHyper {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Step counter plus first/second moment accumulators shaped like the
/// trainable entries of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub hyper: AdamwHyper,
    pub first_moment: IndexMap<String, Tensor2D<T>>,
    pub second_moment: IndexMap<String, Tensor2D<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ParamSet<T>, hyper: AdamwHyper) -> Self {
        let mut first_moment = IndexMap::new();
        let mut second_moment = IndexMap::new();
        for (name, entry) in params.iter() {
            if entry.trainable {
                first_moment.insert(name.to_string(), Tensor2D::zeros(entry.value.raw_dim()));
                second_moment.insert(name.to_string(), Tensor2D::zeros(entry.value.raw_dim()));
            }
        }
        Self { step: 0, hyper, first_moment, second_moment }
    }
}

/// One AdamW update over every trainable entry.
pub fn adamw_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut OptimizerState<T>,
) -> Result<(), NumericsError> {
    state.step += 1;
    let h = state.hyper;
    let lr = real::<T>(h.lr);
    let b1 = real::<T>(h.beta1);
    let b2 = real::<T>(h.beta2);
    let eps = real::<T>(h.eps);
    let wd = real::<T>(h.weight_decay);
    let one = T::one();
    let bias1 = one - real::<T>(h.beta1.powi(state.step as i32));
    let bias2 = one - real::<T>(h.beta2.powi(state.step as i32));

    let names: Vec<String> = state.first_moment.keys().cloned().collect();
    for name in names {
        let grad = grads.tensor(&name)?;
        let m = state
            .first_moment
            .get_mut(&name)
            .ok_or_else(|| NumericsError::MissingParam(name.clone()))?;
        if m.raw_dim() != grad.raw_dim() {
            return Err(NumericsError::Shape(format!(
                "gradient for `{name}`: {:?} vs {:?}",
                grad.shape(),
                m.shape()
            )));
        }
        let v = state.second_moment.get_mut(&name).expect("moments added in pairs");
        let value = params.tensor_mut(&name)?;
        if value.raw_dim() != grad.raw_dim() {
            return Err(NumericsError::Shape(format!(
                "parameter `{name}`: {:?} vs gradient {:?}",
                value.shape(),
                grad.shape()
            )));
        }
        ndarray::Zip::from(value)
            .and(m)
            .and(v)
            .and(grad)
            .for_each(|w, m, v, &g| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w = *w - lr * wd * *w - lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn single(w: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.insert("w", arr2(&[[w]]), true).unwrap();
        ps
    }

    #[test]
    fn first_step_closed_form() {
        // m_hat = v_hat = 1 on step one with g = 1, so w moves by ~lr.
        let mut params = single(1.0);
        let mut grads = params.zeros_like();
        *grads.tensor_mut("w").unwrap() = arr2(&[[1.0]]);
        let hyper = AdamwHyper { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 };
        let mut state = OptimizerState::new(&params, hyper);
        adamw_step(&mut params, &grads, &mut state).unwrap();
        assert_abs_diff_eq!(params.tensor("w").unwrap()[[0, 0]], 0.9, epsilon = 1e-7);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn decoupled_decay_first_step() {
        let mut params = single(1.0);
        let mut grads = params.zeros_like();
        *grads.tensor_mut("w").unwrap() = arr2(&[[1.0]]);
        let hyper = AdamwHyper { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 };
        let mut state = OptimizerState::new(&params, hyper);
        adamw_step(&mut params, &grads, &mut state).unwrap();
        // 1 - 0.1*0.01*1 - 0.1 = 0.899
        assert_abs_diff_eq!(params.tensor("w").unwrap()[[0, 0]], 0.899, epsilon = 1e-7);
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut params = single(1.25);
        let grads = params.zeros_like();
        let hyper = AdamwHyper { weight_decay: 0.0, ..AdamwHyper::default() };
        let mut state = OptimizerState::new(&params, hyper);
        for _ in 0..3 {
            adamw_step(&mut params, &grads, &mut state).unwrap();
        }
        assert_eq!(params.tensor("w").unwrap()[[0, 0]], 1.25);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut params = single(1.0);
        let mut grads = ParamSet::new();
        grads.insert("w", arr2(&[[1.0, 2.0]]), true).unwrap();
        let mut state = OptimizerState::new(&params, AdamwHyper::default());
        assert!(matches!(
            adamw_step(&mut params, &grads, &mut state),
            Err(NumericsError::Shape(_))
        ));
    }

    #[test]
    fn non_trainable_entries_are_left_alone() {
        let mut params = single(1.0);
        params.insert("frozen", arr2(&[[3.0]]), false).unwrap();
        let mut grads = params.zeros_like();
        *grads.tensor_mut("w").unwrap() = arr2(&[[1.0]]);
        *grads.tensor_mut("frozen").unwrap() = arr2(&[[99.0]]);
        let mut state = OptimizerState::new(&params, AdamwHyper::with_lr(0.1));
        adamw_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params.tensor("frozen").unwrap()[[0, 0]], 3.0);
    }
}
