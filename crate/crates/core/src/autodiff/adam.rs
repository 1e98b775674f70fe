use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Adam with bias correction; moments are shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = |p: &ParamStore<T>| p.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { beta1: lit(0.9), beta2: lit(0.999), eps: lit(1e-8), step: 0, first: zeros(params), second: zeros(params) }
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.second
    }

    /// Applies one update with learning rate `lr`.
    ///
    /// Gradients are validated before anything is modified: a non-finite entry
    /// leaves both parameters and moments untouched.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>], lr: T) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradients and {} moment buffers for {} parameters",
                grads.len(),
                self.first.len(),
                params.len()
            )));
        }
        for (id, grad) in params.ids().zip(grads) {
            if grad.shape() != params.get(id).shape() {
                return Err(Error::Shape(format!("gradient shape mismatch for `{}`", params.name(id))));
            }
            if !grad.all_finite() {
                return Err(Error::NonFiniteGradient { param: params.name(id).to_string() });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for ((param, grad), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let (p, g) = (param.data_mut(), grad.data());
            let (m, v) = (m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::scalar(p));
        s
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut params = single(0.5);
        let mut adam = AdamState::new(&params);
        adam.update(&mut params, &[Tensor::scalar(0.0)], 0.1).unwrap();
        assert_eq!(params.tensors()[0].item(), 0.5);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut params = single(1.0);
        let mut adam = AdamState::new(&params);
        adam.update(&mut params, &[Tensor::scalar(1.0)], 0.1).unwrap();
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((params.tensors()[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn reference_recurrence_over_two_steps() {
        // Independent scalar recurrence.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.05f64);
        let grads = [0.3f64, -0.7];
        let (mut m, mut v, mut p) = (0.0, 0.0, 2.0);
        let mut magnitudes = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            let delta = lr * mh / (vh.sqrt() + eps);
            magnitudes.push(delta.abs());
            p -= delta;
        }
        let mut params = single(2.0);
        let mut adam = AdamState::new(&params);
        for g in grads {
            adam.update(&mut params, &[Tensor::scalar(g)], lr).unwrap();
        }
        assert_eq!(adam.step, 2);
        assert!((params.tensors()[0].item() - p).abs() < 1e-14);
        // sign flip: the second move is damped by the accumulated momentum
        assert!(magnitudes[1] < lr * 0.7);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut params = single(1.0);
        let mut adam = AdamState::new(&params);
        let err = adam.update(&mut params, &[Tensor::scalar(f64::NAN)], 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { .. }));
        assert_eq!(adam.step, 0);
        assert_eq!(params.tensors()[0].item(), 1.0);
    }
}
