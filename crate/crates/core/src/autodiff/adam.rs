use super::{AutodiffError, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.008, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    params: Vec<ParamId>,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: Vec<ParamId>, store: &ParamStore) -> Self {
        let first = params.iter().map(|&id| vec![0.0; store.get(id).value.len()]).collect();
        let second = params.iter().map(|&id| vec![0.0; store.get(id).value.len()]).collect();
        Self { config, step: 0, params, first, second }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    /// Applies one update to every tracked parameter, then zeroes their grads.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), AutodiffError> {
        for &id in &self.params {
            if store.get(id).grad.is_none() {
                return Err(AutodiffError::MissingGrad(store.get(id).name.clone()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (slot, &id) in self.params.iter().enumerate() {
            let p = store.get_mut(id);
            let grad = p.grad.as_mut().expect("checked above");
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            for (((theta, g), m), v) in p.value.data_mut().iter_mut().zip(grad.iter_mut()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * *g;
                *v = beta2 * *v + (1.0 - beta2) * *g * *g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn store_with(value: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::scalar(value)).unwrap();
        (s, id)
    }

    #[test]
    fn single_unit_gradient_step_moves_by_lr() {
        let (mut s, id) = store_with(1.0);
        let mut opt = Adam::new(AdamConfig::default(), vec![id], &s);
        s.get_mut(id).grad = Some(vec![1.0]);
        opt.step(&mut s).unwrap();
        // m̂ = 1, v̂ = 1 → Δθ = −lr/(1+ε)
        let delta = s.get(id).value.item() - 1.0;
        assert!((delta + 0.008).abs() < 1e-9, "{delta}");
        assert_eq!(s.get(id).grad.as_ref().unwrap()[0], 0.0);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = store_with(0.3);
        let mut opt = Adam::new(AdamConfig::default(), vec![id], &s);
        for _ in 0..3 {
            s.get_mut(id).grad = Some(vec![0.0]);
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s.get(id).value.item(), 0.3);
    }

    #[test]
    fn two_constant_steps_descend_monotonically() {
        let (mut s, id) = store_with(0.0);
        let mut opt = Adam::new(AdamConfig::default(), vec![id], &s);
        let mut prev = 0.0;
        for _ in 0..2 {
            s.get_mut(id).grad = Some(vec![1.0]);
            opt.step(&mut s).unwrap();
            let now = s.get(id).value.item();
            assert!(now < prev);
            prev = now;
        }
        assert!(prev.abs() < 0.016);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let (mut s, id) = store_with(0.0);
        let mut opt = Adam::new(AdamConfig::default(), vec![id], &s);
        assert_eq!(opt.step(&mut s), Err(AutodiffError::MissingGrad("theta".into())));
        assert_eq!(opt.step_count(), 0);
    }
}
