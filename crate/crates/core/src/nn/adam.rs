use crate::error::{Error, Result};
use crate::scalar::Real;

use super::Mlp;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied as `θ ← θ·(1 − lr·weight_decay)` before the moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-3 }
    }
}

/// Moment accumulators for one network.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub step: u64,
    first: Mlp<T>,
    second: Mlp<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &Mlp<T>) -> Self {
        Self { step: 0, first: params.zeros_like(), second: params.zeros_like() }
    }

    /// One bias-corrected Adam update at learning rate `cfg.lr`.
    pub fn step(&mut self, cfg: &AdamConfig, params: &mut Mlp<T>, grads: &Mlp<T>) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.first) {
            return Err(Error::ShapeMismatch(format!(
                "parameters {:?}, gradients {:?}, moments {:?}",
                params.sizes(),
                grads.sizes(),
                self.first.sizes()
            )));
        }
        self.step += 1;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let lr = T::lit(cfg.lr);
        let decay = T::one() - lr * T::lit(cfg.weight_decay);
        let c1 = T::one() - T::lit(cfg.beta1.powi(self.step.min(i32::MAX as u64) as i32));
        let c2 = T::one() - T::lit(cfg.beta2.powi(self.step.min(i32::MAX as u64) as i32));
        let eps = T::lit(cfg.eps);

        let g = grads.params();
        let mut m = self.first.params();
        let mut v = self.second.params();
        let mut theta = params.params();
        for k in 0..theta.len() {
            m[k] = b1 * m[k] + (T::one() - b1) * g[k];
            v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            theta[k] = theta[k] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
        self.first.set_params(&m)?;
        self.second.set_params(&v)?;
        params.set_params(&theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, Matrix, OutputActivation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w: f64) -> Mlp<f64> {
        Mlp::from_layers(vec![Layer { weight: Matrix::from_vec(1, 1, vec![w]).unwrap(), bias: vec![0.0] }], OutputActivation::Identity).unwrap()
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut net = Mlp::<f64>::new(&[3, 4, 1], OutputActivation::Identity, &mut rng).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net);
        let cfg = AdamConfig { weight_decay: 0.0, ..Default::default() };
        for _ in 0..5 {
            st.step(&cfg, &mut net, &before.zeros_like()).unwrap();
        }
        assert_eq!(net, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut net = scalar_net(1.0);
        let mut grad = scalar_net(1.0);
        grad.layers_mut()[0].bias[0] = 0.0;
        let mut st = AdamState::new(&net);
        let cfg = AdamConfig { lr: 0.1, weight_decay: 0.0, ..Default::default() };
        st.step(&cfg, &mut net, &grad).unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps).
        let w = net.layers()[0].weight.get(0, 0);
        assert!((w - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(net.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn decoupled_weight_decay() {
        let mut net = scalar_net(2.0);
        let mut st = AdamState::new(&net);
        let cfg = AdamConfig { lr: 0.1, weight_decay: 0.5, ..Default::default() };
        let zero = net.zeros_like();
        st.step(&cfg, &mut net, &zero).unwrap();
        assert!((net.layers()[0].weight.get(0, 0) - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(61);
            let mut net = Mlp::<f64>::new(&[3, 4, 1], OutputActivation::Identity, &mut rng).unwrap();
            let mut st = AdamState::new(&net);
            for k in 0..10 {
                let mut g = net.clone();
                g.for_each_param_mut(|p| *p = (*p * k as f64).sin());
                st.step(&AdamConfig::default(), &mut net, &g).unwrap();
            }
            net.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let mut net = Mlp::<f64>::new(&[3, 4, 1], OutputActivation::Identity, &mut rng).unwrap();
        let other = Mlp::<f64>::new(&[3, 5, 1], OutputActivation::Identity, &mut rng).unwrap();
        let mut st = AdamState::new(&net);
        assert!(st.step(&AdamConfig::default(), &mut net, &other).is_err());
    }
}
