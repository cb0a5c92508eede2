//! Rectified Adam (RAdam).
//!
//! Adam's adaptive step has high variance early on because the second-moment
//! estimate is built from few samples. RAdam tracks the length of the
//! approximated simple moving average,
//!
//! ```text
//! rho_inf = 2 / (1 - beta2) - 1
//! rho_t   = rho_inf - 2 t beta2^t / (1 - beta2^t)
//! ```
//!
//! and while `rho_t <= 4` the variance is intractable, so the update is plain
//! bias-corrected momentum `theta -= lr * m_hat`. Afterwards the adaptive step
//! is scaled by the rectification term
//!
//! ```text
//! r_t = sqrt((rho_t - 4)(rho_t - 2) rho_inf / ((rho_inf - 4)(rho_inf - 2) rho_t))
//! theta -= lr * r_t * m_hat / (sqrt(v_t / (1 - beta2^t)) + eps)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{NeuroError, Result};
use crate::{Scalar, Tensor};

/// Hyperparameters. Defaults are `lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Length of the approximated SMA at step `t` (1-based).
pub fn rho(beta2: f64, t: u64) -> f64 {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powf(t as f64);
    rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
}

/// Above this SMA length the adaptive (rectified) step is used.
pub const RECTIFY_THRESHOLD: f64 = 4.0;

#[derive(Clone, Debug)]
pub struct RAdam<T> {
    config: RAdamConfig,
    lr: f64,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

/// Serializable optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: RAdamConfig,
    pub lr: f64,
    pub step: u64,
    pub first_moments: Vec<Vec<f64>>,
    pub second_moments: Vec<Vec<f64>>,
}

impl<T: Scalar> RAdam<T> {
    pub fn new(config: RAdamConfig) -> Self {
        Self { config, lr: config.lr, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn config(&self) -> &RAdamConfig {
        &self.config
    }

    /// Current learning rate (may differ from `config.lr` after reductions).
    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update using the gradients stored on `params`.
    ///
    /// All gradients are validated before any parameter changes; a non-finite
    /// gradient yields [`NeuroError::NonFiniteGradient`] carrying the index of
    /// the offending parameter.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            let grad = p.grad().ok_or_else(|| NeuroError::Invalid(format!("parameter #{i} has no gradient slot")))?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(NeuroError::NonFiniteGradient { param: format!("#{i}") });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(NeuroError::Invalid("optimizer state does not match parameter shapes".into()));
        }
        self.t += 1;
        let RAdamConfig { beta1, beta2, eps, .. } = self.config;
        let t = self.t as f64;
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);
        let rho_t = rho(beta2, self.t);
        let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
        let rectifier = (rho_t > RECTIFY_THRESHOLD).then(|| {
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt()
        });
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (one, lr, eps) = (T::one(), T::of(self.lr), T::of(eps));
        let (inv_bias1, bias2) = (T::of(1.0 / bias1), T::of(bias2));
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (data, grad) = p.data_and_grad_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] * inv_bias1;
                let delta = match rectifier {
                    None => lr * m_hat,
                    Some(r) => {
                        let v_hat = (v[i] / bias2).sqrt();
                        lr * T::of(r) * m_hat / (v_hat + eps)
                    }
                };
                data[i] -= delta;
            }
        }
        Ok(())
    }

    pub fn state(&self) -> OptimizerState {
        let conv = |xs: &Vec<Vec<T>>| xs.iter().map(|v| v.iter().map(|x| x.as_f64()).collect()).collect();
        OptimizerState {
            config: self.config,
            lr: self.lr,
            step: self.t,
            first_moments: conv(&self.m),
            second_moments: conv(&self.v),
        }
    }

    pub fn from_state(state: &OptimizerState) -> Self {
        let conv = |xs: &Vec<Vec<f64>>| xs.iter().map(|v| v.iter().map(|&x| T::of(x)).collect()).collect();
        Self {
            config: state.config,
            lr: state.lr,
            t: state.step,
            m: conv(&state.first_moments),
            v: conv(&state.second_moments),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(w: f64) -> Tensor<f64> {
        Tensor::from_vec(&[1], vec![w]).unwrap().with_grad()
    }

    #[test]
    fn sma_length_starts_at_one() {
        assert!((rho(0.999, 1) - 1.0).abs() < 1e-9);
        // first step with rho_t > 4 for beta2 = 0.999 is t = 5
        assert!(rho(0.999, 4) <= RECTIFY_THRESHOLD);
        assert!(rho(0.999, 5) > RECTIFY_THRESHOLD);
    }

    /// Reference update written directly from the formulas, scalar case.
    fn reference(grads: &[f64], w0: f64, cfg: RAdamConfig) -> f64 {
        let rho_inf = 2.0 / (1.0 - cfg.beta2) - 1.0;
        let (mut m, mut v, mut w) = (0.0, 0.0, w0);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as f64;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powf(t));
            let rho_t = rho_inf - 2.0 * t * cfg.beta2.powf(t) / (1.0 - cfg.beta2.powf(t));
            if rho_t > 4.0 {
                let l = ((1.0 - cfg.beta2.powf(t)) / v).sqrt();
                let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt();
                w -= cfg.lr * r * m_hat * l;
            } else {
                w -= cfg.lr * m_hat;
            }
        }
        w
    }

    #[test]
    fn first_step_is_plain_momentum() {
        let cfg = RAdamConfig::default();
        let mut opt = RAdam::new(cfg);
        let mut w = scalar(1.0);
        w.accumulate_grad(&[0.3]);
        opt.step(&mut [&mut w]).unwrap();
        // m_hat after one step equals the gradient
        assert!((w.data()[0] - (1.0 - 1e-3 * 0.3)).abs() < 1e-15);
        assert!((w.data()[0] - reference(&[0.3], 1.0, cfg)).abs() < 1e-15);
    }

    #[test]
    fn matches_reference_across_the_rectification_switch() {
        let cfg = RAdamConfig { eps: 0.0, ..RAdamConfig::default() };
        let grads: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.7).sin() + 0.1).collect();
        let mut opt = RAdam::new(cfg);
        let mut w = scalar(0.5);
        for &g in &grads {
            w.zero_grad();
            w.accumulate_grad(&[g]);
            opt.step(&mut [&mut w]).unwrap();
        }
        assert!((w.data()[0] - reference(&grads, 0.5, cfg)).abs() < 1e-14);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut opt = RAdam::new(RAdamConfig::default());
        let mut w = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap().with_grad();
        for _ in 0..50 {
            opt.step(&mut [&mut w]).unwrap();
        }
        assert_eq!(w.data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn quadratic_shrinks_monotonically_after_warmup() {
        let mut opt = RAdam::new(RAdamConfig::default());
        let mut w = scalar(1.0);
        let mut trace = vec![1.0];
        for _ in 0..200 {
            w.zero_grad();
            let g = 2.0 * w.data()[0];
            w.accumulate_grad(&[g]);
            opt.step(&mut [&mut w]).unwrap();
            trace.push(w.data()[0].abs());
        }
        for pair in trace[5..].windows(2) {
            assert!(pair[1] < pair[0]);
        }
        assert!(trace[200] < 1.0);
    }

    #[test]
    fn non_finite_gradient_is_rejected_before_update() {
        let mut opt = RAdam::new(RAdamConfig::default());
        let mut a = scalar(1.0);
        let mut b = scalar(2.0);
        a.accumulate_grad(&[1.0]);
        b.accumulate_grad(&[f64::NAN]);
        let err = opt.step(&mut [&mut a, &mut b]).unwrap_err();
        assert!(matches!(err, NeuroError::NonFiniteGradient { ref param } if param == "#1"));
        assert_eq!(a.data()[0], 1.0);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn state_round_trip() {
        let mut opt = RAdam::<f64>::new(RAdamConfig::default());
        let mut w = scalar(1.0);
        w.accumulate_grad(&[0.5]);
        opt.step(&mut [&mut w]).unwrap();
        let restored = RAdam::<f64>::from_state(&opt.state());
        assert_eq!(restored.state(), opt.state());
    }
}
