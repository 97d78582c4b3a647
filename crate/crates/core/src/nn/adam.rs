use serde::{Deserialize, Serialize};

use super::{NnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam step (descent on `grad`). A non-finite
    /// gradient leaves both the parameters and the moments untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.m.len() {
            return Err(NnError::DimensionMismatch {
                expected: self.m.len(),
                got: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut adam = AdamState::new(3, 0.1);
        for _ in 0..5 {
            adam.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = 1, v_hat = 1, step = lr * 1 / (1 + 1e-8)
        let mut p = vec![0.0];
        let mut adam = AdamState::new(1, 0.1);
        adam.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn two_steps_differ_from_one_doubled_step() {
        // constant g: both bias-corrected steps equal lr * g/|g|, so two
        // steps give -0.2 (up to eps) while doubled lr also gives -0.2; a
        // varying gradient separates them.
        let mut a = vec![0.0];
        let mut sa = AdamState::new(1, 0.1);
        sa.step(&mut a, &[1.0]).unwrap();
        sa.step(&mut a, &[3.0]).unwrap();

        let mut b = vec![0.0];
        let mut sb = AdamState::new(1, 0.2);
        sb.step(&mut b, &[1.0]).unwrap();

        // step 2 by hand: m = 0.9*0.1 + 0.1*3 = 0.39, v = 0.999*0.001 + 0.001*9 = 0.009999
        let m_hat = 0.39 / (1.0 - 0.81);
        let v_hat: f64 = 0.009999 / (1.0 - 0.998001);
        let expected = -0.1 / (1.0 + 1e-8) - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((a[0] - expected).abs() < 1e-12);
        assert!((a[0] - b[0]).abs() > 1e-3);
    }

    #[test]
    fn non_finite_gradient_is_refused() {
        let mut p = vec![1.0, 2.0];
        let mut adam = AdamState::new(2, 0.1);
        assert!(matches!(
            adam.step(&mut p, &[f64::NAN, 0.0]),
            Err(NnError::NonFiniteGradient)
        ));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(adam.t, 0);
    }
}
