use serde::{Deserialize, Serialize};

/// First/second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], hp: &AdamParams) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - hp.beta1.powi(self.t as i32);
        let c2 = 1.0 - hp.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g;
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // bias correction makes the first step ≈ lr · sign(g)
        let hp = AdamParams {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-9,
        };
        let mut state = AdamState::new(2);
        let mut p = vec![1.0, -1.0];
        state.step(&mut p, &[4.0, -0.25], &hp);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let hp = AdamParams {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-9,
        };
        let mut state = AdamState::new(1);
        let mut p = vec![0.0];
        for _ in 0..10 {
            state.step(&mut p, &[0.0], &hp);
        }
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let hp = AdamParams {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-9,
        };
        let mut state = AdamState::new(1);
        let mut x = vec![5.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 1.5)];
            state.step(&mut x, &g, &hp);
        }
        assert!((x[0] - 1.5).abs() < 1e-2, "{}", x[0]);
    }
}
