use crate::error::{Error, Result};

/// Adam moment estimates for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::config(format!(
                "optimizer state holds {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                step: self.step as usize,
                detail: format!("non-finite gradient at parameter {i}"),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2, 0.01);
        let mut p = vec![0.0, 0.0];
        adam.step(&mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    /// Scalar reference implementation of the same update rule.
    fn reference_quadratic(steps: usize, lr: f64) -> f64 {
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=steps {
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + 1e-8);
        }
        w
    }

    #[test]
    fn minimizes_quadratic() {
        let mut adam = Adam::new(1, 0.1);
        let mut w = vec![0.0];
        for _ in 0..100 {
            let g = [2.0 * (w[0] - 3.0)];
            adam.step(&mut w, &g).unwrap();
        }
        let reference = reference_quadratic(100, 0.1);
        assert!((w[0] - reference).abs() < 1e-12);
        assert!((w[0] - 3.0).abs() < 0.5, "w = {}", w[0]);
    }

    #[test]
    fn shape_mismatch_and_nan() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![0.0; 3];
        assert!(matches!(adam.step(&mut p, &[0.0; 3]), Err(Error::Config(_))));
        let mut p = vec![0.0; 2];
        assert!(matches!(adam.step(&mut p, &[f64::NAN, 0.0]), Err(Error::Divergence { .. })));
    }
}
