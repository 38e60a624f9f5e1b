use super::OptimError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<(), OptimError> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(OptimError::Dimension { expected: self.m.len(), got: theta.len().max(grad.len()) });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient { index });
        }
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * grad[k];
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * grad[k] * grad[k];
            theta[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let mut theta = vec![1.0, 1.0];
        let mut adam = Adam::new(2, AdamConfig::default());
        for _ in 0..2000 {
            let g: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
            adam.step(&mut theta, &g, 1e-2).unwrap();
        }
        assert!(theta.iter().map(|t| t * t).sum::<f64>().sqrt() <= 1e-4, "{theta:?}");
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut theta = vec![0.3, -2.0];
        let mut adam = Adam::new(2, AdamConfig::default());
        for _ in 0..100 {
            adam.step(&mut theta, &[0.0, 0.0], 1e-3).unwrap();
        }
        assert!((theta[0] - 0.3).abs() <= 1e-12 && (theta[1] + 2.0).abs() <= 1e-12);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias correction makes the first step exactly lr * sign(g) up to eps.
        let mut theta = vec![0.0, 0.0];
        let mut adam = Adam::new(2, AdamConfig::default());
        adam.step(&mut theta, &[5.0, -0.01], 0.1).unwrap();
        assert!((theta[0] + 0.1).abs() < 1e-8 && (theta[1] - 0.1).abs() < 1e-6);
        assert_eq!(adam.step(&mut theta, &[f64::NAN, 0.0], 0.1).unwrap_err(), OptimError::NonFiniteGradient { index: 0 });
    }
}
