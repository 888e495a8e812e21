use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-cosine interpolation from `lr_max` at step 0 to `lr_min` at
/// `total_steps`. A zero-length schedule stays at `lr_max`.
pub fn cosine_lr(step: u64, total_steps: u64, lr_max: f64, lr_min: f64) -> f64 {
    if total_steps == 0 {
        return lr_max;
    }
    let progress = step.min(total_steps) as f64 / total_steps as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * progress).cos())
}

/// One line of training progress: mean loss over an epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub total_steps: u64,
    pub lr_min: f64,
}

/// Adam with an optional cosine-annealed learning rate.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    schedule: Option<CosineSchedule>,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    /// `sizes` lists the length of every parameter tensor, in the order they
    /// will be passed to [`Adam::step`].
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            schedule: None,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn with_schedule(mut self, schedule: CosineSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        match self.schedule {
            Some(s) => cosine_lr(self.step, s.total_steps, self.config.lr, s.lr_min),
            None => self.config.lr,
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != p.len() {
                return Err(Error::Shape(format!("tensor {i}: parameter/gradient/moment lengths differ")));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("gradient (tensor {i}, element {j})"),
                    step: self.step,
                });
            }
        }
        let lr = self.current_lr();
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 100, 1e-3, 1e-5), 1e-3);
        assert!((cosine_lr(100, 100, 1e-3, 1e-5) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 1e-3, 1e-5) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
        assert_eq!(cosine_lr(5, 0, 0.1, 0.0), 0.1);
    }

    #[test]
    fn cosine_is_monotone_non_increasing() {
        let lrs: Vec<f64> = (0..=40).map(|s| cosine_lr(s, 40, 0.5, 0.01)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0, -2.0, 3.0];
        for _ in 0..5 {
            adam.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn single_step_matches_hand_formula() {
        // m = 0.1, v = 0.001, m̂ = 1, v̂ = 1: Δ = -lr / (1 + eps).
        let mut adam = Adam::new(AdamConfig::default(), &[1]);
        let mut p = vec![0.5];
        adam.step(&mut [&mut p], &[&[1.0]]).unwrap();
        let expected = 0.5 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0, 0.0];
        for _ in 0..100 {
            adam.step(&mut [&mut p], &[&[2.5, -0.3]]).unwrap();
        }
        assert!(p[0] < 0.0 && p[1] > 0.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0, 0.0];
        let err = adam.step(&mut [&mut p], &[&[1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 0, .. }));
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn schedule_decays_learning_rate() {
        let mut adam = Adam::new(AdamConfig::default(), &[1]).with_schedule(CosineSchedule {
            total_steps: 4,
            lr_min: 0.0,
        });
        let mut p = vec![0.0];
        let mut seen = vec![];
        for _ in 0..4 {
            seen.push(adam.current_lr());
            adam.step(&mut [&mut p], &[&[1.0]]).unwrap();
        }
        assert_eq!(seen[0], 1e-3);
        assert_eq!(adam.current_lr(), 0.0);
    }
}
