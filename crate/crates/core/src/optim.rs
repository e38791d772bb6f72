//! Adam with bias correction and the piecewise-constant learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant geometric decay from `lr0` to `lr_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub lr_min: f64,
    /// Epochs between decays.
    pub step: usize,
    /// Number of decays needed to go from `lr0` to `lr_min`.
    pub decay_steps: u32,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            lr0: 0.01,
            lr_min: 0.0001,
            step: 100,
            decay_steps: 5,
        }
    }
}

impl LrSchedule {
    /// Multiplicative factor applied at each step, `(lr_min / lr0)^(1 / decay_steps)`.
    pub fn factor(&self) -> f64 {
        if self.decay_steps == 0 {
            return 1.0;
        }
        (self.lr_min / self.lr0).powf(1.0 / f64::from(self.decay_steps))
    }

    /// `lr0 · factor^⌊epoch / step⌋`, clamped below at `lr_min`.
    pub fn at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.step.max(1)).min(i32::MAX as usize) as i32;
        (self.lr0 * self.factor().powi(k)).max(self.lr_min)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr0) || self.step == 0 {
            return Err(Error::InvalidInput(format!(
                "learning-rate schedule requires 0 < lr_min <= lr0 and step > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers for a fixed list of parameter buffers.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    /// `sizes` are the lengths of the parameter buffers, in update order.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Adam {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One bias-corrected Adam update, in place.
    pub fn step<G: AsRef<[f64]>>(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[G],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "adam state tracks {} buffers, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.as_ref();
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Contract(format!(
                    "adam buffer {i}: state length {}, parameter {}, gradient {}",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }

        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((p, &g), m), v) in p.iter_mut().zip(g.as_ref()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::default();
        assert_eq!(s.at(0), 0.01);
        assert_eq!(s.at(99), 0.01);
        assert!((s.at(100) - 0.0039810717055349725).abs() < 1e-15);
        assert!((s.at(599) - 0.0001).abs() < 1e-18);
        assert!(s.at(10_000) >= s.lr_min);
        assert!((s.factor() - 0.39811).abs() < 1e-5);
    }

    #[test]
    fn schedule_is_monotone() {
        let s = LrSchedule::default();
        for e in 1..800 {
            assert!(s.at(e) <= s.at(e - 1));
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut adam = Adam::new(AdamConfig::default(), &[3]);
        for _ in 0..5 {
            adam.step(&mut [p.as_mut_slice()], &[vec![0.0; 3]], 0.1)
                .unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let g = [0.5, -3.0, 1e-3];
        let mut p = vec![0.0; 3];
        let mut adam = Adam::new(AdamConfig::default(), &[3]);
        adam.step(&mut [p.as_mut_slice()], &[g], 0.01).unwrap();
        for (p, g) in p.iter().zip(g) {
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(adam
            .step(&mut [p.as_mut_slice()], &[vec![0.0; 3]], 0.1)
            .is_err());
        assert!(adam.step(&mut [], &[[0.0; 2]; 0], 0.1).is_err());
    }
}
