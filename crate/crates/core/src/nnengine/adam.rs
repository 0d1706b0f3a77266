use serde::{Deserialize, Serialize};

use super::{Parameterized, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created on the first step
/// in parameter-visit order and must match on every later step.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.first, &self.second)
    }

    /// One update over every trainable parameter of `module`.
    pub fn step(&mut self, module: &mut impl Parameterized<T>) -> Result<()> {
        let mut layout = Vec::new();
        module.visit_params("", &mut |slot| {
            if slot.is_trainable() {
                layout.push(slot.value.len());
            }
        });
        if self.first.is_empty() {
            self.first = layout.iter().map(|&n| vec![T::zero(); n]).collect();
            self.second = self.first.clone();
        }
        if layout.len() != self.first.len()
            || layout.iter().zip(&self.first).any(|(&n, m)| n != m.len())
        {
            return Err(Error::shape(
                "adam_step parameter layout",
                format!("{} arrays", self.first.len()),
                format!("{} arrays", layout.len()),
            ));
        }
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step = T::of(c.lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(c.eps);
        let mut idx = 0;
        let (first, second) = (&mut self.first, &mut self.second);
        module.visit_params("", &mut |slot| {
            let Some(g) = slot.grad else { return };
            let (m, v) = (&mut first[idx], &mut second[idx]);
            idx += 1;
            for i in 0..m.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                slot.value[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::nnengine::ParamSlot;

    struct Scalars {
        value: Vec<f64>,
        grad: Vec<f64>,
    }

    impl Parameterized<f64> for Scalars {
        fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, f64>)) {
            f(ParamSlot {
                name: format!("{prefix}p"),
                shape: vec![self.value.len()],
                value: &mut self.value,
                grad: Some(&mut self.grad),
            });
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Scalars {
            value: vec![1.0, -2.0],
            grad: vec![0.0, 0.0],
        };
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut p).unwrap();
        assert_eq!(p.value, vec![1.0, -2.0]);
        assert_eq!(adam.step_count, 1);
        assert!(adam.moments().0[0].iter().all(|&m| m == 0.0));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Scalars {
            value: vec![0.0],
            grad: vec![1.0],
        };
        let mut adam = AdamState::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        adam.step(&mut p).unwrap();
        // m_hat = v_hat = 1 -> delta = lr / (1 + eps)
        assert!((p.value[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn layout_change_is_an_error() {
        let mut a = Scalars {
            value: vec![0.0; 2],
            grad: vec![1.0; 2],
        };
        let mut b = Scalars {
            value: vec![0.0; 3],
            grad: vec![1.0; 3],
        };
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut a).unwrap();
        assert!(adam.step(&mut b).is_err());
    }
}
