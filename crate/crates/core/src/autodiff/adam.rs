use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam with bias correction. Moments are created lazily, zero-initialized,
/// the first time a parameter is seen.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: BTreeMap<String, Vec<f64>>,
    second_moment: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update. Every gradient is validated before any parameter is
    /// touched, so a rejected step leaves `params` and the moments unchanged.
    /// Parameters without a gradient entry are treated as having zero gradient.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a String, &'a mut Tensor)>,
        grads: &BTreeMap<String, Vec<f64>>,
    ) -> Result<(), AutodiffError> {
        let params: Vec<(&String, &mut Tensor)> = params.into_iter().collect();
        for (name, value) in &params {
            if let Some(g) = grads.get(*name) {
                if g.len() != value.len() {
                    return Err(AutodiffError::GradientLength {
                        name: (*name).clone(),
                        expected: value.len(),
                        got: g.len(),
                    });
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(AutodiffError::NonFiniteGradient((*name).clone()));
                }
            }
        }

        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (name, value) in params {
            let n = value.len();
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; n]);
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; n]);
            let zeros;
            let g = match grads.get(name) {
                Some(g) => g.as_slice(),
                None => {
                    zeros = vec![0.0; n];
                    &zeros
                }
            };
            for (((p, m), v), &g) in value.data_mut().iter_mut().zip(m).zip(v).zip(g) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
