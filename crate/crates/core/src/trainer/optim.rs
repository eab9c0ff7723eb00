use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{GradientSet, ParameterStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept in the store's parameter order.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParameterStore) -> Result<Self> {
        config.validate()?;
        let zeros = |_: ()| store.iter().map(|(_, v)| vec![0.0; v.len()]).collect::<Vec<_>>();
        Ok(Self {
            config,
            first: zeros(()),
            second: zeros(()),
            steps: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update. Parameters missing from `grads` are treated as having a
    /// zero gradient; gradients for unknown names are rejected.
    pub fn step(&mut self, store: &mut ParameterStore, grads: &GradientSet) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::shape("adam", "parameter store changed since construction"));
        }
        for (name, _) in grads.iter() {
            if store.get(name).is_none() {
                return Err(Error::invalid(format!("gradient for unknown parameter `{name}`")));
            }
        }
        self.steps += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - beta2.powi(self.steps.min(i32::MAX as u64) as i32);
        for (i, (name, value)) in store.iter_mut().enumerate() {
            let g = grads.get(name);
            if let Some(g) = g {
                if g.len() != value.len() {
                    return Err(Error::shape("adam", format!("gradient for `{name}` has the wrong size")));
                }
            }
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, p) in value.values_mut().iter_mut().enumerate() {
                let gj = g.map_or(0.0, |g| g.values()[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                *p -= learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::NumericArray;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParameterStore::new();
        store.insert("p", NumericArray::vector(vec![1.0, -2.0, 0.5]));
        let mut grads = GradientSet::zeros_like(&store);
        grads.accumulate("p", &NumericArray::vector(vec![3.0, -0.1, 0.0]));
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.01), &store).unwrap();
        adam.step(&mut store, &grads).unwrap();
        let v = store.get("p").unwrap().values();
        assert!((v[0] - 0.99).abs() < 1e-9);
        assert!((v[1] + 1.99).abs() < 1e-6);
        assert_eq!(v[2], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParameterStore::new();
        store.insert("p", NumericArray::vector(vec![4.0, -3.0]));
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.1), &store).unwrap();
        for _ in 0..500 {
            let p = store.get("p").unwrap().values().to_vec();
            let mut grads = GradientSet::new();
            grads.accumulate("p", &NumericArray::vector(p.iter().map(|x| 2.0 * x).collect()));
            adam.step(&mut store, &grads).unwrap();
        }
        assert!(store.get("p").unwrap().values().iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn rejects_unknown_gradients() {
        let mut store = ParameterStore::new();
        store.insert("p", NumericArray::vector(vec![1.0]));
        let mut adam = Adam::new(AdamConfig::default(), &store).unwrap();
        let mut grads = GradientSet::new();
        grads.accumulate("q", &NumericArray::vector(vec![1.0]));
        assert!(adam.step(&mut store, &grads).is_err());
        assert!(Adam::new(AdamConfig::with_learning_rate(0.0), &store).is_err());
    }
}
