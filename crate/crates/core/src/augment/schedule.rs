use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warm-up of the augmentation noise weight ω.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub max_weight: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl NoiseSchedule {
    pub fn new(max_weight: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        if !(max_weight >= 0.0 && max_weight.is_finite()) {
            return Err(Error::invalid(format!("ω_max must be ≥ 0, got {max_weight}")));
        }
        Ok(Self {
            max_weight,
            warmup_steps,
            total_steps,
        })
    }

    /// Warm-up over `fraction` of `total_steps`.
    pub fn with_warmup_fraction(max_weight: f64, fraction: f64, total_steps: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid(format!("warm-up fraction must be in [0,1], got {fraction}")));
        }
        let warmup = (fraction * total_steps as f64).round() as u64;
        Self::new(max_weight, warmup, total_steps)
    }

    pub fn disabled() -> Self {
        Self {
            max_weight: 0.0,
            warmup_steps: 0,
            total_steps: 0,
        }
    }

    /// ω at `step`: 0 at step 0, ω_max from `warmup_steps` on.
    pub fn noise_weight(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            return if step == 0 { 0.0 } else { self.max_weight };
        }
        if step >= self.warmup_steps {
            return self.max_weight;
        }
        self.max_weight * step as f64 / self.warmup_steps as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ramp_examples() {
        let s = NoiseSchedule::new(0.1, 1000, 4000).unwrap();
        assert_eq!(s.noise_weight(0), 0.0);
        assert_eq!(s.noise_weight(1000), 0.1);
        assert_eq!(s.noise_weight(5000), 0.1);
        assert!((s.noise_weight(250) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn zero_warmup_jumps_after_first_step() {
        let s = NoiseSchedule::new(0.3, 0, 10).unwrap();
        assert_eq!(s.noise_weight(0), 0.0);
        assert_eq!(s.noise_weight(1), 0.3);
    }

    proptest! {
        #[test]
        fn monotone(max in 0.0f64..2.0, warmup in 0u64..500, a in 0u64..1000, b in 0u64..1000) {
            let s = NoiseSchedule::new(max, warmup, 1000).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(s.noise_weight(lo) <= s.noise_weight(hi));
        }
    }
}
