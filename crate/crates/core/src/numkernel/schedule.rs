use super::math::cos;
use crate::{Error, Result};

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(lr_max: f64, lr_min: f64, total_steps: u64) -> Result<Self> {
        if !(lr_max > 0.0) || !(lr_min >= 0.0) || lr_min > lr_max || total_steps == 0 {
            return Err(Error::invalid(
                "cosine schedule needs 0 <= lr_min <= lr_max, lr_max > 0, total_steps >= 1",
            ));
        }
        Ok(LrSchedule {
            lr_max,
            lr_min,
            total_steps,
        })
    }

    pub fn at(&self, step: u64) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::invalid(alloc::format!(
                "step {step} outside schedule of {} steps",
                self.total_steps
            )));
        }
        let phase = core::f64::consts::PI * step as f64 / self.total_steps as f64;
        Ok(self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + cos(phase)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = LrSchedule::new(3e-4, 1e-5, 100).unwrap();
        assert_eq!(s.at(0).unwrap(), 3e-4);
        assert!((s.at(100).unwrap() - 1e-5).abs() < 1e-18);
        let half = LrSchedule::new(2.0, 0.0, 10).unwrap();
        assert!((half.at(5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_step() {
        let s = LrSchedule::new(1.0, 0.0, 10).unwrap();
        assert!(s.at(11).is_err());
    }

    #[test]
    fn nonincreasing_and_bounded() {
        let s = LrSchedule::new(1e-3, 1e-4, 997).unwrap();
        let mut prev = f64::INFINITY;
        for t in 0..=997 {
            let lr = s.at(t).unwrap();
            assert!(lr <= prev && (1e-4 - 1e-18..=1e-3).contains(&lr));
            prev = lr;
        }
    }
}
