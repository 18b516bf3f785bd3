use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    /// `base * min(step^-1/2, step * warmup^-3/2)`: linear warmup, then
    /// inverse square-root decay. Any model-width factor is folded into `base`.
    InverseSqrt { base: f64, warmup_steps: u64 },
    Constant { lr: f64 },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::InverseSqrt { base, warmup_steps } => {
                if !(base > 0.0) {
                    return Err(Error::InvalidConfig(format!("lr base must be > 0, got {base}")));
                }
                if warmup_steps == 0 {
                    return Err(Error::InvalidConfig("warmup_steps must be >= 1".into()));
                }
            }
            LrSchedule::Constant { lr } => {
                if !(lr > 0.0) {
                    return Err(Error::InvalidConfig(format!("constant lr must be > 0, got {lr}")));
                }
            }
        }
        Ok(())
    }
}

/// Learning rate at a 1-based `step`. Step 0 is treated as step 1.
pub fn lr_at(schedule: &LrSchedule, step: u64) -> f64 {
    let step = step.max(1) as f64;
    match *schedule {
        LrSchedule::InverseSqrt { base, warmup_steps } => {
            let w = warmup_steps as f64;
            base * step.powf(-0.5).min(step * w.powf(-1.5))
        }
        LrSchedule::Constant { lr } => lr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LONG_WARMUP: LrSchedule = LrSchedule::InverseSqrt {
        base: 1.5,
        warmup_steps: 40_000,
    };

    #[test]
    fn peak_at_warmup() {
        assert!((lr_at(&LONG_WARMUP, 40_000) - 0.0075).abs() < 1e-15);
    }

    #[test]
    fn first_step() {
        assert!((lr_at(&LONG_WARMUP, 1) - 1.875e-7).abs() < 1e-20);
    }

    #[test]
    fn continuous_at_warmup() {
        let w = 40_000f64;
        let warm = 1.5 * w * w.powf(-1.5);
        let decay = 1.5 * w.powf(-0.5);
        assert!((warm - decay).abs() < 1e-15);
        let before = lr_at(&LONG_WARMUP, 39_999);
        let after = lr_at(&LONG_WARMUP, 40_001);
        assert!((before - 0.0075).abs() < 1e-6 && (after - 0.0075).abs() < 1e-6);
    }

    #[test]
    fn decreasing_after_warmup() {
        let mut prev = lr_at(&LONG_WARMUP, 40_000);
        for s in (40_001..200_000).step_by(997) {
            let lr = lr_at(&LONG_WARMUP, s);
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn validation() {
        assert!(LrSchedule::InverseSqrt { base: 1.0, warmup_steps: 0 }.validate().is_err());
        assert!(LrSchedule::Constant { lr: 0.0 }.validate().is_err());
        assert_eq!(lr_at(&LrSchedule::Constant { lr: 0.1 }, 99), 0.1);
    }
}
