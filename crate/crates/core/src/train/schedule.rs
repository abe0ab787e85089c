use serde::{Deserialize, Serialize};

/// Linear warm-up to `lr_max` over `warmup_steps`, then cosine annealing to
/// `lr_min` at `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn at(&self, step: u64) -> f64 {
        lr_at(step, self)
    }
}

/// Learning rate at optimizer step `step`. Steps past `total_steps` stay at `lr_min`.
pub fn lr_at(step: u64, s: &LrSchedule) -> f64 {
    let w = s.warmup_steps;
    if step < w {
        return s.lr_max * step as f64 / w as f64;
    }
    let span = s.total_steps.saturating_sub(w);
    if span == 0 || step >= s.total_steps {
        return if span == 0 { s.lr_max } else { s.lr_min };
    }
    let phase = (step - w) as f64 / span as f64;
    s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + (std::f64::consts::PI * phase).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched(w: u64, total: u64) -> LrSchedule {
        LrSchedule { lr_max: 1e-4, lr_min: 0.0, warmup_steps: w, total_steps: total }
    }

    #[test]
    fn anchor_points() {
        let s = sched(5000, 25_000);
        assert_eq!(lr_at(0, &s), 0.0);
        assert_eq!(lr_at(5000, &s), 1e-4);
        assert!((lr_at(15_000, &s) - 0.5e-4).abs() < 1e-18);
        assert!(lr_at(25_000, &s).abs() < 1e-20);
    }

    #[test]
    fn tail_is_monotone() {
        let s = sched(5000, 60_000);
        let mut prev = f64::INFINITY;
        for step in 5000..=60_000 {
            let lr = lr_at(step, &s);
            assert!(lr <= prev && lr >= 0.0);
            prev = lr;
        }
        assert_eq!(prev, 0.0);
    }

    proptest! {
        #[test]
        fn bounded_and_continuous(w in 1u64..10_000, extra in 1u64..100_000, step in 0u64..120_000) {
            let s = sched(w, w + extra);
            let lr = lr_at(step, &s);
            prop_assert!((0.0..=1e-4).contains(&lr));
            // The warm-up ramp meets the cosine head at step w.
            let left = 1e-4 * (w - 1) as f64 / w as f64;
            prop_assert!((lr_at(w, &s) - left).abs() <= 1e-4 / w as f64 + 1e-18);
        }
    }
}
