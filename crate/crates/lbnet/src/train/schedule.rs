//! Cosine-annealed learning rate.

use std::f64::consts::PI;

/// Anneal from `lr_max` at step 0 to `lr_min` at step `total`, following a
/// half cosine. Both endpoints are returned exactly; steps past the end stay
/// at the floor.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if step == 0 || total == 0 {
        return lr_max;
    }
    if step >= total {
        return lr_min;
    }
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * step as f64 / total as f64).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LR_MAX: f64 = 2e-4;
    const LR_MIN: f64 = 6.25e-6;

    #[test]
    fn endpoints_are_exact() {
        assert_eq!(cosine_lr(0, 1000, LR_MAX, LR_MIN), LR_MAX);
        assert_eq!(cosine_lr(1000, 1000, LR_MAX, LR_MIN), LR_MIN);
        assert_eq!(cosine_lr(5000, 1000, LR_MAX, LR_MIN), LR_MIN);
    }

    #[test]
    fn midpoint_is_the_arithmetic_mean() {
        let mid = cosine_lr(500, 1000, LR_MAX, LR_MIN);
        assert!((mid - 1.03125e-4).abs() < 1e-15, "mid {mid}");
    }

    #[test]
    fn monotone_between_endpoints() {
        let mut prev = cosine_lr(0, 200, LR_MAX, LR_MIN);
        for t in 1..=200 {
            let lr = cosine_lr(t, 200, LR_MAX, LR_MIN);
            assert!(lr < prev, "step {t}: {lr} !< {prev}");
            assert!((LR_MIN..=LR_MAX).contains(&lr));
            prev = lr;
        }
    }

    #[test]
    fn half_period_symmetry() {
        for t in 0..=300 {
            let a = cosine_lr(t, 300, LR_MAX, LR_MIN);
            let b = cosine_lr(300 - t, 300, LR_MAX, LR_MIN);
            assert!((a + b - (LR_MAX + LR_MIN)).abs() < 1e-18);
        }
    }
}
