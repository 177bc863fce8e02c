use crate::error::{Error, Result};

/// Smoothed Heaviside projection around 1/2. Maps [0, 1] onto [0, 1] with
/// fixed points 0, 1/2 and 1.
pub fn project(x: f64, beta: f64) -> f64 {
    let t = (0.5 * beta).tanh();
    (t + (beta * (x - 0.5)).tanh()) / (2.0 * t)
}

/// `d project / dx`.
pub fn projection_derivative(x: f64, beta: f64) -> f64 {
    let t = (0.5 * beta).tanh();
    let th = (beta * (x - 0.5)).tanh();
    beta * (1.0 - th * th) / (2.0 * t)
}

pub fn project_field(field: &[f64], beta: f64) -> Vec<f64> {
    field.iter().map(|&x| project(x, beta)).collect()
}

/// Sharpness schedule: start at `beta_initial`, double every
/// `doubling_period` iterations, never exceed `beta_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionConfig {
    pub beta_initial: f64,
    pub doubling_period: usize,
    pub beta_max: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            beta_initial: 2.0,
            doubling_period: 50,
            beta_max: 64.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_initial > 0.0 && self.beta_initial.is_finite()) {
            return Err(Error::InvalidFilter(format!(
                "initial beta must be positive, got {}",
                self.beta_initial
            )));
        }
        if self.doubling_period == 0 {
            return Err(Error::InvalidFilter("beta doubling period must be >= 1".into()));
        }
        if !(self.beta_max >= self.beta_initial) {
            return Err(Error::InvalidFilter(format!(
                "beta cap {} is below the initial beta {}",
                self.beta_max, self.beta_initial
            )));
        }
        Ok(())
    }

    /// Sharpness in effect at `iteration` (1-based).
    pub fn continuation_step(&self, iteration: usize) -> f64 {
        let doublings = iteration.saturating_sub(1) / self.doubling_period;
        let beta = self.beta_initial * 2f64.powi(doublings.min(1000) as i32);
        beta.min(self.beta_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_points_are_exact() {
        for beta in [0.5, 2.0, 8.0, 64.0] {
            assert_eq!(project(0.0, beta), 0.0);
            assert_eq!(project(0.5, beta), 0.5);
            assert_eq!(project(1.0, beta), 1.0);
        }
    }

    #[test]
    fn reference_value_at_quarter() {
        // (tanh 1 - tanh 0.5) / (2 tanh 1)
        assert!((project(0.25, 2.0) - 0.196_611_933_241_481_85).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-7;
        // kept where the slope is well above the 1e-9 round-off floor of the quotient
        for _ in 0..50 {
            let x: f64 = rng.random_range(0.1..0.9);
            let beta: f64 = rng.random_range(1.0..8.0);
            let fd = (project(x + h, beta) - project(x - h, beta)) / (2.0 * h);
            let exact = projection_derivative(x, beta);
            assert!(((fd - exact) / exact).abs() < 1e-6, "x={x} beta={beta}");
        }
    }

    #[test]
    fn continuation_schedule() {
        let cfg = ProjectionConfig::default();
        assert_eq!(cfg.continuation_step(1), 2.0);
        assert_eq!(cfg.continuation_step(50), 2.0);
        assert_eq!(cfg.continuation_step(51), 4.0);
        assert_eq!(cfg.continuation_step(101), 8.0);
        assert_eq!(cfg.continuation_step(10_000), 64.0);
        assert_eq!(cfg.continuation_step(usize::MAX), 64.0);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let mut cfg = ProjectionConfig::default();
        cfg.doubling_period = 0;
        assert!(cfg.validate().is_err());
        let cfg = ProjectionConfig {
            beta_initial: 8.0,
            beta_max: 4.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
