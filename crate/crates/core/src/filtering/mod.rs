//! Regularization: neighbourhood sensitivity filter, Helmholtz density filter
//! and smoothed-Heaviside projection with sharpness continuation.

mod helmholtz;
mod projection;
mod sensitivity;

pub use helmholtz::HelmholtzFilter;
pub use projection::{project, project_field, projection_derivative, ProjectionConfig};
pub use sensitivity::{sensitivity_filter, SensitivityFilter};

use crate::error::{Error, Result};

/// Conversion between a neighbourhood radius and the Helmholtz length scale
/// used by the benchmark setups: `R_min = R / (2 sqrt 3)`.
pub fn helmholtz_length_from_radius(radius: f64) -> f64 {
    radius / (2.0 * 3f64.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FilterConfig {
    /// Average objective sensitivities over the elements whose centers lie
    /// within `radius` (length units).
    Sensitivity { radius: f64 },
    /// Helmholtz density filter with length scale `length` followed by
    /// projection.
    Pde { length: f64 },
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let r = match *self {
            FilterConfig::Sensitivity { radius } => radius,
            FilterConfig::Pde { length } => length,
        };
        if r > 0.0 && r.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidFilter(format!("filter radius must be positive, got {r}")))
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FilterConfig::Sensitivity { .. } => "sensitivity",
            FilterConfig::Pde { .. } => "pde",
        }
    }
}
