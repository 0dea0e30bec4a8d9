use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::{UM_PER_MM, UM_PER_NM};

/// Parameters of the Gaussian biphoton state
/// `exp(-(r1-r2)^2/sigma_minus^2) * exp(-(r1+r2)^2/sigma_plus^2)`.
///
/// No ordering between the two widths is imposed: operating in the far field
/// of the crystal simply swaps their roles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub lambda_nm: f64,
    pub sigma_minus_mm: f64,
    pub sigma_plus_mm: f64,
}

impl SourceParams {
    pub fn new(lambda_nm: f64, sigma_minus_mm: f64, sigma_plus_mm: f64) -> Result<Self> {
        let s = Self {
            lambda_nm,
            sigma_minus_mm,
            sigma_plus_mm,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_nm", self.lambda_nm),
            ("sigma_minus_mm", self.sigma_minus_mm),
            ("sigma_plus_mm", self.sigma_plus_mm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return param(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn lambda_um(&self) -> f64 {
        self.lambda_nm * UM_PER_NM
    }

    pub fn sigma_minus_um(&self) -> f64 {
        self.sigma_minus_mm * UM_PER_MM
    }

    pub fn sigma_plus_um(&self) -> f64 {
        self.sigma_plus_mm * UM_PER_MM
    }

    /// Free-space wavenumber in rad/µm.
    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda_um()
    }

    pub fn swapped(&self) -> Self {
        Self {
            lambda_nm: self.lambda_nm,
            sigma_minus_mm: self.sigma_plus_mm,
            sigma_plus_mm: self.sigma_minus_mm,
        }
    }
}
