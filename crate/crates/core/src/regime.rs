use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::source::SourceParams;
use crate::{UM_PER_CM, UM_PER_MM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NearField,
    Intermediate,
    FarField,
}

/// Predicted speckle (`w`, µm) and field-of-view (`l`, mm) widths.
///
/// `plus` always refers to the sum coordinate and `minus` to the difference
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedWidths {
    pub w_plus_um: f64,
    pub w_minus_um: f64,
    pub l_plus_mm: f64,
    pub l_minus_mm: f64,
}

/// Crossover distances for a source / scatterer pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub z_nf_cm: f64,
    pub z_ff_cm: f64,
    pub source: SourceParams,
    pub sigma0_um: f64,
}

impl RegimeReport {
    pub fn regime(&self, z_cm: f64) -> Regime {
        if z_cm < self.z_nf_cm {
            Regime::NearField
        } else if z_cm > self.z_ff_cm {
            Regime::FarField
        } else {
            Regime::Intermediate
        }
    }

    /// Each axis switches from its near-field value to the linear far-field
    /// law at its own crossover `sigma0 * sigma_axis / lambda`; both branches
    /// meet there.
    pub fn widths(&self, z_cm: f64) -> PredictedWidths {
        let lam = self.source.lambda_um();
        let z = z_cm * UM_PER_CM;
        let s0 = self.sigma0_um;
        let axis = |sigma: f64| -> (f64, f64) {
            if z * lam > s0 * sigma {
                (z * lam / sigma, z * lam / s0)
            } else {
                (s0, sigma)
            }
        };
        let (w_plus_um, l_plus) = axis(self.source.sigma_plus_um());
        let (w_minus_um, l_minus) = axis(self.source.sigma_minus_um());
        PredictedWidths {
            w_plus_um,
            w_minus_um,
            l_plus_mm: l_plus / UM_PER_MM,
            l_minus_mm: l_minus / UM_PER_MM,
        }
    }
}

pub fn regime_boundaries(src: &SourceParams, sigma0_um: f64) -> Result<RegimeReport> {
    src.validate()?;
    if !(sigma0_um.is_finite() && sigma0_um > 0.0) {
        return param(format!("sigma0 must be positive, got {sigma0_um}"));
    }
    let lam = src.lambda_um();
    let (lo, hi) = {
        let (a, b) = (src.sigma_minus_um(), src.sigma_plus_um());
        (a.min(b), a.max(b))
    };
    Ok(RegimeReport {
        z_nf_cm: sigma0_um * lo / lam / UM_PER_CM,
        z_ff_cm: sigma0_um * hi / lam / UM_PER_CM,
        source: *src,
        sigma0_um,
    })
}
