//! Ensemble statistics and width extraction.

mod classical;
mod ensemble;
mod widths;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::field::BiphotonField;
use crate::grid::Grid1D;

pub use classical::{classical_speckle_curve, ClassicalCurve, ClassicalOptions};
pub use ensemble::{
    ensemble_correlation, ensemble_correlations, EnsembleCorrelation, EnsembleSpec, GammaWindow,
};
pub use widths::{
    fov_widths, speckle_widths, width_curve, FovWidths, SpeckleWidths, WidthCurve, WidthOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapMode {
    SingleRealization,
    EnsembleMean,
}

/// Joint detection probability over `(x1, x2)`; rows index `x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMap {
    pub grid: Grid1D,
    pub values: Array2<f64>,
    pub z_cm: f64,
    pub n_realizations: usize,
    pub mode: MapMode,
}

impl CoincidenceMap {
    pub fn sum(&self) -> f64 {
        self.values.sum()
    }
}

pub fn coincidence_map(field: &BiphotonField) -> CoincidenceMap {
    CoincidenceMap {
        grid: *field.grid(),
        values: field.amplitudes().mapv(|v| v.norm_sqr()),
        z_cm: field.z_cm(),
        n_realizations: 1,
        mode: MapMode::SingleRealization,
    }
}
