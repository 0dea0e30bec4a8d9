use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::UM_PER_NM;

/// Uniform, centred 1D sampling lattice.
///
/// Sample `i` sits at `r_i = (i - count/2) * pitch`, so the origin falls on
/// index `count/2` and the lattice is symmetric apart from the single extra
/// sample at the negative edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    count: usize,
    pitch_um: f64,
}

impl Grid1D {
    pub const MIN_COUNT: usize = 64;

    pub fn new(count: usize, pitch_um: f64) -> Result<Self> {
        if count < Self::MIN_COUNT || count % 2 != 0 {
            return param(format!(
                "grid count must be even and >= {}, got {count}",
                Self::MIN_COUNT
            ));
        }
        if !(pitch_um.is_finite() && pitch_um > 0.0) {
            return param(format!("grid pitch must be positive, got {pitch_um}"));
        }
        Ok(Self { count, pitch_um })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn pitch_um(&self) -> f64 {
        self.pitch_um
    }

    pub fn span_um(&self) -> f64 {
        self.count as f64 * self.pitch_um
    }

    /// Index of the `r = 0` sample.
    pub fn center(&self) -> usize {
        self.count / 2
    }

    pub fn coord_um(&self, i: usize) -> f64 {
        (i as f64 - (self.count / 2) as f64) * self.pitch_um
    }

    pub fn coords_um(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.coord_um(i)).collect()
    }

    /// Nearest sample index for a coordinate, if it lies on the grid.
    pub fn index_of(&self, r_um: f64) -> Option<usize> {
        let i = (r_um / self.pitch_um).round() + (self.count / 2) as f64;
        (i >= 0.0 && i < self.count as f64).then_some(i as usize)
    }

    /// Angular wavenumbers in FFT order (rad/µm).
    pub fn wavenumbers(&self) -> Vec<f64> {
        crate::fft::fftfreq(self.count, self.pitch_um)
            .into_iter()
            .map(|f| 2.0 * std::f64::consts::PI * f)
            .collect()
    }

    /// Distance beyond which the sampled Fresnel chirp aliases:
    /// `pitch * span / lambda`, in cm.
    pub fn aliasing_distance_cm(&self, lambda_nm: f64) -> f64 {
        self.pitch_um * self.span_um() / (lambda_nm * UM_PER_NM) / crate::UM_PER_CM
    }
}
