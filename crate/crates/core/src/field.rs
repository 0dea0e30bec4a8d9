use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::scatterer::ScatterScreen;
use crate::source::SourceParams;
use crate::Complex64;

/// Joint two-photon amplitude `psi(r1, r2)` sampled on `grid x grid`.
///
/// Rows index photon 1, columns photon 2.
#[derive(Debug, Clone, PartialEq)]
pub struct BiphotonField {
    grid: Grid1D,
    amplitudes: Array2<Complex64>,
    lambda_nm: f64,
    z_cm: f64,
}

impl BiphotonField {
    pub fn new(
        grid: Grid1D,
        amplitudes: Array2<Complex64>,
        lambda_nm: f64,
        z_cm: f64,
    ) -> Result<Self> {
        let n = grid.count();
        if amplitudes.dim() != (n, n) {
            return Err(Error::Dimension(format!(
                "amplitudes are {:?}, grid needs {n}x{n}",
                amplitudes.dim()
            )));
        }
        if !(lambda_nm.is_finite() && lambda_nm > 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be positive, got {lambda_nm}"
            )));
        }
        Ok(Self {
            grid,
            amplitudes,
            lambda_nm,
            z_cm,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn amplitudes(&self) -> &Array2<Complex64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Array2<Complex64> {
        self.amplitudes
    }

    pub fn lambda_nm(&self) -> f64 {
        self.lambda_nm
    }

    pub fn z_cm(&self) -> f64 {
        self.z_cm
    }

    /// `sum |psi|^2 * pitch^2` in µm².
    pub fn total_power(&self) -> f64 {
        let p = self.grid.pitch_um();
        self.amplitudes.iter().map(|v| v.norm_sqr()).sum::<f64>() * p * p
    }

    pub(crate) fn with_amplitudes(&self, amplitudes: Array2<Complex64>, z_cm: f64) -> Self {
        Self {
            grid: self.grid,
            amplitudes,
            lambda_nm: self.lambda_nm,
            z_cm,
        }
    }
}

/// Gaussian biphoton state at the scatterer plane (`z = 0`).
pub fn build_input_state(grid: Grid1D, src: &SourceParams) -> Result<BiphotonField> {
    src.validate()?;
    let (sm, sp) = (src.sigma_minus_um(), src.sigma_plus_um());
    if grid.span_um() < 2.0 * sm.max(sp) {
        log::warn!(
            "grid span {:.0} um is below twice the widest source width ({:.0} um); the state is truncated",
            grid.span_um(),
            sm.max(sp)
        );
    }
    let r = grid.coords_um();
    let n = grid.count();
    let amplitudes = Array2::from_shape_fn((n, n), |(i, j)| {
        let d = (r[i] - r[j]) / sm;
        let s = (r[i] + r[j]) / sp;
        Complex64::new((-d * d - s * s).exp(), 0.0)
    });
    BiphotonField::new(grid, amplitudes, src.lambda_nm, 0.0)
}

/// Multiply by `exp(i phi(r1)) exp(i phi(r2))`.
pub fn apply_scatterer(field: &BiphotonField, screen: &ScatterScreen) -> Result<BiphotonField> {
    if screen.grid() != field.grid() {
        return Err(Error::Dimension(format!(
            "screen grid {:?} does not match field grid {:?}",
            screen.grid(),
            field.grid()
        )));
    }
    let t: Vec<Complex64> = screen
        .phase()
        .iter()
        .map(|&p| Complex64::from_polar(1.0, p))
        .collect();
    let mut out = field.amplitudes.clone();
    out.indexed_iter_mut()
        .for_each(|((i, j), v)| *v *= t[i] * t[j]);
    Ok(field.with_amplitudes(out, field.z_cm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (Grid1D, SourceParams) {
        (
            Grid1D::new(64, 20.0).unwrap(),
            SourceParams::new(810.0, 0.2, 0.4).unwrap(),
        )
    }

    #[test]
    fn centre_amplitude_is_one() {
        let (g, s) = small();
        let f = build_input_state(g, &s).unwrap();
        let c = g.center();
        assert_eq!(f.amplitudes()[[c, c]], Complex64::new(1.0, 0.0));
        assert_eq!(f.z_cm(), 0.0);
    }

    #[test]
    fn exchange_symmetric() {
        let (g, s) = small();
        let a = build_input_state(g, &s).unwrap().into_amplitudes();
        assert_eq!(a, a.t());
    }

    #[test]
    fn one_sigma_minus_gives_inverse_e() {
        // r1 - r2 = sigma_minus = 200 µm, r1 + r2 = 0 -> r1 = 100, r2 = -100
        let (g, s) = small();
        let a = build_input_state(g, &s).unwrap().into_amplitudes();
        let (i, j) = (g.index_of(100.0).unwrap(), g.index_of(-100.0).unwrap());
        assert!((a[[i, j]].re - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn scatterer_is_a_pure_phase() {
        let (g, s) = small();
        let f = build_input_state(g, &s).unwrap();
        let phase: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin() * 4.0).collect();
        let screen = ScatterScreen::from_phase(g, phase, 40.0, 0).unwrap();
        let out = apply_scatterer(&f, &screen).unwrap();
        for (a, b) in out.amplitudes().iter().zip(f.amplitudes()) {
            assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-15);
        }

        let zero = ScatterScreen::from_phase(g, vec![0.0; 64], 40.0, 0).unwrap();
        assert_eq!(apply_scatterer(&f, &zero).unwrap(), f);

        let c = 0.8;
        let flat = ScatterScreen::from_phase(g, vec![c; 64], 40.0, 0).unwrap();
        let out = apply_scatterer(&f, &flat).unwrap();
        let g2 = Complex64::from_polar(1.0, 2.0 * c);
        for (a, b) in out.amplitudes().iter().zip(f.amplitudes()) {
            assert!((a - b * g2).norm() < 1e-14);
        }
    }

    #[test]
    fn mismatched_screen_rejected() {
        let (g, s) = small();
        let f = build_input_state(g, &s).unwrap();
        let other = Grid1D::new(128, 20.0).unwrap();
        let screen = ScatterScreen::from_phase(other, vec![0.0; 128], 40.0, 0).unwrap();
        assert!(matches!(
            apply_scatterer(&f, &screen),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rejects_bad_source() {
        let (g, _) = small();
        let bad = SourceParams {
            lambda_nm: 810.0,
            sigma_minus_mm: -1.0,
            sigma_plus_mm: 1.0,
        };
        assert!(build_input_state(g, &bad).is_err());
    }
}
