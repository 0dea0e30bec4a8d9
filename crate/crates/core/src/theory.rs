//! Closed-form and quadrature predictors for the biphoton correlation
//! `Γ_z(x̄ + δ, x̄ - δ)` behind a strong scatterer.
//!
//! At the scatterer plane the correlation factorises into the intensity
//! envelope of the source, `R0(r̄)`, and the scatterer correlation `µ`
//! evaluated at the photon separations `s = 2δ`. A unit-modulus phase
//! factor `C` multiplies the propagated correlation; every predictor here
//! reports magnitudes only, so `C` is dropped.
//!
//! Slices share the layout of the ensemble estimates: entry `(a, b)`
//! corresponds to the offset `δ = ((a - h), (b - h)) · pitch`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::source::SourceParams;
use crate::statistics::GammaWindow;
use crate::{Complex64, UM_PER_CM};

/// `Γ0 = R0(r̄) µ(s)` for a Gaussian source and Gaussian scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizedGamma0 {
    pub source: SourceParams,
    pub sigma0_um: f64,
}

impl FactorizedGamma0 {
    pub fn new(source: SourceParams, sigma0_um: f64) -> Result<Self> {
        source.validate()?;
        if !(sigma0_um.is_finite() && sigma0_um > 0.0) {
            return param(format!("sigma0 must be positive, got {sigma0_um}"));
        }
        Ok(Self { source, sigma0_um })
    }

    /// `|psi_in(r̄)|^2`.
    pub fn r0(&self, r1_um: f64, r2_um: f64) -> f64 {
        let d = (r1_um - r2_um) / self.source.sigma_minus_um();
        let s = (r1_um + r2_um) / self.source.sigma_plus_um();
        (-2.0 * d * d - 2.0 * s * s).exp()
    }

    /// Scatterer correlation at photon separations `(s1, s2)`.
    pub fn mu(&self, s1_um: f64, s2_um: f64) -> f64 {
        (-(s1_um * s1_um + s2_um * s2_um) / (self.sigma0_um * self.sigma0_um)).exp()
    }

    /// Width of the far-field mean-intensity envelope `exp(-x^2/h^2)`.
    pub fn envelope_width_um(&self, z_cm: f64) -> f64 {
        2.0 * z_cm * UM_PER_CM / (self.source.k0() * self.sigma0_um)
    }
}

/// Predicted correlation over a window of offsets around one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSlice {
    pub window: GammaWindow,
    pub pitch_um: f64,
    pub values: Array2<Complex64>,
}

impl GammaSlice {
    pub fn magnitude(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm())
    }

    /// Magnitudes divided by their maximum.
    pub fn normalized(&self) -> Array2<f64> {
        let m = self.magnitude();
        let peak = m.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            m / peak
        } else {
            m
        }
    }

    fn offsets(window: &GammaWindow, pitch_um: f64) -> impl Fn(usize) -> f64 {
        let h = window.half_width_px as f64;
        move |a| (a as f64 - h) * pitch_um
    }
}

fn build(
    window: &GammaWindow,
    pitch_um: f64,
    f: impl Fn(f64, f64) -> Complex64,
) -> Result<GammaSlice> {
    if !(pitch_um > 0.0) {
        return param(format!("pitch must be positive, got {pitch_um}"));
    }
    let off = GammaSlice::offsets(window, pitch_um);
    let n = window.size();
    Ok(GammaSlice {
        window: *window,
        pitch_um,
        values: Array2::from_shape_fn((n, n), |(a, b)| f(off(a), off(b))),
    })
}

/// `R0(x̄) µ(2δ)`, independent of distance.
pub fn gamma_near_field(
    f: &FactorizedGamma0,
    window: &GammaWindow,
    pitch_um: f64,
) -> Result<GammaSlice> {
    let (x1, x2) = window.anchor_um;
    let env = f.r0(x1, x2);
    build(window, pitch_um, |d1, d2| {
        Complex64::new(env * f.mu(2.0 * d1, 2.0 * d2), 0.0)
    })
}

/// Far-field magnitude: a Gaussian envelope over `x̄` of width
/// [`FactorizedGamma0::envelope_width_um`] times the Fourier transform of
/// `R0` evaluated at `k s / z`.
pub fn gamma_far_field(
    f: &FactorizedGamma0,
    z_cm: f64,
    window: &GammaWindow,
    pitch_um: f64,
) -> Result<GammaSlice> {
    if !(z_cm > 0.0) {
        return param(format!("far-field prediction needs z > 0, got {z_cm}"));
    }
    let z = z_cm * UM_PER_CM;
    let k = f.source.k0();
    let h = f.envelope_width_um(z_cm);
    let (x1, x2) = window.anchor_um;
    let env = (-(x1 * x1 + x2 * x2) / (h * h)).exp();
    let (sp, sm) = (f.source.sigma_plus_um(), f.source.sigma_minus_um());
    let r = std::f64::consts::FRAC_1_SQRT_2;
    build(window, pitch_um, |d1, d2| {
        let (s1, s2) = (2.0 * d1, 2.0 * d2);
        let (qp, qm) = (k / z * (s1 + s2) * r, k / z * (s1 - s2) * r);
        let sep = (-(qp * qp * sp * sp + qm * qm * sm * sm) / 16.0).exp();
        Complex64::new(env * sep, 0.0)
    })
}

/// Largest quadrature order accepted per axis.
pub const QUADRATURE_MAX_N: usize = 256;

/// Numeric evaluation of
/// `Γ(x̄, s) = ∫ dr̄ R0(r̄) exp(-σ0² k² |x̄ - r̄|² / 4z²) exp(-i (k/z) r̄·s)`
/// by the midpoint rule, valid at any distance.
///
/// The integrand separates along the rotated axes `(r̄1 ± r̄2)/√2`, so the
/// 2D midpoint sum is evaluated as a product of 1D sums over a domain
/// centred on, and a few widths around, the support of the Gaussian
/// product. The result is recomputed with `2n` nodes and rejected if any
/// entry moves by more than 1% of the peak.
pub fn gamma_intermediate_numeric(
    f: &FactorizedGamma0,
    z_cm: f64,
    window: &GammaWindow,
    pitch_um: f64,
    quadrature_n: usize,
) -> Result<GammaSlice> {
    if !(z_cm > 0.0) {
        return param(format!("quadrature needs z > 0, got {z_cm}"));
    }
    if quadrature_n == 0 || quadrature_n > QUADRATURE_MAX_N {
        return param(format!(
            "quadrature order must be in 1..={QUADRATURE_MAX_N}, got {quadrature_n}"
        ));
    }
    let coarse = intermediate(f, z_cm, window, pitch_um, quadrature_n)?;
    let fine = intermediate(f, z_cm, window, pitch_um, 2 * quadrature_n)?;
    let peak = fine.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let worst = coarse
        .values
        .iter()
        .zip(&fine.values)
        .map(|(a, b)| (a.norm() - b.norm()).abs())
        .fold(0.0, f64::max);
    if worst > 0.01 * peak {
        return Err(Error::Resolution(format!(
            "|Γ| changes by {:.2}% of the peak when doubling {quadrature_n} nodes",
            100.0 * worst / peak
        )));
    }
    Ok(coarse)
}

fn intermediate(
    f: &FactorizedGamma0,
    z_cm: f64,
    window: &GammaWindow,
    pitch_um: f64,
    n: usize,
) -> Result<GammaSlice> {
    let z = z_cm * UM_PER_CM;
    let k = f.source.k0();
    let h = f.envelope_width_um(z_cm);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (x1, x2) = window.anchor_um;
    let anchor = [(x1 + x2) * r, (x1 - x2) * r];
    // R0 = exp(-4 u+^2/σ+^2 - 4 u-^2/σ-^2) in rotated coordinates
    let sigmas = [f.source.sigma_plus_um(), f.source.sigma_minus_um()];

    // nodes and real weights per rotated axis
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..2)
        .map(|ax| {
            let prec = 4.0 / (sigmas[ax] * sigmas[ax]) + 1.0 / (h * h);
            let centre = anchor[ax] / (h * h) / prec;
            let half = 6.0 / prec.sqrt();
            let step = 2.0 * half / n as f64;
            (0..n)
                .map(|i| {
                    let u = centre - half + (i as f64 + 0.5) * step;
                    let w = (-4.0 * u * u / (sigmas[ax] * sigmas[ax])
                        - (anchor[ax] - u).powi(2) / (h * h))
                        .exp()
                        * step;
                    (u, w)
                })
                .unzip()
        })
        .collect();

    let integral = |ax: usize, q: f64| -> Complex64 {
        let (u, w) = &axes[ax];
        u.iter()
            .zip(w)
            .map(|(&u, &w)| Complex64::from_polar(w, -q * u))
            .sum()
    };
    build(window, pitch_um, |d1, d2| {
        let (s1, s2) = (2.0 * d1, 2.0 * d2);
        integral(0, k / z * (s1 + s2) * r) * integral(1, k / z * (s1 - s2) * r)
    })
}
