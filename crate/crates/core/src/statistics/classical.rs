use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fft::autocorrelation;
use crate::grid::Grid1D;
use crate::numerics::blur_circular;
use crate::propagation::{propagate_classical, PropagationMethod};
use crate::scatterer::{generate_screen_with, ScreenOptions};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOptions {
    pub lambda_nm: f64,
    pub realizations: usize,
    pub method: PropagationMethod,
    pub phase_gain: f64,
    /// Level (relative to the peak) at which the autocovariance width is read.
    pub threshold: f64,
    /// Pixels whose smoothed mean intensity is below this fraction of the
    /// maximum are excluded from the statistics.
    pub region_fraction: f64,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        Self {
            lambda_nm: 810.0,
            realizations: 64,
            method: PropagationMethod::default(),
            phase_gain: 5.0,
            threshold: 0.5,
            region_fraction: 0.5,
        }
    }
}

/// Single-photon speckle size and contrast against distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalCurve {
    pub z_cm: Vec<f64>,
    /// Full width of the normalised intensity autocovariance at `threshold`.
    pub width_um: Vec<f64>,
    /// Standard deviation of `I / <I>` pooled over the illuminated region.
    pub contrast: Vec<f64>,
    pub aperture_um: f64,
    pub seed: u64,
}

/// Uniform beam of width `aperture_um` behind a random screen, propagated
/// in 1D. Realization `i` uses screen seed `seed + i`; intensities are
/// divided by the smoothed ensemble-mean envelope before correlating.
pub fn classical_speckle_curve(
    grid: Grid1D,
    sigma0_um: f64,
    aperture_um: f64,
    z_list_cm: &[f64],
    seed: u64,
    opts: &ClassicalOptions,
) -> Result<ClassicalCurve> {
    if !(aperture_um > 0.0 && aperture_um < grid.span_um()) {
        return param(format!(
            "aperture {aperture_um} um must lie inside the grid"
        ));
    }
    if opts.realizations < 2 {
        return param("the classical curve needs at least two realizations");
    }
    let z_max = grid.aliasing_distance_cm(opts.lambda_nm);
    if let Some(&z) = z_list_cm.iter().find(|&&z| z > z_max) {
        return Err(Error::Aliasing {
            z_cm: z,
            z_max_cm: z_max,
        });
    }
    let screen_opts = ScreenOptions {
        phase_gain: opts.phase_gain,
        ..Default::default()
    };
    let r = grid.coords_um();
    let n = grid.count();
    let pitch = grid.pitch_um();

    // intensities[z][realization][pixel]
    let per_real: Vec<Result<Vec<Vec<f64>>>> = (0..opts.realizations)
        .into_par_iter()
        .map(|i| {
            let screen =
                generate_screen_with(grid, sigma0_um, seed.wrapping_add(i as u64), &screen_opts)?;
            let field: Vec<Complex64> = r
                .iter()
                .zip(screen.phase())
                .map(|(x, &p)| {
                    if x.abs() <= aperture_um / 2.0 {
                        Complex64::from_polar(1.0, p)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            z_list_cm
                .iter()
                .map(|&z| {
                    let out = propagate_classical(&field, &grid, opts.lambda_nm, z, opts.method)?;
                    Ok(out.iter().map(|v| v.norm_sqr()).collect())
                })
                .collect()
        })
        .collect();
    let per_real: Vec<Vec<Vec<f64>>> = per_real.into_iter().collect::<Result<_>>()?;

    let mut curve = ClassicalCurve {
        z_cm: z_list_cm.to_vec(),
        width_um: Vec::new(),
        contrast: Vec::new(),
        aperture_um,
        seed,
    };
    let m = opts.realizations as f64;
    for (k, &z) in z_list_cm.iter().enumerate() {
        let mut mean = vec![0.0; n];
        for real in &per_real {
            mean.iter_mut().zip(&real[k]).for_each(|(a, b)| *a += b / m);
        }
        // smooth the envelope over a few speckle grains
        let envelope = blur_circular(&mean, 4.0 * sigma0_um / pitch);
        let peak = envelope.iter().cloned().fold(0.0, f64::max);
        let region: Vec<bool> = envelope
            .iter()
            .map(|&e| e > opts.region_fraction * peak)
            .collect();
        let count = region.iter().filter(|&&b| b).count();
        if count < 8 {
            return Err(Error::Parameter(format!(
                "illuminated region at z = {z} cm is too small"
            )));
        }

        let mut acov = vec![0.0; n];
        let (mut s1, mut s2, mut pooled) = (0.0, 0.0, 0usize);
        for real in &per_real {
            let norm: Vec<f64> = real[k]
                .iter()
                .zip(&envelope)
                .zip(&region)
                .map(|((i, e), &inside)| if inside { i / e } else { 0.0 })
                .collect();
            let mu = norm.iter().sum::<f64>() / count as f64;
            for (v, &inside) in norm.iter().zip(&region) {
                if inside {
                    s1 += v;
                    s2 += v * v;
                    pooled += 1;
                }
            }
            let centred: Vec<Complex64> = norm
                .iter()
                .zip(&region)
                .map(|(v, &inside)| Complex64::new(if inside { v - mu } else { 0.0 }, 0.0))
                .collect();
            acov.iter_mut()
                .zip(autocorrelation(&centred))
                .for_each(|(a, c)| *a += c.re);
        }
        let p = pooled as f64;
        let mean_norm = s1 / p;
        curve
            .contrast
            .push(((s2 / p - mean_norm * mean_norm).max(0.0)).sqrt() / mean_norm);
        curve
            .width_um
            .push(full_width(&acov, opts.threshold) * pitch);
    }
    Ok(curve)
}

/// Full width (in samples) of a circular autocovariance at `level` times its
/// zero-lag value, using linear interpolation on the falling edge.
fn full_width(acov: &[f64], level: f64) -> f64 {
    let target = level * acov[0];
    let half = acov.len() / 2;
    for l in 1..half {
        if acov[l] < target {
            let frac = (acov[l - 1] - target) / (acov[l - 1] - acov[l]);
            return 2.0 * ((l - 1) as f64 + frac);
        }
    }
    2.0 * half as f64
}
