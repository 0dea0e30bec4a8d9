use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CoincidenceMap, MapMode};
use crate::error::{param, Result};
use crate::fft::Fft2;
use crate::field::build_input_state;
use crate::grid::Grid1D;
use crate::propagation::{apply_separable, transfer_function, PropagationMethod};
use crate::scatterer::{generate_screen_with, ScatterScreen, ScreenOptions};
use crate::source::SourceParams;
use crate::Complex64;

/// Intensity map and correlation window of one realization at one distance.
type PerDistance = (Array2<f64>, Array2<Complex64>);

/// Everything needed to reproduce an ensemble of scatterer realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub realizations: usize,
    pub master_seed: u64,
    pub z_list_cm: Vec<f64>,
    pub source: SourceParams,
    pub sigma0_um: f64,
    pub grid: Grid1D,
    pub method: PropagationMethod,
    #[serde(default = "unit_gain")]
    pub phase_gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return param("an ensemble needs at least one realization");
        }
        if self.z_list_cm.is_empty() {
            return param("z list is empty");
        }
        if self.z_list_cm.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return param("distances must be finite and non-negative");
        }
        if self.z_list_cm.windows(2).any(|w| w[1] < w[0]) {
            return param("z list must be sorted ascending");
        }
        self.source.validate()
    }

    pub fn screen_options(&self) -> ScreenOptions {
        ScreenOptions {
            phase_gain: self.phase_gain,
            ..Default::default()
        }
    }

    /// Screen of realization `i` (seed `master_seed + i`).
    pub fn screen(&self, i: usize) -> Result<ScatterScreen> {
        generate_screen_with(
            self.grid,
            self.sigma0_um,
            self.master_seed.wrapping_add(i as u64),
            &self.screen_options(),
        )
    }

    pub fn aliasing_distance_cm(&self) -> f64 {
        self.grid.aliasing_distance_cm(self.source.lambda_nm)
    }
}

/// Local correlation window: `Γ(x̄ + δ, x̄ - δ)` for pixel offsets
/// `δ ∈ [-half_width, half_width]^2` around the anchor `x̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaWindow {
    /// `(x̄1, x̄2)` in µm.
    pub anchor_um: (f64, f64),
    pub half_width_px: usize,
}

impl Default for GammaWindow {
    fn default() -> Self {
        Self {
            anchor_um: (0.0, 0.0),
            half_width_px: 16,
        }
    }
}

impl GammaWindow {
    pub fn size(&self) -> usize {
        2 * self.half_width_px + 1
    }

    pub(crate) fn anchor_index(&self, grid: &Grid1D) -> Result<(usize, usize)> {
        let h = self.half_width_px;
        let idx = |r: f64| -> Result<usize> {
            match grid.index_of(r) {
                Some(i) if i >= h && i + h < grid.count() => Ok(i),
                _ => param(format!(
                    "correlation window of half-width {h} px around {r} um leaves the grid"
                )),
            }
        };
        Ok((idx(self.anchor_um.0)?, idx(self.anchor_um.1)?))
    }

    fn extract(&self, psi: &Array2<Complex64>, anchor: (usize, usize)) -> Array2<Complex64> {
        let h = self.half_width_px as isize;
        let (a1, a2) = (anchor.0 as isize, anchor.1 as isize);
        Array2::from_shape_fn((self.size(), self.size()), |(a, b)| {
            let (d1, d2) = (a as isize - h, b as isize - h);
            let p = psi[[(a1 + d1) as usize, (a2 + d2) as usize]];
            let m = psi[[(a1 - d1) as usize, (a2 - d2) as usize]];
            p * m.conj()
        })
    }
}

/// Ensemble statistics at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCorrelation {
    pub mean_map: CoincidenceMap,
    /// Map of realization 0 (seed `master_seed`).
    pub first_map: CoincidenceMap,
    pub gamma_slice: Array2<Complex64>,
    pub window: GammaWindow,
}

pub fn ensemble_correlation(
    spec: &EnsembleSpec,
    z_cm: f64,
    window: &GammaWindow,
) -> Result<EnsembleCorrelation> {
    let mut one = spec.clone();
    one.z_list_cm = vec![z_cm];
    Ok(ensemble_correlations(&one, window)?.remove(0))
}

/// Run the ensemble once and collect statistics at every distance of
/// `spec.z_list_cm`.
///
/// Realizations are evaluated in parallel batches but folded into the
/// accumulators strictly in index order, so results do not depend on the
/// number of worker threads.
pub fn ensemble_correlations(
    spec: &EnsembleSpec,
    window: &GammaWindow,
) -> Result<Vec<EnsembleCorrelation>> {
    spec.validate()?;
    if spec.realizations < 30 {
        log::warn!(
            "{} realizations is too few for reliable correlation estimates",
            spec.realizations
        );
    }
    let grid = spec.grid;
    let n = grid.count();
    let anchor = window.anchor_index(&grid)?;
    let psi_in = build_input_state(grid, &spec.source)?.into_amplitudes();
    let plan = Fft2::new(n, n);
    let transfers: Vec<Vec<Complex64>> = spec
        .z_list_cm
        .iter()
        .map(|&z| transfer_function(&grid, spec.source.lambda_nm, z, spec.method, false))
        .collect();

    let nz = spec.z_list_cm.len();
    let mut sums: Vec<Array2<f64>> = vec![Array2::zeros((n, n)); nz];
    let mut gammas: Vec<Array2<Complex64>> =
        vec![Array2::zeros((window.size(), window.size())); nz];
    let mut first: Vec<Array2<f64>> = Vec::new();

    let batch = rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < spec.realizations {
        let end = (start + batch).min(spec.realizations);
        let results: Vec<Result<Vec<PerDistance>>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let screen = spec.screen(i)?;
                let t: Vec<Complex64> = screen
                    .phase()
                    .iter()
                    .map(|&p| Complex64::from_polar(1.0, p))
                    .collect();
                let mut spec0 = psi_in.clone();
                spec0
                    .indexed_iter_mut()
                    .for_each(|((a, b), v)| *v *= t[a] * t[b]);
                plan.forward(&mut spec0);
                Ok(transfers
                    .iter()
                    .map(|h| {
                        let mut psi = spec0.clone();
                        apply_separable(&mut psi, h);
                        plan.inverse(&mut psi);
                        (psi.mapv(|v| v.norm_sqr()), window.extract(&psi, anchor))
                    })
                    .collect())
            })
            .collect();
        for (offset, r) in results.into_iter().enumerate() {
            let per_z = r?;
            for (k, (map, g)) in per_z.into_iter().enumerate() {
                sums[k] += &map;
                gammas[k] += &g;
                if start + offset == 0 {
                    first.push(map);
                }
            }
        }
        start = end;
    }

    let m = spec.realizations as f64;
    Ok(spec
        .z_list_cm
        .iter()
        .zip(sums)
        .zip(gammas)
        .zip(first)
        .map(|(((&z, sum), gamma), first)| EnsembleCorrelation {
            mean_map: CoincidenceMap {
                grid,
                values: sum / m,
                z_cm: z,
                n_realizations: spec.realizations,
                mode: MapMode::EnsembleMean,
            },
            first_map: CoincidenceMap {
                grid,
                values: first,
                z_cm: z,
                n_realizations: 1,
                mode: MapMode::SingleRealization,
            },
            gamma_slice: gamma / Complex64::new(m, 0.0),
            window: *window,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::apply_scatterer;
    use crate::propagation::propagate;

    fn spec(realizations: usize) -> EnsembleSpec {
        EnsembleSpec {
            realizations,
            master_seed: 42,
            z_list_cm: vec![0.5, 1.0],
            source: SourceParams::new(810.0, 0.3, 0.6).unwrap(),
            sigma0_um: 60.0,
            grid: Grid1D::new(128, 20.0).unwrap(),
            method: PropagationMethod::default(),
            phase_gain: 5.0,
        }
    }

    #[test]
    fn single_realization_matches_direct_pipeline() {
        let s = spec(1);
        let w = GammaWindow {
            anchor_um: (100.0, -60.0),
            half_width_px: 4,
        };
        let out = ensemble_correlation(&s, 1.0, &w).unwrap();
        let field = build_input_state(s.grid, &s.source).unwrap();
        let field = apply_scatterer(&field, &s.screen(0).unwrap()).unwrap();
        let psi = propagate(&field, 1.0, s.method).unwrap();
        let direct = psi.amplitudes().mapv(|v| v.norm_sqr());
        for (a, b) in out.mean_map.values.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12 * direct.iter().cloned().fold(0.0, f64::max));
        }
        let (i, j) = w.anchor_index(&s.grid).unwrap();
        let g0 = out.gamma_slice[[4, 4]];
        assert!((g0.re - direct[[i, j]]).abs() < 1e-12);
        assert!(g0.im.abs() < 1e-15);
    }

    #[test]
    fn gamma_slice_is_hermitian() {
        let out = ensemble_correlation(&spec(3), 0.5, &GammaWindow::default()).unwrap();
        let g = &out.gamma_slice;
        let n = g.dim().0;
        for a in 0..n {
            for b in 0..n {
                let d = g[[a, b]] - g[[n - 1 - a, n - 1 - b]].conj();
                assert!(d.norm() < 1e-12 * g[[n / 2, n / 2]].norm());
            }
        }
    }

    #[test]
    fn multi_z_equals_single_z() {
        let s = spec(2);
        let w = GammaWindow::default();
        let all = ensemble_correlations(&s, &w).unwrap();
        let one = ensemble_correlation(&s, 1.0, &w).unwrap();
        assert_eq!(all[1].mean_map.values, one.mean_map.values);
    }

    #[test]
    fn window_outside_grid_rejected() {
        let w = GammaWindow {
            anchor_um: (1200.0, 0.0),
            half_width_px: 8,
        };
        assert!(ensemble_correlation(&spec(1), 1.0, &w).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(0);
        assert!(s.validate().is_err());
        s.realizations = 1;
        s.z_list_cm = vec![2.0, 1.0];
        assert!(s.validate().is_err());
        s.z_list_cm.clear();
        assert!(s.validate().is_err());
    }
}
