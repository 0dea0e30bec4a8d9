//! Thin random phase screens.
//!
//! A screen starts as i.i.d. uniform phases on `[0, 2π)`, is smoothed by a
//! circular Gaussian kernel and finally multiplied by a gain. The kernel
//! width is tuned by bisection until the fitted correlation length of
//! `exp(i φ)` lands within tolerance of the requested value.
//!
//! Realization `i` of an ensemble uses seed `master_seed + i`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fft::autocorrelation;
use crate::grid::Grid1D;
use crate::io;
use crate::numerics::blur_circular;
use crate::Complex64;

/// Correlation-magnitude floor below which lags are excluded from the fit.
pub const FIT_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterScreen {
    grid: Grid1D,
    phase: Vec<f64>,
    sigma0_um: f64,
    seed: u64,
    kernel_width_um: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenOptions {
    /// Multiplier applied to the smoothed phase.
    pub phase_gain: f64,
    /// Accepted relative calibration error.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ScreenOptions {
    fn default() -> Self {
        Self {
            phase_gain: 1.0,
            tolerance: 0.02,
            max_iterations: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScreenSidecar {
    count: usize,
    pitch_um: f64,
    sigma0_um: f64,
    seed: u64,
}

impl ScatterScreen {
    /// Wrap an existing phase array. `sigma0_um` is taken on trust.
    pub fn from_phase(grid: Grid1D, phase: Vec<f64>, sigma0_um: f64, seed: u64) -> Result<Self> {
        if phase.len() != grid.count() {
            return Err(Error::Dimension(format!(
                "{} phase samples for a {}-point grid",
                phase.len(),
                grid.count()
            )));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return param("phase values must be finite");
        }
        Ok(Self {
            grid,
            phase,
            sigma0_um,
            seed,
            kernel_width_um: None,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn sigma0_um(&self) -> f64 {
        self.sigma0_um
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Smoothing kernel standard deviation, when the screen was generated here.
    pub fn kernel_width_um(&self) -> Option<f64> {
        self.kernel_width_um
    }

    /// Same phase samples re-labelled on a lattice with another pitch.
    pub fn with_pitch(&self, pitch_um: f64) -> Result<Self> {
        let grid = Grid1D::new(self.grid.count(), pitch_um)?;
        let k = pitch_um / self.grid.pitch_um();
        Ok(Self {
            grid,
            phase: self.phase.clone(),
            sigma0_um: self.sigma0_um * k,
            seed: self.seed,
            kernel_width_um: self.kernel_width_um.map(|w| w * k),
        })
    }

    /// Write `path` (raw f64 LE) and `path.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_f64_le(path, &self.phase)?;
        io::write_json(
            &io::sidecar_path(path),
            &ScreenSidecar {
                count: self.grid.count(),
                pitch_um: self.grid.pitch_um(),
                sigma0_um: self.sigma0_um,
                seed: self.seed,
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: ScreenSidecar = io::read_json(&io::sidecar_path(path))?;
        let grid = Grid1D::new(meta.count, meta.pitch_um)?;
        Self::from_phase(grid, io::read_f64_le(path)?, meta.sigma0_um, meta.seed)
    }
}

/// Measured field autocorrelation of a screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile {
    /// Non-negative lags up to half the grid, µm.
    pub lags_um: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub fitted_sigma_um: f64,
    pub fit_residual: f64,
}

pub fn generate_screen(grid: Grid1D, target_sigma0_um: f64, seed: u64) -> Result<ScatterScreen> {
    generate_screen_with(grid, target_sigma0_um, seed, &ScreenOptions::default())
}

pub fn generate_screen_with(
    grid: Grid1D,
    target_sigma0_um: f64,
    seed: u64,
    opts: &ScreenOptions,
) -> Result<ScatterScreen> {
    let pitch = grid.pitch_um();
    if !(target_sigma0_um >= 3.0 * pitch) {
        return param(format!(
            "sigma0 {target_sigma0_um} um is not resolvable at pitch {pitch} um (need >= 3 pitches)"
        ));
    }
    if target_sigma0_um > grid.span_um() / 20.0 {
        return param(format!(
            "sigma0 {target_sigma0_um} um exceeds span/20 = {} um",
            grid.span_um() / 20.0
        ));
    }
    if !(opts.phase_gain.is_finite() && opts.phase_gain > 0.0) {
        return param(format!(
            "phase gain must be positive, got {}",
            opts.phase_gain
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..grid.count())
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();

    let build = |s_px: f64| -> Vec<f64> {
        blur_circular(&raw, s_px)
            .into_iter()
            .map(|v| v * opts.phase_gain)
            .collect()
    };
    let measure = |phase: &[f64]| -> Option<f64> {
        fit_profile(phase, pitch).ok().map(|p| p.fitted_sigma_um)
    };

    let target = target_sigma0_um;
    let (mut lo, mut hi) = (0.0_f64, 4.0 * target / pitch);
    let mut last = f64::NAN;
    for _ in 0..opts.max_iterations {
        let mid = 0.5 * (lo + hi);
        let phase = build(mid);
        match measure(&phase) {
            Some(m) => {
                last = m;
                if (m - target).abs() / target <= opts.tolerance {
                    return Ok(ScatterScreen {
                        grid,
                        phase,
                        sigma0_um: m,
                        seed,
                        kernel_width_um: Some(mid * pitch),
                    });
                }
                if m < target {
                    lo = mid;
                    if hi - mid < 1e-3 {
                        hi *= 2.0;
                    }
                } else {
                    hi = mid;
                }
            }
            // correlation never decays inside the grid: kernel far too wide
            None => hi = mid,
        }
    }
    Err(Error::Calibration {
        iterations: opts.max_iterations,
        target_um: target,
        last_um: last,
    })
}

/// Fit `A exp(-(δ/σ)^2)` to the normalised `|<e^{iφ(x)} e^{-iφ(x+δ)}>|`.
///
/// The mean of `e^{iφ}` is removed first so that a weak screen's unscattered
/// component does not appear as a lag-independent floor.
pub fn measure_sigma0(screen: &ScatterScreen) -> Result<CorrelationProfile> {
    fit_profile(&screen.phase, screen.grid.pitch_um())
}

fn fit_profile(phase: &[f64], pitch: f64) -> Result<CorrelationProfile> {
    let n = phase.len();
    let mut u: Vec<Complex64> = phase
        .iter()
        .map(|&p| Complex64::from_polar(1.0, p))
        .collect();
    let mean = u.iter().sum::<Complex64>() / n as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    let ac = autocorrelation(&u);
    let zero = ac[0].norm();
    if zero <= 1e-12 * n as f64 {
        return Err(Error::DegenerateScreen("screen phase is constant".into()));
    }
    let half = n / 2;
    let magnitude: Vec<f64> = ac[..half].iter().map(|v| v.norm() / zero).collect();
    let end = fit_extent(&magnitude).ok_or_else(|| {
        Error::DegenerateScreen("correlation does not decay within the grid".into())
    })?;
    let weights: Vec<f64> = (0..=end.ceil() as usize)
        .map(|k| (end - k as f64 + 1.0).clamp(0.0, 1.0))
        .collect();
    let (sigma_px, residual) = fit_zero_centred_gaussian(&magnitude[..weights.len()], &weights);
    Ok(CorrelationProfile {
        lags_um: (0..half).map(|k| k as f64 * pitch).collect(),
        magnitude,
        fitted_sigma_um: sigma_px * pitch,
        fit_residual: residual,
    })
}

/// Fractional lag at which the main lobe first falls to the fit level,
/// interpolated linearly, and at least 1. The level is the fixed floor or
/// twice the sampling-noise level seen at large lags, whichever is higher.
/// Varies continuously with the profile, so calibration can bisect on it.
fn fit_extent(magnitude: &[f64]) -> Option<f64> {
    let tail = &magnitude[magnitude.len() / 2..];
    let noise = (tail.iter().map(|m| m * m).sum::<f64>() / tail.len().max(1) as f64).sqrt();
    let level = FIT_FLOOR.max(2.0 * noise);
    let k = magnitude.windows(2).position(|w| w[1] <= level)?;
    let (a, b) = (magnitude[k], magnitude[k + 1]);
    let frac = if a > b {
        ((a - level) / (a - b)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some((k as f64 + frac).max(1.0))
}

/// Weighted least squares for `A exp(-(k/σ)^2)` at integer lags `k`; `A`
/// is solved in closed form for each trial `σ`. Returns `(σ, rms residual)`.
fn fit_zero_centred_gaussian(y: &[f64], w: &[f64]) -> (f64, f64) {
    let cost = |s: f64| -> f64 {
        let g: Vec<f64> = (0..y.len())
            .map(|k| (-(k as f64 / s).powi(2)).exp())
            .collect();
        let gy: f64 = g.iter().zip(y).zip(w).map(|((a, b), c)| c * a * b).sum();
        let gg: f64 = g.iter().zip(w).map(|(a, c)| c * a * a).sum();
        let a = gy / gg;
        g.iter()
            .zip(y)
            .zip(w)
            .map(|((gi, yi), c)| c * (yi - a * gi).powi(2))
            .sum()
    };
    let (lo, hi) = (0.05, 2.0 * y.len() as f64 + 1.0);
    let steps = 400;
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + i as f64 * h)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .expect("non-empty scan");
    // golden-section refinement within one scan step
    let (mut a, mut b) = ((best - h).max(lo * 0.5), best + h);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..80 {
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    let s = 0.5 * (a + b);
    (s, (cost(s) / w.iter().sum::<f64>()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1D {
        Grid1D::new(2048, 5.0).unwrap()
    }

    #[test]
    fn deterministic() {
        let a = generate_screen(grid(), 44.0, 7).unwrap();
        let b = generate_screen(grid(), 44.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a
            .phase()
            .iter()
            .zip(b.phase())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn calibration_survives_noisy_small_grids() {
        let grid = Grid1D::new(512, 20.0).unwrap();
        let opts = ScreenOptions {
            phase_gain: 5.0,
            ..Default::default()
        };
        for seed in 0..100 {
            generate_screen_with(grid, 80.0, seed, &opts).unwrap();
        }
    }

    #[test]
    fn calibrated_to_target() {
        for gain in [1.0, 5.0] {
            let opts = ScreenOptions {
                phase_gain: gain,
                ..Default::default()
            };
            let s = generate_screen_with(grid(), 44.0, 3, &opts).unwrap();
            assert!((43.1..=44.9).contains(&s.sigma0_um()), "{}", s.sigma0_um());
            let m = measure_sigma0(&s).unwrap().fitted_sigma_um;
            assert!((m - 44.0).abs() / 44.0 <= 0.02);
        }
    }

    #[test]
    fn profile_is_normalised() {
        let s = generate_screen(grid(), 44.0, 1).unwrap();
        let p = measure_sigma0(&s).unwrap();
        assert_eq!(p.magnitude[0], 1.0);
        assert_eq!(p.lags_um[1], 5.0);
        assert!(p.fit_residual < 0.05);
    }

    #[test]
    fn constant_screen_is_degenerate() {
        let s = ScatterScreen::from_phase(grid(), vec![1.3; 2048], 0.0, 0).unwrap();
        assert!(matches!(
            measure_sigma0(&s),
            Err(Error::DegenerateScreen(_))
        ));
    }

    #[test]
    fn unsmoothed_noise_is_sub_pixel_correlated() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phase: Vec<f64> = (0..2048)
                .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                .collect();
            let s = ScatterScreen::from_phase(grid(), phase, 0.0, seed).unwrap();
            let sig = measure_sigma0(&s).unwrap().fitted_sigma_um;
            assert!(sig <= 2.0 * 5.0, "seed {seed}: {sig}");
        }
    }

    #[test]
    fn global_phase_invariant() {
        let s = generate_screen(grid(), 44.0, 9).unwrap();
        let shifted: Vec<f64> = s.phase().iter().map(|p| p + 1.234).collect();
        let t = ScatterScreen::from_phase(*s.grid(), shifted, 0.0, 0).unwrap();
        let (a, b) = (
            measure_sigma0(&s).unwrap().fitted_sigma_um,
            measure_sigma0(&t).unwrap().fitted_sigma_um,
        );
        assert!((a - b).abs() < 1e-6 * a);
    }

    #[test]
    fn sigma_scales_with_pitch() {
        let s = generate_screen(grid(), 44.0, 2).unwrap();
        let t = s.with_pitch(12.5).unwrap();
        let (a, b) = (
            measure_sigma0(&s).unwrap().fitted_sigma_um,
            measure_sigma0(&t).unwrap().fitted_sigma_um,
        );
        assert!((b / a - 2.5).abs() < 1e-12);
    }

    #[test]
    fn independent_seeds_are_uncorrelated() {
        // long screens keep the sampling spread of r well below the bound
        let g = Grid1D::new(16384, 5.0).unwrap();
        for k in 0..20u64 {
            let a = generate_screen(g, 44.0, 100 + 2 * k).unwrap();
            let b = generate_screen(g, 44.0, 101 + 2 * k).unwrap();
            let r = crate::numerics::pearson(a.phase(), b.phase()).unwrap();
            assert!(r.abs() < 0.1, "pair {k}: {r}");
        }
    }

    #[test]
    fn unresolvable_target_rejected() {
        assert!(matches!(
            generate_screen(grid(), 10.0, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_screen(grid(), 600.0, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("screen.f64");
        let s = generate_screen(grid(), 44.0, 5).unwrap();
        s.save(&p).unwrap();
        let back = ScatterScreen::load(&p).unwrap();
        assert_eq!(back.phase(), s.phase());
        assert_eq!(back.seed(), 5);
        assert_eq!(back.sigma0_um(), s.sigma0_um());
    }
}
