//! Camera-frame forward model and the accidental-subtracted coincidence
//! estimator
//!
//! `Γc(x1, x2) = (1/N) Σ_k I_k(x1) I_k(x2) - (1/(N-1)) Σ_k I_k(x1) I_{k+1}(x2)`,
//!
//! followed by blur, negative clipping and removal of a band around the
//! diagonal.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::Grid1D;
use crate::io;
use crate::numerics::blur_clamped_2d;
use crate::statistics::{CoincidenceMap, MapMode};

/// Frames generated per RNG stream.
const CHUNK: usize = 1024;

/// Uncorrelated counts added to every pixel of every frame (Poisson means).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub dark_rate: f64,
    pub background_rate: f64,
}

/// Number of photon pairs emitted per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PairRate {
    Poisson(f64),
    Fixed(usize),
}

/// Stack of 1D (binned) camera frames, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub intensities: Array2<f64>,
    pub pitch_um: f64,
    pub binning: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameDtype {
    U16,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FrameSidecar {
    n_frames: usize,
    pixels: usize,
    binning: usize,
    seed: Option<u64>,
    #[serde(default)]
    pitch_um: Option<f64>,
}

impl FrameStack {
    pub fn new(intensities: Array2<f64>, pitch_um: f64) -> Result<Self> {
        if intensities.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return param("frame intensities must be finite and non-negative");
        }
        Ok(Self {
            intensities,
            pitch_um,
            binning: 1,
            seed: None,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.intensities.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.intensities.ncols()
    }

    /// Write raw little-endian samples to `path` and metadata to `path.json`.
    pub fn save(&self, path: &Path, dtype: FrameDtype) -> Result<()> {
        match dtype {
            FrameDtype::U16 => {
                let v: Vec<u16> = self
                    .intensities
                    .iter()
                    .map(|x| x.round().clamp(0.0, u16::MAX as f64) as u16)
                    .collect();
                io::write_u16_le(path, &v)?;
            }
            FrameDtype::F32 => {
                let v: Vec<f32> = self.intensities.iter().map(|&x| x as f32).collect();
                io::write_f32_le(path, &v)?;
            }
        }
        io::write_json(
            &io::sidecar_path(path),
            &FrameSidecar {
                n_frames: self.n_frames(),
                pixels: self.pixels(),
                binning: self.binning,
                seed: self.seed,
                pitch_um: Some(self.pitch_um),
            },
        )
    }

    /// Read a stack written by [`FrameStack::save`] or by another tool; the
    /// sample type follows from the file size.
    pub fn load(path: &Path) -> Result<Self> {
        let meta: FrameSidecar = io::read_json(&io::sidecar_path(path))?;
        let count = meta.n_frames * meta.pixels;
        let size = std::fs::metadata(path)?.len() as usize;
        let values: Vec<f64> = if size == 2 * count {
            io::read_u16_le(path)?.into_iter().map(f64::from).collect()
        } else if size == 4 * count {
            io::read_f32_le(path)?.into_iter().map(f64::from).collect()
        } else {
            return Err(Error::Dimension(format!(
                "{size} bytes matches neither u16 nor f32 for {count} samples"
            )));
        };
        let intensities = Array2::from_shape_vec((meta.n_frames, meta.pixels), values)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let mut stack = Self::new(intensities, meta.pitch_um.unwrap_or(1.0))?;
        stack.binning = meta.binning;
        stack.seed = meta.seed;
        Ok(stack)
    }
}

/// Draw a frame stack whose pair positions follow `map`.
///
/// Each pair lands at `(x1, x2)` with probability proportional to the map
/// value and adds one count to each pixel. Frame chunk `c` uses ChaCha
/// stream `c` of `seed`, so output is independent of thread count.
pub fn synthesize_frames(
    map: &CoincidenceMap,
    n_frames: usize,
    pairs: PairRate,
    noise: &NoiseParams,
    seed: u64,
) -> Result<FrameStack> {
    let (n, m) = map.values.dim();
    if map.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::DegenerateDistribution(
            "map values must be finite and non-negative".into(),
        ));
    }
    let mut cdf = Vec::with_capacity(n * m);
    let mut acc = 0.0;
    for &v in map.values.iter() {
        acc += v;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::DegenerateDistribution("map is all zero".into()));
    }
    let pair_dist = match pairs {
        PairRate::Poisson(rate) if rate > 0.0 => {
            Some(Poisson::new(rate).map_err(|e| Error::Parameter(e.to_string()))?)
        }
        PairRate::Poisson(0.0) => None,
        PairRate::Poisson(rate) => return param(format!("pair rate must be >= 0, got {rate}")),
        PairRate::Fixed(_) => None,
    };
    let noise_rate = noise.dark_rate + noise.background_rate;
    if !(noise_rate >= 0.0) {
        return param("noise rates must be non-negative");
    }
    let noise_dist = if noise_rate > 0.0 {
        Some(Poisson::new(noise_rate).map_err(|e| Error::Parameter(e.to_string()))?)
    } else {
        None
    };

    let mut frames = Array2::<f64>::zeros((n_frames, n));
    frames
        .as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(CHUNK * n)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            for frame in chunk.chunks_mut(n) {
                let k = match (pairs, &pair_dist) {
                    (PairRate::Fixed(k), _) => k,
                    (_, Some(d)) => d.sample(&mut rng) as usize,
                    _ => 0,
                };
                for _ in 0..k {
                    let u = rng.random::<f64>() * acc;
                    let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                    frame[idx / m] += 1.0;
                    frame[idx % m] += 1.0;
                }
                if let Some(d) = &noise_dist {
                    frame.iter_mut().for_each(|v| *v += d.sample(&mut rng));
                }
            }
        });
    Ok(FrameStack {
        intensities: frames,
        pitch_um: map.grid.pitch_um(),
        binning: 1,
        seed: Some(seed),
    })
}

/// Sum groups of `factor` adjacent pixels.
pub fn bin_horizontal(stack: &FrameStack, factor: usize) -> Result<FrameStack> {
    if factor == 0 || stack.pixels() % factor != 0 {
        return param(format!(
            "{} pixels cannot be binned by {factor}",
            stack.pixels()
        ));
    }
    let p = stack.pixels() / factor;
    let out = Array2::from_shape_fn((stack.n_frames(), p), |(k, j)| {
        (0..factor)
            .map(|t| stack.intensities[[k, j * factor + t]])
            .sum()
    });
    Ok(FrameStack {
        intensities: out,
        pitch_um: stack.pitch_um * factor as f64,
        binning: stack.binning * factor,
        seed: stack.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Gaussian blur standard deviation in pixels; 0 disables it.
    pub blur_px: f64,
    /// Half-width of the zeroed band around the diagonal.
    pub exclusion_half_width: usize,
    pub clip_negatives: bool,
    /// Average the `k -> k+1` and `k+1 -> k` products in the accidental term.
    pub symmetric_shift: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            blur_px: 1.0,
            exclusion_half_width: 15,
            clip_negatives: true,
            symmetric_shift: false,
        }
    }
}

/// Same-frame minus adjacent-frame correlation, before any cleanup.
pub fn raw_coincidences(stack: &FrameStack, symmetric_shift: bool) -> Result<Array2<f64>> {
    let n = stack.n_frames();
    if n < 2 {
        return Err(Error::Estimator(format!("need at least 2 frames, got {n}")));
    }
    let p = stack.pixels();
    let sparse: Vec<Vec<(usize, f64)>> = stack
        .intensities
        .outer_iter()
        .map(|f| {
            f.iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect()
        })
        .collect();

    let partials: Vec<(Array2<f64>, Array2<f64>)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|ks| {
            let mut same = Array2::<f64>::zeros((p, p));
            let mut shift = Array2::<f64>::zeros((p, p));
            for &k in ks {
                let a = &sparse[k];
                for &(i, u) in a {
                    for &(j, v) in a {
                        same[[i, j]] += u * v;
                    }
                }
                if k + 1 < n {
                    let b = &sparse[k + 1];
                    for &(i, u) in a {
                        for &(j, v) in b {
                            if symmetric_shift {
                                shift[[i, j]] += 0.5 * u * v;
                                shift[[j, i]] += 0.5 * u * v;
                            } else {
                                shift[[i, j]] += u * v;
                            }
                        }
                    }
                }
            }
            (same, shift)
        })
        .collect();
    let mut same = Array2::<f64>::zeros((p, p));
    let mut shift = Array2::<f64>::zeros((p, p));
    for (a, b) in partials {
        same += &a;
        shift += &b;
    }
    Ok(same / n as f64 - shift / (n - 1) as f64)
}

/// Full estimator: raw coincidences, blur, clipping and diagonal-band
/// removal, in that order.
pub fn estimate_coincidences(stack: &FrameStack, cfg: &EstimatorConfig) -> Result<CoincidenceMap> {
    let grid = Grid1D::new(stack.pixels(), stack.pitch_um)?;
    let mut g = raw_coincidences(stack, cfg.symmetric_shift)?;
    if cfg.blur_px > 0.0 {
        g = blur_clamped_2d(&g, cfg.blur_px);
    }
    if cfg.clip_negatives {
        g.mapv_inplace(|v| v.max(0.0));
    }
    let band = cfg.exclusion_half_width;
    g.indexed_iter_mut()
        .filter(|((i, j), _)| i.abs_diff(*j) <= band)
        .for_each(|(_, v)| *v = 0.0);
    Ok(CoincidenceMap {
        grid,
        values: g,
        z_cm: 0.0,
        n_realizations: stack.n_frames(),
        mode: MapMode::EnsembleMean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid1D {
        Grid1D::new(64, 10.0).unwrap()
    }

    fn delta_map(a: usize, b: usize) -> CoincidenceMap {
        let mut v = Array2::zeros((64, 64));
        v[[a, b]] = 1.0;
        CoincidenceMap {
            grid: grid(),
            values: v,
            z_cm: 0.0,
            n_realizations: 1,
            mode: MapMode::SingleRealization,
        }
    }

    #[test]
    fn no_pairs_no_noise_is_dark() {
        let s = synthesize_frames(
            &delta_map(3, 40),
            100,
            PairRate::Poisson(0.0),
            &NoiseParams::default(),
            1,
        )
        .unwrap();
        assert!(s.intensities.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_map_hits_both_pixels_every_frame() {
        let s = synthesize_frames(
            &delta_map(3, 40),
            500,
            PairRate::Fixed(1),
            &NoiseParams::default(),
            2,
        )
        .unwrap();
        for f in s.intensities.outer_iter() {
            assert!(f[3] >= 1.0 && f[40] >= 1.0);
            assert_eq!(f.sum(), 2.0);
        }
    }

    #[test]
    fn total_counts_follow_poisson() {
        let map = CoincidenceMap {
            values: Array2::from_elem((64, 64), 1.0),
            ..delta_map(0, 0)
        };
        let (frames, rate) = (10_000, 3.0);
        let s = synthesize_frames(
            &map,
            frames,
            PairRate::Poisson(rate),
            &NoiseParams::default(),
            3,
        )
        .unwrap();
        let total = s.intensities.sum();
        let expected = 2.0 * rate * frames as f64;
        let sigma = 2.0 * (rate * frames as f64).sqrt();
        assert!(
            (total - expected).abs() < 3.0 * sigma,
            "{total} vs {expected}"
        );
    }

    #[test]
    fn synthesis_is_deterministic() {
        let map = delta_map(10, 50);
        let noise = NoiseParams {
            dark_rate: 0.1,
            background_rate: 0.2,
        };
        let a = synthesize_frames(&map, 3000, PairRate::Poisson(2.0), &noise, 9).unwrap();
        let b = synthesize_frames(&map, 3000, PairRate::Poisson(2.0), &noise, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_map_rejected() {
        let mut m = delta_map(0, 0);
        m.values.fill(0.0);
        let r = synthesize_frames(&m, 10, PairRate::Poisson(1.0), &NoiseParams::default(), 0);
        assert!(matches!(r, Err(Error::DegenerateDistribution(_))));
    }

    #[test]
    fn even_frame_pair_by_hand() {
        let n = 10;
        let mut v = Array2::zeros((n, 64));
        for k in (0..n).step_by(2) {
            v[[k, 5]] = 1.0;
            v[[k, 50]] = 1.0;
        }
        let s = FrameStack::new(v, 10.0).unwrap();
        let raw = raw_coincidences(&s, false).unwrap();
        // same-frame sum n/2, shifted sum 0
        assert!((raw[[5, 50]] * n as f64 - n as f64 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn static_intensity_cancels() {
        let s = FrameStack::new(Array2::from_elem((50, 64), 3.0), 10.0).unwrap();
        let raw = raw_coincidences(&s, false).unwrap();
        assert!(raw.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn too_few_frames() {
        let s = FrameStack::new(Array2::zeros((1, 64)), 10.0).unwrap();
        assert!(matches!(
            estimate_coincidences(&s, &EstimatorConfig::default()),
            Err(Error::Estimator(_))
        ));
    }

    #[test]
    fn cleanup_zeroes_band_and_negatives() {
        let s = synthesize_frames(
            &delta_map(10, 12),
            2000,
            PairRate::Poisson(1.0),
            &NoiseParams {
                dark_rate: 0.05,
                background_rate: 0.0,
            },
            4,
        )
        .unwrap();
        let m = estimate_coincidences(&s, &EstimatorConfig::default()).unwrap();
        assert!(m.values.iter().all(|&v| v >= 0.0));
        assert_eq!(m.values[[10, 12]], 0.0);
        assert_eq!(m.values[[30, 45]], 0.0);
    }

    #[test]
    fn symmetric_shift_gives_symmetric_estimate() {
        let s = synthesize_frames(
            &delta_map(5, 40),
            3000,
            PairRate::Poisson(2.0),
            &NoiseParams {
                dark_rate: 0.02,
                background_rate: 0.0,
            },
            5,
        )
        .unwrap();
        let raw = raw_coincidences(&s, true).unwrap();
        for ((i, j), v) in raw.indexed_iter() {
            assert!((v - raw[[j, i]]).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_invariant_in_shape() {
        let s = synthesize_frames(
            &delta_map(5, 40),
            500,
            PairRate::Poisson(2.0),
            &NoiseParams::default(),
            6,
        )
        .unwrap();
        let t = FrameStack::new(s.intensities.mapv(|v| 2.5 * v), 10.0).unwrap();
        let (a, b) = (
            raw_coincidences(&s, false).unwrap(),
            raw_coincidences(&t, false).unwrap(),
        );
        for (x, y) in a.iter().zip(&b) {
            assert!((y - 6.25 * x).abs() < 1e-9);
        }
    }

    #[test]
    fn binning() {
        let s = FrameStack::new(Array2::from_elem((3, 64), 1.0), 10.0).unwrap();
        assert_eq!(bin_horizontal(&s, 1).unwrap().intensities, s.intensities);
        let b = bin_horizontal(&s, 4).unwrap();
        assert!(b.intensities.iter().all(|&v| v == 4.0));
        assert_eq!(b.pixels(), 16);
        assert_eq!(b.binning, 4);
        assert!(bin_horizontal(&s, 3).is_err());
    }

    #[test]
    fn save_load_both_dtypes() {
        let dir = tempfile::tempdir().unwrap();
        let s = synthesize_frames(
            &delta_map(1, 60),
            20,
            PairRate::Fixed(2),
            &NoiseParams::default(),
            7,
        )
        .unwrap();
        for (name, dt) in [("a.u16", FrameDtype::U16), ("a.f32", FrameDtype::F32)] {
            let p = dir.path().join(name);
            s.save(&p, dt).unwrap();
            let back = FrameStack::load(&p).unwrap();
            assert_eq!(back.intensities, s.intensities);
            assert_eq!(back.seed, Some(7));
        }
    }
}
