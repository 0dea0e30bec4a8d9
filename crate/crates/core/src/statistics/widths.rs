use std::collections::VecDeque;
use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::ensemble::{ensemble_correlation, EnsembleSpec, GammaWindow};
use super::CoincidenceMap;
use crate::coords::rotate_sum_diff;
use crate::error::{Error, Result};
use crate::fft::{fftshift2, Fft2};
use crate::numerics::{blur_circular_2d, fit_gaussian};
use crate::{Complex64, UM_PER_MM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthOptions {
    /// Envelope-removal blur (Gaussian standard deviation), µm.
    pub blur_um: f64,
    pub threshold: f64,
    /// Pixels kept on each side of the autocorrelation peak.
    pub window_half_px: usize,
    /// Pixels whose blurred intensity is below this fraction of the maximum
    /// are excluded.
    pub mask_fraction: f64,
}

impl Default for WidthOptions {
    fn default() -> Self {
        Self {
            blur_um: 200.0,
            threshold: 0.7,
            window_half_px: 64,
            mask_fraction: 0.05,
        }
    }
}

/// Speckle widths from the thresholded, rotated intensity autocorrelation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleWidths {
    /// Extent along the sum coordinate, µm.
    pub w_plus_um: f64,
    /// Extent along the difference coordinate, µm.
    pub w_minus_um: f64,
    /// Rotated, peak-normalised autocorrelation window (sum axis horizontal).
    pub autocorrelation: Array2<f64>,
}

/// Measure speckle grain size on a single-realization map.
///
/// The map is flattened by its own Gaussian blur, its mean-subtracted
/// autocorrelation is rotated onto sum/difference axes and the widths are
/// the full extents above `threshold` through the central row and column,
/// located with linear interpolation. Rotated pixels are `pitch·√2` wide.
pub fn speckle_widths(map: &CoincidenceMap, opts: &WidthOptions) -> Result<SpeckleWidths> {
    let (n, m) = map.values.dim();
    if n != m {
        return Err(Error::Dimension(format!("map must be square, got {n}x{m}")));
    }
    let pitch = map.grid.pitch_um();
    let h = opts.window_half_px;
    if 2 * h + 1 > n {
        return Err(Error::Parameter(format!(
            "autocorrelation window {} exceeds map size {n}",
            2 * h + 1
        )));
    }

    let blur = blur_circular_2d(&map.values, opts.blur_um / pitch);
    let peak = blur.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Parameter("map has no positive intensity".into()));
    }
    let cut = opts.mask_fraction * peak;
    let mut q = Array2::zeros((n, n));
    let mut count = 0usize;
    let mut total = 0.0;
    for ((i, j), &b) in blur.indexed_iter() {
        if b > cut {
            let v = map.values[[i, j]] / b;
            q[[i, j]] = v;
            total += v;
            count += 1;
        }
    }
    let mean = total / count as f64;
    for ((i, j), v) in q.indexed_iter_mut() {
        if blur[[i, j]] > cut {
            *v -= mean;
        }
    }

    let plan = Fft2::new(n, n);
    let mut spec = q.mapv(|v| Complex64::new(v, 0.0));
    plan.forward(&mut spec);
    spec.mapv_inplace(|v| Complex64::new(v.norm_sqr(), 0.0));
    plan.inverse(&mut spec);
    let ac = fftshift2(&spec.mapv(|v| v.re));
    let c = n / 2;
    let top = ac[[c, c]];
    if !(top > 0.0) {
        return Err(Error::Parameter("map has no intensity fluctuations".into()));
    }
    let window = ac.slice(s![c - h..=c + h, c - h..=c + h]).mapv(|v| v / top);
    let rotated = rotate_sum_diff(&window)?;

    if blob_touches_edge(&rotated, opts.threshold) {
        return Err(Error::SaturatedWidth(format!(
            "correlation peak above {} reaches the {}-pixel window edge",
            opts.threshold,
            2 * h + 1
        )));
    }
    let scale = pitch * std::f64::consts::SQRT_2;
    let row: Vec<f64> = rotated.row(h).to_vec();
    let col: Vec<f64> = rotated.column(h).to_vec();
    Ok(SpeckleWidths {
        w_plus_um: crossing_span(&row, opts.threshold) * scale,
        w_minus_um: crossing_span(&col, opts.threshold) * scale,
        autocorrelation: rotated,
    })
}

/// 4-connected flood fill from the centre over pixels `>= threshold`.
fn blob_touches_edge(a: &Array2<f64>, threshold: f64) -> bool {
    let (r, c) = a.dim();
    let mut seen = Array2::from_elem((r, c), false);
    let mut queue = VecDeque::from([(r / 2, c / 2)]);
    seen[[r / 2, c / 2]] = true;
    while let Some((i, j)) = queue.pop_front() {
        if i == 0 || j == 0 || i == r - 1 || j == c - 1 {
            return true;
        }
        for (ni, nj) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
            if !seen[[ni, nj]] && a[[ni, nj]] >= threshold {
                seen[[ni, nj]] = true;
                queue.push_back((ni, nj));
            }
        }
    }
    false
}

/// Distance between the interpolated threshold crossings on either side of
/// the centre sample, in samples.
fn crossing_span(line: &[f64], threshold: f64) -> f64 {
    let c = line.len() / 2;
    let mut right = c;
    while right + 1 < line.len() && line[right + 1] >= threshold {
        right += 1;
    }
    let fr = if right + 1 < line.len() {
        right as f64 + (line[right] - threshold) / (line[right] - line[right + 1])
    } else {
        right as f64
    };
    let mut left = c;
    while left > 0 && line[left - 1] >= threshold {
        left -= 1;
    }
    let fl = if left > 0 {
        left as f64 - (line[left] - threshold) / (line[left] - line[left - 1])
    } else {
        left as f64
    };
    fr - fl
}

/// Field-of-view widths of an ensemble-mean map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovWidths {
    /// 1/e full width along the sum coordinate, mm.
    pub l_plus_mm: f64,
    /// 1/e full width along the difference coordinate, mm.
    pub l_minus_mm: f64,
}

/// Fit Gaussians to the sum- and difference-axis profiles through the
/// centroid of the rotated mean map. Rotated pixels are `pitch·√2` wide.
pub fn fov_widths(mean_map: &CoincidenceMap) -> Result<FovWidths> {
    let rotated = rotate_sum_diff(&mean_map.values)?;
    let n = rotated.dim().0;
    let total: f64 = rotated.sum();
    if !(total > 0.0) {
        return Err(Error::FitQuality("mean map is empty".into()));
    }
    let (mut cr, mut cc) = (0.0, 0.0);
    for ((i, j), v) in rotated.indexed_iter() {
        cr += i as f64 * v;
        cc += j as f64 * v;
    }
    let (row, col) = (
        ((cr / total).round() as usize).min(n - 1),
        ((cc / total).round() as usize).min(n - 1),
    );
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let fit = |profile: Vec<f64>, axis: &str| -> Result<f64> {
        let f = fit_gaussian(&x, &profile)
            .ok_or_else(|| Error::FitQuality(format!("{axis} profile fit did not converge")))?;
        if f.relative_residual > 0.2 {
            return Err(Error::FitQuality(format!(
                "{axis} profile residual {:.3} exceeds 0.2",
                f.relative_residual
            )));
        }
        Ok(f.width)
    };
    let a_plus = fit(rotated.row(row).to_vec(), "sum")?;
    let a_minus = fit(rotated.column(col).to_vec(), "difference")?;
    let scale = 2.0 * mean_map.grid.pitch_um() * std::f64::consts::SQRT_2 / UM_PER_MM;
    Ok(FovWidths {
        l_plus_mm: a_plus * scale,
        l_minus_mm: a_minus * scale,
    })
}

/// Measured widths against distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthCurve {
    pub z_cm: Vec<f64>,
    pub w_plus_um: Vec<f64>,
    pub w_minus_um: Vec<f64>,
    pub l_plus_mm: Vec<f64>,
    pub l_minus_mm: Vec<f64>,
    pub threshold: f64,
    pub blur_um: f64,
    /// Seed of the screen used for the speckle widths.
    pub seed: u64,
}

#[derive(Serialize)]
struct CsvRow {
    z_cm: f64,
    w_plus_um: f64,
    w_minus_um: f64,
    l_plus_mm: f64,
    l_minus_mm: f64,
}

impl WidthCurve {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in 0..self.z_cm.len() {
            w.serialize(CsvRow {
                z_cm: self.z_cm[i],
                w_plus_um: self.w_plus_um[i],
                w_minus_um: self.w_minus_um[i],
                l_plus_mm: self.l_plus_mm[i],
                l_minus_mm: self.l_minus_mm[i],
            })
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Speckle widths on the screen of realization 0 and field-of-view widths
/// on the ensemble mean, at every distance of the spec.
pub fn width_curve(spec: &EnsembleSpec, opts: &WidthOptions) -> Result<WidthCurve> {
    spec.validate()?;
    let z_max = spec.aliasing_distance_cm();
    if let Some(&z) = spec.z_list_cm.iter().find(|&&z| z > z_max) {
        return Err(Error::Aliasing {
            z_cm: z,
            z_max_cm: z_max,
        });
    }
    let window = GammaWindow {
        anchor_um: (0.0, 0.0),
        half_width_px: 0,
    };
    let mut curve = WidthCurve {
        z_cm: Vec::new(),
        w_plus_um: Vec::new(),
        w_minus_um: Vec::new(),
        l_plus_mm: Vec::new(),
        l_minus_mm: Vec::new(),
        threshold: opts.threshold,
        blur_um: opts.blur_um,
        seed: spec.master_seed,
    };
    for &z in &spec.z_list_cm {
        let stats = ensemble_correlation(spec, z, &window)?;
        let w = speckle_widths(&stats.first_map, opts)?;
        let l = fov_widths(&stats.mean_map)?;
        log::info!(
            "z = {z} cm: w+ {:.1} um, w- {:.1} um, l+ {:.3} mm, l- {:.3} mm",
            w.w_plus_um,
            w.w_minus_um,
            l.l_plus_mm,
            l.l_minus_mm
        );
        curve.z_cm.push(z);
        curve.w_plus_um.push(w.w_plus_um);
        curve.w_minus_um.push(w.w_minus_um);
        curve.l_plus_mm.push(l.l_plus_mm);
        curve.l_minus_mm.push(l.l_minus_mm);
    }
    Ok(curve)
}
