//! Sum/difference coordinates of the joint detection plane.
//!
//! [`rotate_sum_diff`] maps an `(x1, x2)` image onto axes where the sum
//! coordinate `x1 + x2` runs horizontally (columns) and the difference
//! `x1 - x2` runs vertically (rows, increasing downward). Output pixel
//! `(v, u)`, measured from the centre index `n/2`, samples the input at
//! `x1 = (u + v)/√2`, `x2 = (u - v)/√2`. One output pixel therefore spans
//! `pitch * √2` along either of the physical sum or difference directions
//! `x1 ± x2`.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Rotate a square map by 45° about its centre index with bilinear
/// interpolation. The output has the input's shape; samples falling outside
/// the source are zero.
pub fn rotate_sum_diff(map: &Array2<f64>) -> Result<Array2<f64>> {
    let (r, c) = map.dim();
    if r != c {
        return Err(Error::Dimension(format!(
            "rotation needs a square map, got {r}x{c}"
        )));
    }
    let n = r;
    let centre = (n / 2) as f64;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(Array2::from_shape_fn((n, n), |(row, col)| {
        let v = row as f64 - centre;
        let u = col as f64 - centre;
        bilinear(map, centre + (u + v) * s, centre + (u - v) * s)
    }))
}

fn bilinear(a: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (r, c) = a.dim();
    if !(y >= 0.0 && x >= 0.0 && y <= (r - 1) as f64 && x <= (c - 1) as f64) {
        return 0.0;
    }
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(r - 1), (x0 + 1).min(c - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    a[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
        + a[[y0, x1]] * (1.0 - fy) * fx
        + a[[y1, x0]] * fy * (1.0 - fx)
        + a[[y1, x1]] * fy * fx
}
