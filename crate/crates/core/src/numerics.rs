//! Small numerical building blocks: Gaussian smoothing, correlation
//! coefficients, straight-line and Gaussian fits.

use ndarray::Array2;

use crate::fft::{fft, ifft, Fft2};
use crate::Complex64;

/// Spectrum of a unit-sum circular Gaussian kernel `exp(-d^2 / (2 s^2))`.
/// A zero width yields the identity kernel.
pub fn gaussian_kernel_spectrum(n: usize, sigma_px: f64) -> Vec<Complex64> {
    let mut k: Vec<Complex64> = (0..n)
        .map(|i| {
            let d = i.min(n - i) as f64;
            let v = if sigma_px > 0.0 {
                (-d * d / (2.0 * sigma_px * sigma_px)).exp()
            } else if i == 0 {
                1.0
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    let sum: f64 = k.iter().map(|v| v.re).sum();
    k.iter_mut().for_each(|v| *v /= sum);
    fft(&mut k);
    k
}

/// Circular Gaussian smoothing of a real 1D signal.
pub fn blur_circular(x: &[f64], sigma_px: f64) -> Vec<f64> {
    let kernel = gaussian_kernel_spectrum(x.len(), sigma_px);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft(&mut buf);
    buf.iter_mut().zip(&kernel).for_each(|(b, k)| *b *= k);
    ifft(&mut buf);
    buf.iter().map(|v| v.re).collect()
}

/// Circular, separable Gaussian blur of a real matrix.
pub fn blur_circular_2d(a: &Array2<f64>, sigma_px: f64) -> Array2<f64> {
    let (r, c) = a.dim();
    let kr = gaussian_kernel_spectrum(r, sigma_px);
    let kc = gaussian_kernel_spectrum(c, sigma_px);
    let plan = Fft2::new(r, c);
    let mut buf = a.mapv(|v| Complex64::new(v, 0.0));
    plan.forward(&mut buf);
    buf.indexed_iter_mut()
        .for_each(|((i, j), v)| *v *= kr[i] * kc[j]);
    plan.inverse(&mut buf);
    buf.mapv(|v| v.re)
}

/// Separable Gaussian blur with the kernel truncated at 4 sigma and
/// renormalised at the borders (no wrap-around).
pub fn blur_clamped_2d(a: &Array2<f64>, sigma_px: f64) -> Array2<f64> {
    if sigma_px <= 0.0 {
        return a.clone();
    }
    let half = (4.0 * sigma_px).ceil() as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma_px * sigma_px)).exp())
        .collect();
    let pass = |src: &Array2<f64>| -> Array2<f64> {
        let (r, c) = src.dim();
        Array2::from_shape_fn((r, c), |(i, j)| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (t, w) in taps.iter().enumerate() {
                let jj = j as isize + t as isize - half;
                if jj >= 0 && (jj as usize) < c {
                    acc += w * src[[i, jj as usize]];
                    wsum += w;
                }
            }
            acc / wsum
        })
    };
    let rows = pass(a);
    pass(&rows.t().to_owned()).t().to_owned()
}

/// Pearson correlation coefficient. Returns `None` when either input has
/// zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// `sqrt(sum |a - b|^2 / sum |b|^2)`.
pub fn relative_rms<'a, I>(pairs: I) -> f64
where
    I: IntoIterator<Item = (&'a Complex64, &'a Complex64)>,
{
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in pairs {
        num += (a - b).norm_sqr();
        den += b.norm_sqr();
    }
    (num / den).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares straight line.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

/// Least-squares fit of `amplitude * exp(-((x - center) / width)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    /// 1/e half-width.
    pub width: f64,
    /// RMS residual divided by the fitted amplitude.
    pub relative_residual: f64,
}

/// Levenberg-Marquardt Gaussian fit seeded from the profile moments.
pub fn fit_gaussian(x: &[f64], y: &[f64]) -> Option<GaussianFit> {
    assert_eq!(x.len(), y.len());
    if x.len() < 4 {
        return None;
    }
    let wsum: f64 = y.iter().map(|v| v.max(0.0)).sum();
    if wsum <= 0.0 {
        return None;
    }
    let c0 = x.iter().zip(y).map(|(a, b)| a * b.max(0.0)).sum::<f64>() / wsum;
    let var = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - c0).powi(2) * b.max(0.0))
        .sum::<f64>()
        / wsum;
    let a0 = y.iter().cloned().fold(f64::MIN, f64::max);
    let mut p = [a0, c0, (2.0 * var).sqrt().max(1e-12)];

    let sse = |p: &[f64; 3]| -> f64 {
        x.iter()
            .zip(y)
            .map(|(a, b)| {
                let g = p[0] * (-((a - p[1]) / p[2]).powi(2)).exp();
                (b - g).powi(2)
            })
            .sum()
    };
    let mut cost = sse(&p);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (a, b) in x.iter().zip(y) {
            let u = (a - p[1]) / p[2];
            let g = (-u * u).exp();
            let f = p[0] * g;
            let j = [g, f * 2.0 * u / p[2], f * 2.0 * u * u / p[2]];
            let r = b - f;
            for m in 0..3 {
                jtr[m] += j[m] * r;
                for n in 0..3 {
                    jtj[m][n] += j[m] * j[n];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut m = jtj;
            for (d, row) in m.iter_mut().enumerate() {
                row[d] *= 1.0 + lambda;
            }
            let Some(step) = solve3(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs()];
            let c = sse(&trial);
            if c < cost {
                let done = (cost - c) <= 1e-14 * cost.max(1e-300);
                p = trial;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if done {
                    return finish(p, cost, x.len());
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    finish(p, cost, x.len())
}

fn finish(p: [f64; 3], cost: f64, n: usize) -> Option<GaussianFit> {
    if !(p.iter().all(|v| v.is_finite()) && p[0] > 0.0 && p[2] > 0.0) {
        return None;
    }
    Some(GaussianFit {
        amplitude: p[0],
        center: p[1],
        width: p[2],
        relative_residual: (cost / n as f64).sqrt() / p[0],
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            a[row][col..]
                .iter_mut()
                .zip(&pivot_row[col..])
                .for_each(|(v, p)| *v -= f * p);
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
