//! Free-space propagation of biphoton and classical fields.
//!
//! Both photons see the same transfer function, so the biphoton transfer is
//! the outer product `H(k1) H(k2)` applied to the 2D spectrum. Forward
//! propagation uses the `exp(+i k0 x^2 / 2z)` impulse-response sign.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fft::{fft, ifft, Fft2};
use crate::field::BiphotonField;
use crate::grid::Grid1D;
use crate::{Complex64, UM_PER_CM, UM_PER_NM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PropagationMethod {
    /// `H(k) = exp(i z sqrt(k0^2 - k^2))`. Evanescent components are zeroed
    /// when the flag is set, otherwise damped.
    AngularSpectrum { zero_evanescent: bool },
    /// Paraxial `H(k) = exp(-i z k^2 / 2k0)`, without the `exp(i k0 z)`
    /// carrier.
    Fresnel,
}

impl Default for PropagationMethod {
    fn default() -> Self {
        Self::AngularSpectrum {
            zero_evanescent: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagateOptions {
    /// Use the conjugate transfer function (propagate towards the source).
    pub backward: bool,
    /// Embed the field in a grid twice as wide before transforming.
    pub zero_pad: bool,
}

/// Transfer function on the FFT wavenumber lattice of `grid`.
pub fn transfer_function(
    grid: &Grid1D,
    lambda_nm: f64,
    z_cm: f64,
    method: PropagationMethod,
    backward: bool,
) -> Vec<Complex64> {
    let k0 = std::f64::consts::TAU / (lambda_nm * UM_PER_NM);
    let z = z_cm * UM_PER_CM;
    grid.wavenumbers()
        .into_iter()
        .map(|k| {
            let h = match method {
                PropagationMethod::AngularSpectrum { zero_evanescent } => {
                    let q = k0 * k0 - k * k;
                    if q >= 0.0 {
                        Complex64::from_polar(1.0, z * q.sqrt())
                    } else if zero_evanescent {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new((-z * (-q).sqrt()).exp(), 0.0)
                    }
                }
                PropagationMethod::Fresnel => Complex64::from_polar(1.0, -z * k * k / (2.0 * k0)),
            };
            if backward {
                h.conj()
            } else {
                h
            }
        })
        .collect()
}

/// Multiply a 2D spectrum by `h[i] * h[j]` in place.
pub(crate) fn apply_separable(spec: &mut Array2<Complex64>, h: &[Complex64]) {
    use rayon::prelude::*;
    let n = h.len();
    spec.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            let hi = h[i];
            row.iter_mut().zip(h).for_each(|(v, hj)| *v *= hi * hj);
        });
}

fn check_z(z_cm: f64) -> Result<()> {
    if !(z_cm.is_finite() && z_cm >= 0.0) {
        return param(format!(
            "propagation distance must be >= 0 (use the backward option instead), got {z_cm}"
        ));
    }
    Ok(())
}

pub fn propagate(
    field: &BiphotonField,
    z_cm: f64,
    method: PropagationMethod,
) -> Result<BiphotonField> {
    propagate_with(field, z_cm, method, &PropagateOptions::default())
}

pub fn propagate_with(
    field: &BiphotonField,
    z_cm: f64,
    method: PropagationMethod,
    opts: &PropagateOptions,
) -> Result<BiphotonField> {
    check_z(z_cm)?;
    let grid = *field.grid();
    let n = grid.count();
    let (work_grid, mut buf) = if opts.zero_pad {
        let g = Grid1D::new(2 * n, grid.pitch_um())?;
        let mut big = Array2::zeros((2 * n, 2 * n));
        let o = n / 2;
        big.slice_mut(s![o..o + n, o..o + n])
            .assign(field.amplitudes());
        (g, big)
    } else {
        (grid, field.amplitudes().clone())
    };
    let m = work_grid.count();
    let plan = Fft2::new(m, m);
    let h = transfer_function(&work_grid, field.lambda_nm(), z_cm, method, opts.backward);
    plan.forward(&mut buf);
    apply_separable(&mut buf, &h);
    plan.inverse(&mut buf);
    let out = if opts.zero_pad {
        let o = n / 2;
        buf.slice(s![o..o + n, o..o + n]).to_owned()
    } else {
        buf
    };
    let dz = if opts.backward { -z_cm } else { z_cm };
    Ok(field.with_amplitudes(out, field.z_cm() + dz))
}

/// One-dimensional analogue of [`propagate`].
pub fn propagate_classical(
    field: &[Complex64],
    grid: &Grid1D,
    lambda_nm: f64,
    z_cm: f64,
    method: PropagationMethod,
) -> Result<Vec<Complex64>> {
    check_z(z_cm)?;
    if field.len() != grid.count() {
        return Err(Error::Dimension(format!(
            "{} samples for a {}-point grid",
            field.len(),
            grid.count()
        )));
    }
    let h = transfer_function(grid, lambda_nm, z_cm, method, false);
    let mut buf = field.to_vec();
    fft(&mut buf);
    buf.iter_mut().zip(&h).for_each(|(v, hk)| *v *= hk);
    ifft(&mut buf);
    Ok(buf)
}

/// Largest grid accepted by [`propagate_direct_quadrature`].
pub const QUADRATURE_MAX_COUNT: usize = 128;

/// Brute-force Riemann sum of the Fresnel convolution
/// `psi_z(x1, x2) = sum h(x1 - r1) h(x2 - r2) psi(r1, r2)` with
/// `h(x) = exp(i k0 x^2 / 2z) / sqrt(i lambda z) * pitch`.
///
/// Cost is `O(N^4)`; meant as a reference for small grids only.
pub fn propagate_direct_quadrature(field: &BiphotonField, z_cm: f64) -> Result<BiphotonField> {
    let grid = *field.grid();
    let n = grid.count();
    if n > QUADRATURE_MAX_COUNT {
        return param(format!(
            "direct quadrature is limited to {QUADRATURE_MAX_COUNT} samples, grid has {n}"
        ));
    }
    if !(z_cm.is_finite() && z_cm > 0.0) {
        return param(format!("quadrature needs z > 0, got {z_cm}"));
    }
    let lam = field.lambda_nm() * UM_PER_NM;
    let z = z_cm * UM_PER_CM;
    let k0 = std::f64::consts::TAU / lam;
    let p = grid.pitch_um();
    let norm = Complex64::new(0.0, lam * z).sqrt().inv() * p;
    // kernel indexed by (x - r) / pitch + (n - 1)
    let kernel: Vec<Complex64> = (0..2 * n - 1)
        .map(|d| {
            let x = (d as f64 - (n - 1) as f64) * p;
            Complex64::from_polar(1.0, k0 * x * x / (2.0 * z)) * norm
        })
        .collect();
    let psi = field.amplitudes();
    use rayon::prelude::*;
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|x1| {
            (0..n)
                .map(|x2| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for r1 in 0..n {
                        let h1 = kernel[x1 + n - 1 - r1];
                        let mut inner = Complex64::new(0.0, 0.0);
                        for r2 in 0..n {
                            inner += kernel[x2 + n - 1 - r2] * psi[[r1, r2]];
                        }
                        acc += h1 * inner;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let out = Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]);
    Ok(field.with_amplitudes(out, field.z_cm() + z_cm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::relative_rms;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = 810.0;

    fn random_field(n: usize, pitch: f64, seed: u64) -> BiphotonField {
        let g = Grid1D::new(n, pitch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        BiphotonField::new(g, a, LAMBDA, 0.0).unwrap()
    }

    #[test]
    fn zero_distance_is_identity() {
        let f = random_field(64, 10.0, 1);
        for m in [PropagationMethod::default(), PropagationMethod::Fresnel] {
            let out = propagate(&f, 0.0, m).unwrap();
            assert!(relative_rms(out.amplitudes().iter().zip(f.amplitudes())) < 1e-12);
        }
    }

    #[test]
    fn plane_wave_only_gains_a_phase() {
        let g = Grid1D::new(64, 10.0).unwrap();
        let f = BiphotonField::new(
            g,
            Array2::from_elem((64, 64), Complex64::new(1.0, 0.0)),
            LAMBDA,
            0.0,
        )
        .unwrap();
        let out = propagate(&f, 10.0, PropagationMethod::default()).unwrap();
        let g0 = out.amplitudes()[[0, 0]];
        for v in out.amplitudes() {
            assert!((v.norm() - 1.0).abs() < 1e-10);
            assert!((v - g0).norm() < 1e-10);
        }
    }

    #[test]
    fn negative_distance_rejected() {
        let f = random_field(64, 10.0, 1);
        assert!(propagate(&f, -1.0, PropagationMethod::Fresnel).is_err());
    }

    #[test]
    fn backward_undoes_forward() {
        let f = random_field(64, 10.0, 2);
        let m = PropagationMethod::default();
        let fwd = propagate(&f, 3.0, m).unwrap();
        let back = propagate_with(
            &fwd,
            3.0,
            m,
            &PropagateOptions {
                backward: true,
                zero_pad: false,
            },
        )
        .unwrap();
        assert!(relative_rms(back.amplitudes().iter().zip(f.amplitudes())) < 1e-12);
        assert!(back.z_cm().abs() < 1e-15);
    }

    #[test]
    fn gaussian_beam_spreads_as_expected() {
        // 1/e^2 intensity radius w0 = 200 µm
        let g = Grid1D::new(4096, 2.0).unwrap();
        let w0 = 200.0;
        let f: Vec<Complex64> = g
            .coords_um()
            .iter()
            .map(|r| Complex64::new((-r * r / (w0 * w0)).exp(), 0.0))
            .collect();
        let out = propagate_classical(&f, &g, LAMBDA, 10.0, PropagationMethod::Fresnel).unwrap();
        let inten: Vec<f64> = out.iter().map(|v| v.norm_sqr()).collect();
        // second-moment radius: w = 2 sqrt(<x^2>)
        let x = g.coords_um();
        let tot: f64 = inten.iter().sum();
        let m2: f64 = inten.iter().zip(&x).map(|(i, r)| i * r * r).sum::<f64>() / tot;
        let w = 2.0 * m2.sqrt();
        let zr = std::f64::consts::PI * w0 * w0 / (LAMBDA * 1e-3);
        let expected = w0 * (1.0 + (1e5 / zr).powi(2)).sqrt();
        assert!((w / expected - 1.0).abs() < 0.01, "{w} vs {expected}");
    }

    #[test]
    fn tilted_plane_wave_is_an_eigenmode() {
        let g = Grid1D::new(128, 10.0).unwrap();
        let kx = g.wavenumbers()[5];
        let f: Vec<Complex64> = g
            .coords_um()
            .iter()
            .map(|r| Complex64::from_polar(1.0, kx * r))
            .collect();
        let z = 5.0;
        let out = propagate_classical(&f, &g, LAMBDA, z, PropagationMethod::default()).unwrap();
        let k0 = std::f64::consts::TAU / (LAMBDA * 1e-3);
        let shift = Complex64::from_polar(1.0, z * 1e4 * (k0 * k0 - kx * kx).sqrt());
        for (a, b) in out.iter().zip(&f) {
            assert!((a - b * shift).norm() < 1e-10);
        }
    }

    #[test]
    fn classical_matches_brute_force_dft() {
        let g = Grid1D::new(64, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f: Vec<Complex64> = (0..64)
            .map(|_| Complex64::new(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let m = PropagationMethod::default();
        let z = 2.0;
        let out = propagate_classical(&f, &g, LAMBDA, z, m).unwrap();
        let h = transfer_function(&g, LAMBDA, z, m, false);
        let n = 64;
        let tau = std::f64::consts::TAU;
        let spec: Vec<Complex64> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| f[j] * Complex64::from_polar(1.0, -tau * (j * k) as f64 / n as f64))
                    .sum::<Complex64>()
                    * h[k]
            })
            .collect();
        let oracle: Vec<Complex64> = (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| spec[k] * Complex64::from_polar(1.0, tau * (j * k) as f64 / n as f64))
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect();
        let err: f64 = out
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!(err.sqrt() < 1e-10);
    }

    #[test]
    fn zero_padding_suppresses_wraparound() {
        let g = Grid1D::new(64, 10.0).unwrap();
        let c = g.center();
        let mut a = Array2::zeros((64, 64));
        a[[c, c]] = Complex64::new(1.0, 0.0);
        let f = BiphotonField::new(g, a, LAMBDA, 0.0).unwrap();
        let opts = PropagateOptions {
            backward: false,
            zero_pad: true,
        };
        let out = propagate_with(&f, 0.5, PropagationMethod::Fresnel, &opts).unwrap();
        assert_eq!(out.amplitudes().dim(), (64, 64));
        assert!(out.total_power() < f.total_power());
    }

    #[test]
    fn quadrature_refuses_large_grids() {
        let f = random_field(256, 10.0, 0);
        assert!(propagate_direct_quadrature(&f, 1.0).is_err());
    }

    #[test]
    fn quadrature_focuses_converging_wave() {
        let g = Grid1D::new(64, 10.0).unwrap();
        let z_cm = 2.0;
        let k0 = std::f64::consts::TAU / (LAMBDA * 1e-3);
        let z = z_cm * 1e4;
        let r = g.coords_um();
        let a = Array2::from_shape_fn((64, 64), |(i, j)| {
            let q = r[i] * r[i] + r[j] * r[j];
            Complex64::from_polar((-q / (200.0f64 * 200.0)).exp(), -k0 * q / (2.0 * z))
        });
        let f = BiphotonField::new(g, a, LAMBDA, 0.0).unwrap();
        let out = propagate_direct_quadrature(&f, z_cm).unwrap();
        let c = g.center();
        let total: f64 = out.amplitudes().iter().map(|v| v.norm_sqr()).sum();
        let core: f64 = out
            .amplitudes()
            .slice(s![c - 3..=c + 3, c - 3..=c + 3])
            .iter()
            .map(|v| v.norm_sqr())
            .sum();
        assert!(core / total > 0.5, "{}", core / total);
    }
}
