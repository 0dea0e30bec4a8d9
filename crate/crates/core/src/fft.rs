//! Thin helpers over `rustfft` for the 1D and 2D transforms used throughout.
//!
//! Forward transforms are unnormalized; inverse transforms divide by the
//! number of samples, so `inverse(forward(x)) == x`.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::Complex64;

/// Sample frequencies (cycles per unit of `d`) in FFT order.
pub fn fftfreq(n: usize, d: f64) -> Vec<f64> {
    let scale = 1.0 / (n as f64 * d);
    (0..n)
        .map(|i| {
            let k = if i < n.div_ceil(2) {
                i as isize
            } else {
                i as isize - n as isize
            };
            k as f64 * scale
        })
        .collect()
}

pub fn fft(data: &mut [Complex64]) {
    let plan = FftPlanner::new().plan_fft_forward(data.len());
    plan.process(data);
}

pub fn ifft(data: &mut [Complex64]) {
    let n = data.len();
    let plan = FftPlanner::new().plan_fft_inverse(n);
    plan.process(data);
    let s = 1.0 / n as f64;
    data.iter_mut().for_each(|v| *v *= s);
}

/// Circular autocorrelation `c[l] = sum_x u[x] * conj(u[x + l])`.
pub fn autocorrelation(u: &[Complex64]) -> Vec<Complex64> {
    let mut spec = u.to_vec();
    fft(&mut spec);
    // ifft(|U|^2)[l] = sum_x conj(u[x]) u[x + l]
    let mut power: Vec<Complex64> = spec
        .iter()
        .map(|v| Complex64::new(v.norm_sqr(), 0.0))
        .collect();
    ifft(&mut power);
    power.iter().map(|v| v.conj()).collect()
}

/// Planned 2D transform for a fixed `rows x cols` shape.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.process(data, false);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.process(data, true);
        let s = 1.0 / (self.rows * self.cols) as f64;
        data.as_slice_mut()
            .expect("standard layout")
            .par_iter_mut()
            .for_each(|v| *v *= s);
    }

    fn process(&self, data: &mut Array2<Complex64>, inverse: bool) {
        assert_eq!(data.dim(), (self.rows, self.cols), "fft2 shape mismatch");
        let (row_plan, col_plan) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let buf = data.as_slice_mut().expect("standard layout");
        transform_rows(buf, self.cols, row_plan.as_ref());
        let mut t = vec![Complex64::new(0.0, 0.0); buf.len()];
        transpose(buf, &mut t, self.rows, self.cols);
        transform_rows(&mut t, self.rows, col_plan.as_ref());
        transpose(&t, buf, self.cols, self.rows);
    }
}

fn transform_rows(buf: &mut [Complex64], len: usize, plan: &dyn Fft<f64>) {
    let scratch_len = plan.get_inplace_scratch_len();
    buf.par_chunks_mut(len).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, row| plan.process_with_scratch(row, scratch),
    );
}

/// Blocked out-of-place transpose of a `rows x cols` row-major buffer.
pub fn transpose<T: Copy + Send + Sync>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const B: usize = 32;
    // dst is cols x rows; parallelise over destination row blocks
    dst.par_chunks_mut(B * rows)
        .enumerate()
        .for_each(|(blk, chunk)| {
            let c0 = blk * B;
            let c1 = (c0 + B).min(cols);
            for r0 in (0..rows).step_by(B) {
                let r1 = (r0 + B).min(rows);
                for c in c0..c1 {
                    let drow = &mut chunk[(c - c0) * rows..(c - c0 + 1) * rows];
                    for r in r0..r1 {
                        drow[r] = src[r * cols + c];
                    }
                }
            }
        });
}

/// Move the zero-frequency (or zero-lag) element to the centre, index n/2.
pub fn fftshift2<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (r, c) = a.dim();
    Array2::from_shape_fn((r, c), |(i, j)| {
        a[[(i + r - r / 2) % r, (j + c - c / 2) % c]].clone()
    })
}
