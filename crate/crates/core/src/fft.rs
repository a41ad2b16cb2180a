//! Unitary 2D discrete Fourier transforms on row-major `(ny, nx)` arrays.
//!
//! Both directions scale by `1/sqrt(nx*ny)`, so Parseval holds with equal
//! constants and the inverse is the adjoint. Bin ordering is the standard
//! (unshifted) one: bin 0 is DC.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::ComplexField;

/// Cached forward and inverse plans for one array shape.
#[derive(Clone)]
pub struct Fft2 {
    ny: usize,
    nx: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("ny", &self.ny)
            .field("nx", &self.nx)
            .finish()
    }
}

impl Fft2 {
    pub fn new(ny: usize, nx: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            ny,
            nx,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
            scale: 1.0 / ((nx * ny) as f64).sqrt(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.process(data, false);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.process(data, true);
    }

    fn process(&self, data: &mut Array2<Complex64>, inverse: bool) {
        assert_eq!(data.dim(), (self.ny, self.nx), "Fft2 shape mismatch");
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        let (ny, nx) = (self.ny, self.nx);
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let buf = data.as_slice_mut().expect("standard layout");
        let scratch_len = row
            .get_inplace_scratch_len()
            .max(col.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

        if nx > 1 {
            row.process_with_scratch(buf, &mut scratch);
        }
        if ny > 1 {
            let mut t = vec![Complex64::new(0.0, 0.0); nx * ny];
            transpose(buf, &mut t, ny, nx);
            col.process_with_scratch(&mut t, &mut scratch);
            transpose(&t, buf, nx, ny);
        }
        let s = self.scale;
        buf.iter_mut().for_each(|v| *v *= s);
    }
}

/// `dst[j][i] = src[i][j]` for a `rows x cols` source, blocked for cache locality.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 32;
    for i0 in (0..rows).step_by(B) {
        for j0 in (0..cols).step_by(B) {
            for i in i0..(i0 + B).min(rows) {
                for j in j0..(j0 + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

/// Unitary forward transform of a field; the result lives on the same grid
/// (interpreted as frequency bins `grid.freq_x/freq_y`).
pub fn fft2(field: &ComplexField) -> ComplexField {
    let (ny, nx) = field.grid().dims();
    let mut v = field.values().clone();
    Fft2::new(ny, nx).forward(&mut v);
    ComplexField::from_parts_unchecked(*field.grid(), v)
}

/// Unitary inverse of [`fft2`].
pub fn ifft2(spectrum: &ComplexField) -> ComplexField {
    let (ny, nx) = spectrum.grid().dims();
    let mut v = spectrum.values().clone();
    Fft2::new(ny, nx).inverse(&mut v);
    ComplexField::from_parts_unchecked(*spectrum.grid(), v)
}
