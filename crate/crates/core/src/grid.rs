//! Physical sampling grids and the complex / real fields that live on them.
//!
//! Storage is row-major with shape `(ny, nx)`: the first index is `y`, the
//! second is `x`. Pixel `j` along an axis of length `n` sits at coordinate
//! `(j - n/2) * pitch`, so the pixel at index `n/2` is the optical axis.

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel counts, pixel pitch and wavelength of a sampled plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Pixel pitch along x, meters.
    pub pitch_x: f64,
    /// Pixel pitch along y, meters.
    pub pitch_y: f64,
    /// Vacuum wavelength, meters.
    pub wavelength: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, pitch_x: f64, pitch_y: f64, wavelength: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param(
                "nx/ny",
                format!("grid must be at least 1x1, got {nx}x{ny}"),
            ));
        }
        for (name, v) in [
            ("pitch_x", pitch_x),
            ("pitch_y", pitch_y),
            ("wavelength", wavelength),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(GridSpec {
            nx,
            ny,
            pitch_x,
            pitch_y,
            wavelength,
        })
    }

    /// Square grid with square pixels.
    pub fn square(n: usize, pitch: f64, wavelength: f64) -> Result<Self> {
        Self::new(n, n, pitch, pitch, wavelength)
    }

    /// Same pitch and wavelength, different pixel counts.
    pub fn resized(&self, nx: usize, ny: usize) -> Self {
        GridSpec {
            nx: nx.max(1),
            ny: ny.max(1),
            ..*self
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full extent along x, meters.
    pub fn extent_x(&self) -> f64 {
        self.nx as f64 * self.pitch_x
    }

    /// Full extent along y, meters.
    pub fn extent_y(&self) -> f64 {
        self.ny as f64 * self.pitch_y
    }

    pub fn coord_x(&self, j: usize) -> f64 {
        (j as f64 - (self.nx / 2) as f64) * self.pitch_x
    }

    pub fn coord_y(&self, i: usize) -> f64 {
        (i as f64 - (self.ny / 2) as f64) * self.pitch_y
    }

    /// Spatial frequency of DFT bin `k` along x (cycles/meter, signed FFT ordering).
    pub fn freq_x(&self, k: usize) -> f64 {
        signed_bin(k, self.nx) as f64 / (self.nx as f64 * self.pitch_x)
    }

    /// Spatial frequency of DFT bin `k` along y (cycles/meter, signed FFT ordering).
    pub fn freq_y(&self, k: usize) -> f64 {
        signed_bin(k, self.ny) as f64 / (self.ny as f64 * self.pitch_y)
    }

    pub fn freqs_x(&self) -> Vec<f64> {
        (0..self.nx).map(|k| self.freq_x(k)).collect()
    }

    pub fn freqs_y(&self) -> Vec<f64> {
        (0..self.ny).map(|k| self.freq_y(k)).collect()
    }

    /// Nyquist frequency along x, `1 / (2 pitch_x)`.
    pub fn nyquist_x(&self) -> f64 {
        0.5 / self.pitch_x
    }

    pub fn nyquist_y(&self) -> f64 {
        0.5 / self.pitch_y
    }

    /// True when both grids sample space identically (pitch and wavelength).
    pub fn same_sampling(&self, other: &GridSpec) -> bool {
        rel_eq(self.pitch_x, other.pitch_x)
            && rel_eq(self.pitch_y, other.pitch_y)
            && rel_eq(self.wavelength, other.wavelength)
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Signed index of DFT bin `k` for length `n`: `0, 1, .., ceil(n/2)-1, -floor(n/2), .., -1`.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// A complex amplitude sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Array2<Complex64>,
}

impl ComplexField {
    pub fn new(grid: GridSpec, values: Array2<Complex64>) -> Result<Self> {
        if values.dim() != grid.dims() {
            return Err(Error::ShapeMismatch {
                expected: grid.dims(),
                found: values.dim(),
            });
        }
        if values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::param("values", "field contains non-finite entries"));
        }
        Ok(ComplexField { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: GridSpec, values: Array2<Complex64>) -> Self {
        debug_assert_eq!(values.dim(), grid.dims());
        ComplexField { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        ComplexField {
            values: Array2::zeros(grid.dims()),
            grid,
        }
    }

    pub fn constant(grid: GridSpec, value: Complex64) -> Self {
        ComplexField {
            values: Array2::from_elem(grid.dims(), value),
            grid,
        }
    }

    /// Build from a function of the pixel index `(iy, ix)`.
    pub fn from_fn(grid: GridSpec, f: impl FnMut((usize, usize)) -> Complex64) -> Self {
        ComplexField {
            values: Array2::from_shape_fn(grid.dims(), f),
            grid,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    /// Sum of squared magnitudes.
    pub fn total_energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn intensity(&self) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.mapv(|v| v.norm_sqr()),
        }
    }

    pub fn amplitude(&self) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.mapv(|v| v.norm()),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        ComplexField {
            grid: self.grid,
            values: self.values.mapv(|v| v * factor),
        }
    }

    /// Copy of the `ny x nx` block whose top-left pixel is `(iy, ix)`.
    pub fn crop(&self, iy: usize, ix: usize, ny: usize, nx: usize) -> Result<Self> {
        if iy + ny > self.grid.ny || ix + nx > self.grid.nx {
            return Err(Error::OutOfSupport {
                what: format!(
                    "{ny}x{nx} at ({iy}, {ix}) in {}x{}",
                    self.grid.ny, self.grid.nx
                ),
            });
        }
        let values = self.values.slice(s![iy..iy + ny, ix..ix + nx]).to_owned();
        Ok(ComplexField {
            grid: self.grid.resized(nx, ny),
            values,
        })
    }

    /// Centered crop, keeping the optical-axis pixel on the optical axis.
    pub fn crop_centered(&self, ny: usize, nx: usize) -> Result<Self> {
        if ny > self.grid.ny || nx > self.grid.nx {
            return Err(Error::OutOfSupport {
                what: format!("{ny}x{nx} centered in {}x{}", self.grid.ny, self.grid.nx),
            });
        }
        self.crop(self.grid.ny / 2 - ny / 2, self.grid.nx / 2 - nx / 2, ny, nx)
    }

    /// Zero-embed into a larger grid, keeping the optical-axis pixel aligned.
    pub fn embed_centered(&self, ny: usize, nx: usize) -> Result<Self> {
        if ny < self.grid.ny || nx < self.grid.nx {
            return Err(Error::OutOfSupport {
                what: format!("embedding {}x{} into {ny}x{nx}", self.grid.ny, self.grid.nx),
            });
        }
        let oy = ny / 2 - self.grid.ny / 2;
        let ox = nx / 2 - self.grid.nx / 2;
        let mut values = Array2::zeros((ny, nx));
        values
            .slice_mut(s![oy..oy + self.grid.ny, ox..ox + self.grid.nx])
            .assign(&self.values);
        Ok(ComplexField {
            grid: self.grid.resized(nx, ny),
            values,
        })
    }

    /// Mirror about the x axis (flip the row order), keeping the axis pixel fixed.
    pub fn mirror_y(&self) -> Self {
        let ny = self.grid.ny;
        let c = ny / 2;
        let values = Array2::from_shape_fn(self.values.dim(), |(i, j)| {
            // reflect i about the axis pixel c; rows with no mirror partner stay zero
            let mirrored = 2 * c as i64 - i as i64;
            if (0..ny as i64).contains(&mirrored) {
                self.values[[mirrored as usize, j]]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        ComplexField {
            grid: self.grid,
            values,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// A non-negative real quantity (intensity or transmittance) on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    values: Array2<f64>,
}

impl RealField {
    pub fn new(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.dims() {
            return Err(Error::ShapeMismatch {
                expected: grid.dims(),
                found: values.dim(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param(
                "values",
                "real field must be finite and non-negative",
            ));
        }
        Ok(RealField { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: GridSpec, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), grid.dims());
        RealField { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        RealField {
            values: Array2::zeros(grid.dims()),
            grid,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        RealField {
            grid: self.grid,
            values: self.values.mapv(|v| v * factor),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::square(n, 1e-6, 500e-9).unwrap()
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(0, 4, 1.0, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 1.0, 1.0, -1.0).is_err());
        assert!(GridSpec::new(4, 4, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn frequency_axis_is_antisymmetric_and_bounded() {
        for n in [1usize, 2, 7, 8, 33, 64] {
            let g = grid(n);
            for k in 1..n {
                let neg = n - k;
                // the even-length Nyquist bin has no positive partner
                if n % 2 == 0 && k == n / 2 {
                    continue;
                }
                assert_eq!(g.freq_x(neg), -g.freq_x(k));
            }
            assert!(g
                .freqs_x()
                .iter()
                .all(|f| f.abs() <= g.nyquist_x() * (1.0 + 1e-12)));
            assert_eq!(g.freq_x(0), 0.0);
        }
    }

    #[test]
    fn energy_of_simple_fields() {
        let g = grid(4);
        assert_eq!(ComplexField::zeros(g).total_energy(), 0.0);
        let mut f = ComplexField::zeros(g);
        f.values_mut()[[1, 2]] = Complex64::new(2.0, 0.0);
        assert_eq!(f.total_energy(), 4.0);
    }

    #[test]
    fn embed_then_crop_is_identity() {
        for (n, m) in [(4usize, 8usize), (5, 12), (7, 7)] {
            let f = ComplexField::from_fn(grid(n), |(i, j)| Complex64::new(i as f64, j as f64));
            let big = f.embed_centered(m, m).unwrap();
            assert_eq!(big.total_energy(), f.total_energy());
            assert_eq!(big.crop_centered(n, n).unwrap(), f);
        }
    }

    #[test]
    fn crop_outside_support_is_rejected() {
        let f = ComplexField::zeros(grid(8));
        assert!(f.crop(4, 4, 5, 2).is_err());
        assert!(f.crop_centered(9, 1).is_err());
        assert!(f.embed_centered(4, 8).is_err());
    }

    #[test]
    fn new_validates_shape_and_finiteness() {
        let g = grid(3);
        assert!(ComplexField::new(g, Array2::zeros((3, 4))).is_err());
        let mut v = Array2::zeros((3, 3));
        v[[0, 0]] = Complex64::new(f64::INFINITY, 0.0);
        assert!(ComplexField::new(g, v).is_err());
        assert!(RealField::new(g, Array2::from_elem((3, 3), -1.0)).is_err());
    }
}
