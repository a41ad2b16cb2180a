//! Free-space propagation between parallel planes.
//!
//! Three routes are provided:
//!
//! * [`propagate_asm`]: the periodic angular spectrum method on the source
//!   grid, `IFFT(FFT(f) * H)`.
//! * [`PropagationPlan`] / [`propagate_shifted_asm`]: the off-axis variant. The
//!   transfer function carries a linear phase that moves the computed window to
//!   `(x0, y0)` and a rectangular band-limit that keeps only the frequencies able
//!   to reach that window from the source. The source is zero-padded to
//!   `source + window` samples per axis so the band-limited convolution does not
//!   wrap around.
//! * [`propagate_padded_oracle`]: zero-embed in a much larger grid, run the
//!   periodic method and crop. Slow, used as ground truth.
//!
//! Evanescent components (`(λfx)² + (λfy)² > 1`) are zeroed, so `|H| <= 1`.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft2, ifft2, Fft2};
use crate::grid::{signed_bin, ComplexField, GridSpec};

fn check_distance(z: f64) -> Result<()> {
    if z.is_finite() && z > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            "z",
            format!("propagation distance must be > 0, got {z}"),
        ))
    }
}

fn check_offset(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "offset must be finite"))
    }
}

/// Free-space transfer function for one frequency pair.
pub fn transfer_value(wavelength: f64, z: f64, fx: f64, fy: f64) -> Complex64 {
    let radicand = 1.0 - (wavelength * fx).powi(2) - (wavelength * fy).powi(2);
    if radicand < 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(1.0, 2.0 * PI / wavelength * z * radicand.sqrt())
    }
}

/// Transfer function sampled on the DFT bins of `grid`.
pub fn transfer_function(grid: &GridSpec, z: f64) -> Result<ComplexField> {
    check_distance(z)?;
    let fx = grid.freqs_x();
    let fy = grid.freqs_y();
    Ok(ComplexField::from_fn(*grid, |(i, j)| {
        transfer_value(grid.wavelength, z, fx[j], fy[i])
    }))
}

/// Periodic angular spectrum propagation over `z` on the field's own grid.
pub fn propagate_asm(field: &ComplexField, z: f64) -> Result<ComplexField> {
    let h = transfer_function(field.grid(), z)?;
    let mut spec = fft2(field);
    spec.values_mut().zip_mut_with(h.values(), |a, b| *a *= *b);
    Ok(ifft2(&spec))
}

/// Periodic angular spectrum propagation with a rectangular band-limit applied
/// to the transfer function (no lateral shift, no padding).
pub fn propagate_asm_band_limited(
    field: &ComplexField,
    z: f64,
    band: &BandLimit,
) -> Result<ComplexField> {
    let h = transfer_function(field.grid(), z)?;
    let grid = *field.grid();
    let (fx, fy) = (grid.freqs_x(), grid.freqs_y());
    let mut spec = fft2(field);
    for ((i, j), v) in spec.values_mut().indexed_iter_mut() {
        if band.contains(fx[j], fy[i]) {
            *v *= h.values()[[i, j]];
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(ifft2(&spec))
}

/// Which row of the band-limit case table an axis falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandCase {
    /// Window entirely on the positive side: `offset >= S`.
    Positive,
    /// Window straddles the axis: `-S <= offset < S`.
    Straddling,
    /// Window entirely on the negative side: `offset <= -S`.
    Negative,
}

/// Rectangular pass band along one frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBand {
    pub case: BandCase,
    /// Rectangle center, cycles/meter.
    pub center: f64,
    /// Rectangle width, cycles/meter (>= 0).
    pub width: f64,
    /// Half-extent used for the geometry, meters.
    pub half_extent: f64,
}

impl AxisBand {
    /// Band for a window centered at `offset`, where `half_extent` is the sum of
    /// the source and window half-widths along this axis.
    pub fn new(wavelength: f64, z: f64, offset: f64, half_extent: f64) -> Self {
        // frequency of the steepest and shallowest rays joining the two planes
        let far = ((offset + half_extent).abs() / z).atan().sin() / wavelength;
        let near = ((offset - half_extent).abs() / z).atan().sin() / wavelength;
        let (case, center, width) = if offset >= half_extent {
            (BandCase::Positive, (far + near) / 2.0, far - near)
        } else if offset >= -half_extent {
            (BandCase::Straddling, (far - near) / 2.0, far + near)
        } else {
            (BandCase::Negative, -(far + near) / 2.0, near - far)
        };
        AxisBand {
            case,
            center,
            width: width.max(0.0),
            half_extent,
        }
    }

    pub fn lower(&self) -> f64 {
        self.center - self.width / 2.0
    }

    pub fn upper(&self) -> f64 {
        self.center + self.width / 2.0
    }

    /// Intersect with `[-nyquist, nyquist]`.
    pub fn clamped(&self, nyquist: f64) -> Self {
        let lo = self.lower().max(-nyquist);
        let hi = self.upper().min(nyquist);
        if hi < lo {
            AxisBand {
                center: lo.clamp(-nyquist, nyquist),
                width: 0.0,
                ..*self
            }
        } else {
            AxisBand {
                center: (lo + hi) / 2.0,
                width: hi - lo,
                ..*self
            }
        }
    }

    /// Closed rectangle test, `|f - center| <= width / 2`.
    pub fn contains(&self, f: f64) -> bool {
        let tol = 1e-12 * (self.center.abs() + self.width);
        (f - self.center).abs() <= self.width / 2.0 + tol
    }
}

/// Band-limit of the shifted transfer function along both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLimit {
    pub u: AxisBand,
    pub v: AxisBand,
    pub z: f64,
}

impl BandLimit {
    /// `half_x`/`half_y` are the summed source and window half-extents.
    pub fn new(
        grid: &GridSpec,
        z: f64,
        x0: f64,
        y0: f64,
        half_x: f64,
        half_y: f64,
    ) -> Result<Self> {
        check_distance(z)?;
        check_offset("x0", x0)?;
        check_offset("y0", y0)?;
        if !(half_x > 0.0 && half_y > 0.0) {
            return Err(Error::param("half_extent", "half-extents must be > 0"));
        }
        Ok(BandLimit {
            u: AxisBand::new(grid.wavelength, z, x0, half_x).clamped(grid.nyquist_x()),
            v: AxisBand::new(grid.wavelength, z, y0, half_y).clamped(grid.nyquist_y()),
            z,
        })
    }

    pub fn contains(&self, fx: f64, fy: f64) -> bool {
        self.u.contains(fx) && self.v.contains(fy)
    }

    /// The rectangular cut is only a good approximation when `z` exceeds both
    /// half-extents.
    pub fn geometry_valid(&self) -> bool {
        self.z > self.u.half_extent && self.z > self.v.half_extent
    }
}

/// Band-limit for a window with the dimensions of `grid`, centered at
/// `(x0, y0)`, fed by a source of the given half-widths.
pub fn band_limit(
    grid: &GridSpec,
    z: f64,
    x0: f64,
    y0: f64,
    src_halfwidth_x: f64,
    src_halfwidth_y: f64,
) -> Result<BandLimit> {
    if !(src_halfwidth_x > 0.0 && src_halfwidth_y > 0.0) {
        return Err(Error::param(
            "src_halfwidth",
            "source half-widths must be > 0",
        ));
    }
    BandLimit::new(
        grid,
        z,
        x0,
        y0,
        src_halfwidth_x + grid.extent_x() / 2.0,
        src_halfwidth_y + grid.extent_y() / 2.0,
    )
}

/// Precomputed off-axis propagator from a source grid to a window of
/// `window_nx x window_ny` pixels centered at `(x0, y0)` in the plane `z`
/// downstream. The window keeps the source pixel pitch.
#[derive(Debug, Clone)]
pub struct PropagationPlan {
    source: GridSpec,
    window: GridSpec,
    padded: GridSpec,
    z: f64,
    x0: f64,
    y0: f64,
    band: BandLimit,
    kernel: Array2<Complex64>,
    fft: Fft2,
}

impl PropagationPlan {
    pub fn new(
        source: GridSpec,
        window_nx: usize,
        window_ny: usize,
        z: f64,
        x0: f64,
        y0: f64,
    ) -> Result<Self> {
        check_distance(z)?;
        check_offset("x0", x0)?;
        check_offset("y0", y0)?;
        if window_nx == 0 || window_ny == 0 {
            return Err(Error::param("window", "window must be at least 1x1"));
        }
        let window = source.resized(window_nx, window_ny);
        let padded = source.resized(source.nx + window_nx, source.ny + window_ny);
        let band = BandLimit::new(
            &padded,
            z,
            x0,
            y0,
            (source.extent_x() + window.extent_x()) / 2.0,
            (source.extent_y() + window.extent_y()) / 2.0,
        )?;
        if !band.geometry_valid() {
            log::warn!(
                "shifted propagation: z = {z:.4e} m does not exceed the half-extents \
                 ({:.4e}, {:.4e}) m; the rectangular band-limit is a poor approximation here",
                band.u.half_extent,
                band.v.half_extent
            );
        }
        let fx = padded.freqs_x();
        let fy = padded.freqs_y();
        let kernel = Array2::from_shape_fn(padded.dims(), |(i, j)| {
            let (u, v) = (fx[j], fy[i]);
            if band.contains(u, v) {
                transfer_value(source.wavelength, z, u, v)
                    * Complex64::from_polar(1.0, 2.0 * PI * (x0 * u + y0 * v))
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Ok(PropagationPlan {
            source,
            window,
            padded,
            z,
            x0,
            y0,
            band,
            kernel,
            fft: Fft2::new(padded.ny, padded.nx),
        })
    }

    /// Plan whose window has the same pixel dimensions as the source.
    pub fn shifted(source: GridSpec, z: f64, x0: f64, y0: f64) -> Result<Self> {
        Self::new(source, source.nx, source.ny, z, x0, y0)
    }

    pub fn source_grid(&self) -> &GridSpec {
        &self.source
    }

    pub fn window_grid(&self) -> &GridSpec {
        &self.window
    }

    pub fn padded_grid(&self) -> &GridSpec {
        &self.padded
    }

    pub fn band(&self) -> &BandLimit {
        &self.band
    }

    pub fn distance(&self) -> f64 {
        self.z
    }

    pub fn offset(&self) -> (f64, f64) {
        (self.x0, self.y0)
    }

    /// Band-limited, shifted transfer function on the padded grid.
    pub fn kernel(&self) -> &Array2<Complex64> {
        &self.kernel
    }

    fn source_origin(&self) -> (usize, usize) {
        (
            self.padded.ny / 2 - self.source.ny / 2,
            self.padded.nx / 2 - self.source.nx / 2,
        )
    }

    fn window_origin(&self) -> (usize, usize) {
        (
            self.padded.ny / 2 - self.window.ny / 2,
            self.padded.nx / 2 - self.window.nx / 2,
        )
    }

    fn apply(
        &self,
        input: &Array2<Complex64>,
        from: (usize, usize),
        to: (usize, usize),
        out_dims: (usize, usize),
        conjugate: bool,
    ) -> Array2<Complex64> {
        let (iny, inx) = input.dim();
        let mut buf = Array2::zeros(self.padded.dims());
        buf.slice_mut(s![from.0..from.0 + iny, from.1..from.1 + inx])
            .assign(input);
        self.fft.forward(&mut buf);
        if conjugate {
            buf.zip_mut_with(&self.kernel, |a, k| *a *= k.conj());
        } else {
            buf.zip_mut_with(&self.kernel, |a, k| *a *= *k);
        }
        self.fft.inverse(&mut buf);
        buf.slice(s![to.0..to.0 + out_dims.0, to.1..to.1 + out_dims.1])
            .to_owned()
    }

    /// Propagate raw source samples to raw window samples.
    pub fn forward_values(&self, source: &Array2<Complex64>) -> Array2<Complex64> {
        assert_eq!(source.dim(), self.source.dims(), "source shape mismatch");
        self.apply(
            source,
            self.source_origin(),
            self.window_origin(),
            self.window.dims(),
            false,
        )
    }

    /// Exact adjoint of [`forward_values`](Self::forward_values).
    pub fn adjoint_values(&self, window: &Array2<Complex64>) -> Array2<Complex64> {
        assert_eq!(window.dim(), self.window.dims(), "window shape mismatch");
        self.apply(
            window,
            self.window_origin(),
            self.source_origin(),
            self.source.dims(),
            true,
        )
    }

    pub fn forward(&self, field: &ComplexField) -> Result<ComplexField> {
        self.check_source(field.grid())?;
        Ok(ComplexField::from_parts_unchecked(
            self.window,
            self.forward_values(field.values()),
        ))
    }

    pub fn adjoint(&self, field: &ComplexField) -> Result<ComplexField> {
        if field.grid().dims() != self.window.dims() {
            return Err(Error::ShapeMismatch {
                expected: self.window.dims(),
                found: field.grid().dims(),
            });
        }
        Ok(ComplexField::from_parts_unchecked(
            self.source,
            self.adjoint_values(field.values()),
        ))
    }

    fn check_source(&self, grid: &GridSpec) -> Result<()> {
        if grid.dims() != self.source.dims() {
            return Err(Error::ShapeMismatch {
                expected: self.source.dims(),
                found: grid.dims(),
            });
        }
        if !grid.same_sampling(&self.source) {
            return Err(Error::param("grid", "field sampling differs from the plan"));
        }
        Ok(())
    }
}

/// Off-axis propagation to a window of the source's pixel dimensions centered
/// at `(x0, y0)`.
pub fn propagate_shifted_asm(
    field: &ComplexField,
    z: f64,
    x0: f64,
    y0: f64,
) -> Result<ComplexField> {
    PropagationPlan::shifted(*field.grid(), z, x0, y0)?.forward(field)
}

fn whole_pixels(name: &'static str, offset: f64, pitch: f64) -> Result<i64> {
    let px = offset / pitch;
    let rounded = px.round();
    if (px - rounded).abs() > 1e-6 {
        return Err(Error::param(
            name,
            format!("oracle offsets must be whole pixels, got {px} px"),
        ));
    }
    Ok(rounded as i64)
}

/// Brute-force reference: embed in a grid `pad_factor` times larger per axis,
/// propagate periodically, crop the window centered at `(x0, y0)`.
pub fn propagate_padded_oracle(
    field: &ComplexField,
    z: f64,
    x0: f64,
    y0: f64,
    pad_factor: usize,
) -> Result<ComplexField> {
    check_distance(z)?;
    if pad_factor == 0 {
        return Err(Error::param("pad_factor", "must be >= 1"));
    }
    let g = *field.grid();
    let sx = whole_pixels("x0", x0, g.pitch_x)?;
    let sy = whole_pixels("y0", y0, g.pitch_y)?;
    let (big_ny, big_nx) = (g.ny * pad_factor, g.nx * pad_factor);
    let start_x = (big_nx / 2) as i64 + sx - (g.nx / 2) as i64;
    let start_y = (big_ny / 2) as i64 + sy - (g.ny / 2) as i64;
    if start_x < 0
        || start_y < 0
        || start_x as usize + g.nx > big_nx
        || start_y as usize + g.ny > big_ny
    {
        return Err(Error::OutOfSupport {
            what: format!("oracle window at ({sx}, {sy}) px in a {big_nx}x{big_ny} padded grid"),
        });
    }
    let big = field.embed_centered(big_ny, big_nx)?;
    let out = propagate_asm(&big, z)?;
    out.crop(start_y as usize, start_x as usize, g.ny, g.nx)
}

/// Signed frequency bins of the padded plan grid, exposed for diagnostics.
pub fn signed_bins(n: usize) -> Vec<i64> {
    (0..n).map(|k| signed_bin(k, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMBDA: f64 = 561e-9;
    const PITCH: f64 = 3.45e-6;

    fn grid(n: usize) -> GridSpec {
        GridSpec::square(n, PITCH, LAMBDA).unwrap()
    }

    #[test]
    fn transfer_value_cases() {
        let z = 1e-3;
        let dc = transfer_value(LAMBDA, z, 0.0, 0.0);
        let expect = Complex64::from_polar(1.0, 2.0 * PI * z / LAMBDA);
        assert!((dc - expect).norm() < 1e-9);
        // on the propagation circle the radicand is exactly zero
        let edge = transfer_value(1.0, z, 1.0, 0.0);
        assert!((edge - Complex64::new(1.0, 0.0)).norm() < 1e-6);
        assert_eq!(transfer_value(1.0, z, 1.5, 0.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn transfer_function_is_bounded() {
        // pitch below half a wavelength puts evanescent bins on the grid
        let g = GridSpec::square(32, 0.2e-6, 0.5e-6).unwrap();
        let h = transfer_function(&g, 1e-4).unwrap();
        let mut zeros = 0;
        for v in h.values() {
            assert!(v.norm() <= 1.0 + 1e-12);
            if v.norm() == 0.0 {
                zeros += 1;
            }
        }
        assert!(zeros > 0);
        assert!(transfer_function(&g, 0.0).is_err());
        assert!(transfer_function(&g, -1.0).is_err());
    }

    #[test]
    fn plane_wave_picks_up_global_phase() {
        let g = grid(16);
        let z = 2e-3;
        let f = ComplexField::constant(g, Complex64::new(1.0, 0.0));
        let out = propagate_asm(&f, z).unwrap();
        let phase = Complex64::from_polar(1.0, 2.0 * PI * z / LAMBDA);
        for v in out.values() {
            assert!((v - phase).norm() < 1e-10);
        }
    }

    #[test]
    fn band_table_rows() {
        // small angles keep every band inside Nyquist
        let g = grid(64);
        let z = 0.5;
        let s = 1e-3;
        let far = |x0: f64| ((x0 + s).abs() / z).atan().sin() / LAMBDA;
        let near = |x0: f64| ((x0 - s).abs() / z).atan().sin() / LAMBDA;

        let b = BandLimit::new(&g, z, 0.0, 0.0, s, s).unwrap();
        assert_eq!(b.u.case, BandCase::Straddling);
        assert!((b.u.center - (far(0.0) - near(0.0)) / 2.0).abs() < 1e-9);
        assert!((b.u.width - (far(0.0) + near(0.0))).abs() < 1e-9);

        let x0 = 5e-3;
        let b = BandLimit::new(&g, z, x0, 0.0, s, s).unwrap();
        assert_eq!(b.u.case, BandCase::Positive);
        assert!((b.u.center - (far(x0) + near(x0)) / 2.0).abs() < 1e-9);
        assert!((b.u.width - (far(x0) - near(x0))).abs() < 1e-9);

        let m = BandLimit::new(&g, z, -x0, 0.0, s, s).unwrap();
        assert_eq!(m.u.case, BandCase::Negative);
        assert!((m.u.center + b.u.center).abs() < 1e-9);
        assert!((m.u.width - b.u.width).abs() < 1e-9);
        assert!(BandLimit::new(&g, 0.0, 0.0, 0.0, s, s).is_err());
    }

    #[test]
    fn band_is_continuous_at_case_boundary() {
        let g = grid(64);
        let (z, s) = (0.5, 1e-3);
        let at = AxisBand::new(LAMBDA, z, s, s);
        let below = AxisBand::new(LAMBDA, z, s * (1.0 - 1e-12), s);
        assert_eq!(at.case, BandCase::Positive);
        assert_eq!(below.case, BandCase::Straddling);
        assert!((at.center - below.center).abs() < 1e-3);
        assert!((at.width - below.width).abs() < 1e-3);
        let clamped = BandLimit::new(&g, 1e-6, 0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(clamped.u.upper() <= g.nyquist_x() * (1.0 + 1e-12));
        assert!(!clamped.geometry_valid());
    }

    #[test]
    fn oracle_rejects_bad_windows() {
        let f = ComplexField::zeros(grid(16));
        assert!(propagate_padded_oracle(&f, 1e-3, 40.0 * PITCH, 0.0, 2).is_err());
        assert!(propagate_padded_oracle(&f, 1e-3, 0.5 * PITCH, 0.0, 4).is_err());
        assert!(propagate_padded_oracle(&f, 1e-3, 0.0, 0.0, 0).is_err());
        assert!(propagate_padded_oracle(&f, 1e-3, 8.0 * PITCH, 0.0, 2).is_ok());
    }

    #[test]
    fn plan_adjoint_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let src = grid(12);
        let plan = PropagationPlan::new(src, 8, 10, 2e-3, 20.0 * PITCH, -5.0 * PITCH).unwrap();
        let mut rnd = |ny, nx| {
            Array2::from_shape_fn((ny, nx), |_| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            })
        };
        let a = rnd(12, 12);
        let b = rnd(10, 8);
        let lhs: Complex64 = plan
            .forward_values(&a)
            .iter()
            .zip(b.iter())
            .map(|(x, y)| x * y.conj())
            .sum();
        let rhs: Complex64 = a
            .iter()
            .zip(plan.adjoint_values(&b).iter())
            .map(|(x, y)| x * y.conj())
            .sum();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }
}
