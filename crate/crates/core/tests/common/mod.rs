#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use ptyfuse_core::grid::{ComplexField, GridSpec};
use ptyfuse_core::propagation::AxisBand;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const PITCH: f64 = 3.45e-6;
pub const LAMBDA: f64 = 561e-9;
/// Distance-to-shift ratio of the reference experiment (61 mm over 2.649 mm).
pub const Z_PER_SHIFT: f64 = 61.0 / 2.649;

pub fn grid(n: usize) -> GridSpec {
    GridSpec::square(n, PITCH, LAMBDA).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cnormal(r: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal))
}

pub fn random_field(g: GridSpec, seed: u64) -> ComplexField {
    let mut r = rng(seed);
    ComplexField::from_fn(g, |_| cnormal(&mut r))
}

/// Frequency band reaching a same-sized window at `offset` from a source of
/// `n` pixels, clamped to Nyquist.
pub fn reachable_band(n: usize, offset: f64, z: f64) -> AxisBand {
    AxisBand::new(LAMBDA, z, offset, n as f64 * PITCH).clamped(1.0 / (2.0 * PITCH))
}

/// Gaussian-windowed sum of 12 plane waves whose carriers lie in the central
/// `frac` of the band that reaches the window at `(x0, y0)`.
pub fn band_interior_scene(
    n: usize,
    x0: f64,
    y0: f64,
    z: f64,
    seed: u64,
    sigma_px: f64,
    frac: f64,
) -> ComplexField {
    let g = grid(n);
    let mut r = rng(seed);
    let (bu, bv) = (reachable_band(n, x0, z), reachable_band(n, y0, z));
    let waves: Vec<(Complex64, f64, f64)> = (0..12)
        .map(|_| {
            let fx = bu.center + frac * bu.width / 2.0 * (2.0 * r.random::<f64>() - 1.0);
            let fy = bv.center + frac * bv.width / 2.0 * (2.0 * r.random::<f64>() - 1.0);
            (cnormal(&mut r), fx, fy)
        })
        .collect();
    let s = sigma_px * PITCH;
    ComplexField::from_fn(g, |(i, j)| {
        let (x, y) = (g.coord_x(j), g.coord_y(i));
        let sum: Complex64 = waves
            .iter()
            .map(|(a, fx, fy)| a * Complex64::from_polar(1.0, 2.0 * PI * (fx * x + fy * y)))
            .sum();
        sum * (-(x * x + y * y) / (2.0 * s * s)).exp()
    })
}

/// Relative L2 difference excluding a border of `border` pixels.
pub fn rel_l2_interior(a: &ComplexField, b: &ComplexField, border: usize) -> f64 {
    let (ny, nx) = a.grid().dims();
    let (mut num, mut den) = (0.0, 0.0);
    for i in border..ny - border {
        for j in border..nx - border {
            num += (a.values()[[i, j]] - b.values()[[i, j]]).norm_sqr();
            den += b.values()[[i, j]].norm_sqr();
        }
    }
    (num / den).sqrt()
}

pub fn rel_l2(a: &ComplexField, b: &ComplexField) -> f64 {
    rel_l2_interior(a, b, 0)
}
