//! Synthetic scenes: line-pair resolution targets, aperture probes and noisy
//! detector data.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{predict_dataset, Dataset, SceneModel};
use crate::grid::{ComplexField, GridSpec};

/// Direction along which the bars of a line set run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Bars run along x; the intensity modulation is along y.
    Horizontal,
    /// Bars run along y; the intensity modulation is along x.
    Vertical,
}

impl Orientation {
    pub fn letter(self) -> char {
        match self {
            Orientation::Horizontal => 'h',
            Orientation::Vertical => 'v',
        }
    }
}

/// Bar length in units of the bar pitch.
pub const BAR_LENGTH_PITCHES: f64 = 5.0;

/// Three parallel bars of width `pitch / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSet {
    pub lines_per_mm: f64,
    pub orientation: Orientation,
    /// Center of the middle bar in object coordinates, meters.
    pub x: f64,
    pub y: f64,
}

impl LineSet {
    /// Bar pitch, meters.
    pub fn pitch(&self) -> f64 {
        1e-3 / self.lines_per_mm
    }

    pub fn bar_length(&self) -> f64 {
        BAR_LENGTH_PITCHES * self.pitch()
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.lines_per_mm, self.orientation.letter())
    }
}

/// Smooth phase added on top of the amplitude target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPhase {
    /// Peak phase, radians.
    pub peak: f64,
    /// 1/e half-width, meters.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub line_sets: Vec<LineSet>,
    pub line_transmittance: f64,
    pub background_transmittance: f64,
    #[serde(default)]
    pub phase: Option<GaussianPhase>,
}

/// Default line-set frequencies, lines per mm.
pub const LADDER_LINES_PER_MM: [f64; 5] = [40.0, 48.0, 56.0, 68.0, 80.0];
const LADDER_X_PX: [f64; 5] = [-64.0, -30.0, 0.0, 27.0, 52.0];
const LADDER_ROW_PX: f64 = 32.0;

impl TargetSpec {
    /// Opaque bars on clear glass.
    pub fn chrome(line_sets: Vec<LineSet>) -> Self {
        TargetSpec {
            line_sets,
            line_transmittance: 0.0,
            background_transmittance: 1.0,
            phase: None,
        }
    }

    /// The default ladder: every frequency in both orientations, vertical sets
    /// in a row above the center and horizontal sets below it. Offsets are
    /// `scale` times a 128-pixel-probe layout at `pitch`.
    pub fn ladder(pitch: f64, scale: f64) -> Self {
        let mut sets = Vec::new();
        for (lpmm, dx) in LADDER_LINES_PER_MM.iter().zip(LADDER_X_PX) {
            for (orientation, dy) in [
                (Orientation::Vertical, -LADDER_ROW_PX),
                (Orientation::Horizontal, LADDER_ROW_PX),
            ] {
                sets.push(LineSet {
                    lines_per_mm: *lpmm,
                    orientation,
                    x: dx * scale * pitch,
                    y: dy * scale * pitch,
                });
            }
        }
        TargetSpec::chrome(sets)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("line_transmittance", self.line_transmittance),
            ("background_transmittance", self.background_transmittance),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {t}")));
            }
        }
        for s in &self.line_sets {
            if !(s.lines_per_mm.is_finite() && s.lines_per_mm > 0.0) {
                return Err(Error::param("lines_per_mm", "must be > 0"));
            }
            if !(s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::param("line_set", "position must be finite"));
            }
        }
        if let Some(p) = &self.phase {
            if !(p.peak.is_finite() && p.sigma.is_finite() && p.sigma > 0.0) {
                return Err(Error::param("phase", "peak must be finite and sigma > 0"));
            }
        }
        Ok(())
    }
}

fn inside_bar(set: &LineSet, x: f64, y: f64) -> bool {
    let pitch = set.pitch();
    let (across, along) = match set.orientation {
        Orientation::Vertical => (x - set.x, y - set.y),
        Orientation::Horizontal => (y - set.y, x - set.x),
    };
    if along.abs() >= set.bar_length() / 2.0 {
        return false;
    }
    (-1..=1).any(|k| (across - k as f64 * pitch).abs() < pitch / 4.0)
}

/// Render the target by sampling each pixel at its center coordinate.
pub fn make_resolution_target(grid: &GridSpec, spec: &TargetSpec) -> Result<ComplexField> {
    spec.validate()?;
    for s in &spec.line_sets {
        let px = match s.orientation {
            Orientation::Vertical => s.pitch() / grid.pitch_x,
            Orientation::Horizontal => s.pitch() / grid.pitch_y,
        };
        if px < 2.0 {
            return Err(Error::param(
                "lines_per_mm",
                format!(
                    "{} lines/mm is {px:.2} pixels per period, below 2",
                    s.lines_per_mm
                ),
            ));
        }
    }
    let bg = Complex64::new(spec.background_transmittance, 0.0);
    let line = Complex64::new(spec.line_transmittance, 0.0);
    Ok(ComplexField::from_fn(*grid, |(i, j)| {
        let (x, y) = (grid.coord_x(j), grid.coord_y(i));
        let amp = if spec.line_sets.iter().any(|s| inside_bar(s, x, y)) {
            line
        } else {
            bg
        };
        match &spec.phase {
            Some(p) => {
                let phi = p.peak * (-(x * x + y * y) / (p.sigma * p.sigma)).exp();
                amp * Complex64::from_polar(1.0, phi)
            }
            None => amp,
        }
    }))
}

/// Circular top-hat of `diameter` with a raised-cosine edge of total width
/// `edge_smoothing`, centered on the grid's center pixel.
pub fn make_probe(grid: &GridSpec, diameter: f64, edge_smoothing: f64) -> Result<ComplexField> {
    if !(diameter.is_finite() && diameter > 0.0) {
        return Err(Error::param("diameter", "must be > 0"));
    }
    if !(edge_smoothing.is_finite() && edge_smoothing >= 0.0) {
        return Err(Error::param("edge_smoothing", "must be >= 0"));
    }
    let outer = diameter / 2.0 + edge_smoothing / 2.0;
    let half_x = (grid.nx / 2) as f64 * grid.pitch_x;
    let half_y = (grid.ny / 2) as f64 * grid.pitch_y;
    if outer > half_x.min(half_y) {
        return Err(Error::param(
            "diameter",
            format!("probe of outer radius {outer:e} m exceeds the grid"),
        ));
    }
    let inner = diameter / 2.0 - edge_smoothing / 2.0;
    Ok(ComplexField::from_fn(*grid, |(i, j)| {
        let r = grid.coord_x(j).hypot(grid.coord_y(i));
        let a = if r <= inner {
            1.0
        } else if r >= outer {
            0.0
        } else {
            0.5 * (1.0 + (PI * (r - inner) / edge_smoothing).cos())
        };
        Complex64::new(a, 0.0)
    }))
}

/// [`make_probe`] with a diverging spherical wavefront whose local spatial
/// frequency at radius `diameter / 2` equals `illumination_na / wavelength`.
pub fn make_diverging_probe(
    grid: &GridSpec,
    diameter: f64,
    edge_smoothing: f64,
    illumination_na: f64,
) -> Result<ComplexField> {
    if !(illumination_na.is_finite() && (0.0..1.0).contains(&illumination_na)) {
        return Err(Error::param("illumination_na", "must lie in [0, 1)"));
    }
    let mut probe = make_probe(grid, diameter, edge_smoothing)?;
    if illumination_na == 0.0 {
        return Ok(probe);
    }
    let outer = diameter / 2.0 + edge_smoothing / 2.0;
    let f_max = outer * illumination_na / (diameter / 2.0) / grid.wavelength;
    let nyquist = grid.nyquist_x().min(grid.nyquist_y());
    if f_max >= nyquist {
        return Err(Error::param(
            "illumination_na",
            format!("wavefront frequency {f_max:e} 1/m at the probe edge exceeds Nyquist {nyquist:e} 1/m"),
        ));
    }
    let radius = diameter / 2.0 / illumination_na;
    let k = PI / (grid.wavelength * radius);
    let g = *grid;
    for ((i, j), v) in probe.values_mut().indexed_iter_mut() {
        let (x, y) = (g.coord_x(j), g.coord_y(i));
        *v *= Complex64::from_polar(1.0, k * (x * x + y * y));
    }
    Ok(probe)
}

/// Camera model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Expected photons at unit intensity; 0 disables shot noise.
    pub photon_scale: f64,
    pub quantization_bits: Option<u32>,
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            photon_scale: 0.0,
            quantization_bits: None,
            rng_seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photon_scale.is_finite() && self.photon_scale >= 0.0) {
            return Err(Error::param("photon_scale", "must be finite and >= 0"));
        }
        if let Some(b) = self.quantization_bits {
            if !(1..=32).contains(&b) {
                return Err(Error::param("quantization_bits", "must lie in 1..=32"));
            }
        }
        Ok(())
    }
}

/// Predicted frames with optional Poisson shot noise and ADC quantization.
///
/// Shot noise is drawn at `photon_scale * I` for the exposure-weighted
/// intensity `I` and converted back to intensity units, so a sensor with a
/// higher exposure weight has proportionally more photons. Quantization maps
/// each sensor's frames onto `2^bits - 1` levels spanning that sensor's peak.
/// Every frame draws from its own seeded stream.
pub fn simulate_dataset(scene: &SceneModel, noise: &NoiseSpec) -> Result<Dataset> {
    noise.validate()?;
    let clean = predict_dataset(scene)?;
    if noise.photon_scale == 0.0 && noise.quantization_bits.is_none() {
        return Ok(clean);
    }
    let (grid, sensors, scan) = (clean.grid, clean.sensors.clone(), clean.scan.clone());
    let mut frames = clean.into_frames();
    if noise.photon_scale > 0.0 {
        let scale = noise.photon_scale;
        frames
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(k, frame)| {
                let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
                rng.set_stream(k as u64);
                for v in frame.iter_mut() {
                    let lambda = *v * scale;
                    *v = if lambda > 0.0 {
                        let d = Poisson::new(lambda)
                            .map_err(|e| Error::param("photon_scale", e.to_string()))?;
                        d.sample(&mut rng) / scale
                    } else {
                        0.0
                    };
                }
                Ok::<(), Error>(())
            })?;
    }
    if let Some(bits) = noise.quantization_bits {
        let levels = ((1u64 << bits) - 1) as f64;
        let n = sensors.len();
        for s in 0..n {
            let peak = frames
                .iter()
                .skip(s)
                .step_by(n)
                .flat_map(|f| f.iter())
                .fold(0.0f64, |m, &v| m.max(v));
            if peak <= 0.0 {
                continue;
            }
            for f in frames.iter_mut().skip(s).step_by(n) {
                f.mapv_inplace(|v| (v / peak * levels).round() * peak / levels);
            }
        }
    }
    Dataset::new(grid, sensors, scan, frames)
}
