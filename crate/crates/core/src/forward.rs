//! Forward model: object, probe, scan positions and detectors to intensities.
//!
//! For scan position `i` the exit wave is the probe-sized crop of the object
//! centered on the snapped position, multiplied by the probe. Each detector
//! sees `exposure_weight * |A psi|^2`, where `A` is the propagation plan from
//! the probe grid to that detector's window.

use ndarray::{s, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec, RealField};
use crate::propagation::PropagationPlan;
use crate::scan::ScanPattern;

/// Default object margin around the scanned area, pixels.
pub const DEFAULT_MARGIN: usize = 8;

/// A rectangular detector window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    /// Pixels along x.
    pub width: usize,
    /// Pixels along y.
    pub height: usize,
    /// Window-center offset along x, meters.
    pub x0: f64,
    /// Window-center offset along y, meters.
    pub y0: f64,
    /// Object-to-detector distance, meters.
    pub z: f64,
    pub exposure_weight: f64,
}

impl SensorSpec {
    pub fn new(
        name: impl Into<String>,
        width: usize,
        height: usize,
        x0: f64,
        y0: f64,
        z: f64,
        exposure_weight: f64,
    ) -> Result<Self> {
        let s = SensorSpec {
            name: name.into(),
            width,
            height,
            x0,
            y0,
            z,
            exposure_weight,
        };
        s.validate()?;
        Ok(s)
    }

    /// Square on-axis detector of unit exposure.
    pub fn on_axis(name: impl Into<String>, size: usize, z: f64) -> Result<Self> {
        Self::new(name, size, size, 0.0, 0.0, z, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param(
                "sensor",
                format!("{}: window must be at least 1x1", self.name),
            ));
        }
        if !(self.z.is_finite() && self.z > 0.0) {
            return Err(Error::param(
                "sensor",
                format!("{}: z must be > 0", self.name),
            ));
        }
        if !(self.x0.is_finite() && self.y0.is_finite()) {
            return Err(Error::param(
                "sensor",
                format!("{}: offsets must be finite", self.name),
            ));
        }
        if !(self.exposure_weight.is_finite() && self.exposure_weight > 0.0) {
            return Err(Error::param(
                "sensor",
                format!("{}: exposure weight must be > 0", self.name),
            ));
        }
        Ok(())
    }

    pub fn is_on_axis(&self) -> bool {
        self.x0 == 0.0 && self.y0 == 0.0
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Propagation plan from a probe grid to this window.
    pub fn plan(&self, probe_grid: &GridSpec) -> Result<PropagationPlan> {
        PropagationPlan::new(
            *probe_grid,
            self.width,
            self.height,
            self.z,
            self.x0,
            self.y0,
        )
    }
}

/// Object, probe, scan and detectors. The object crop for position `i` is
/// centered on pixel `(ny/2 + round(y_i / pitch), nx/2 + round(x_i / pitch))`.
#[derive(Debug, Clone)]
pub struct SceneModel {
    pub object: ComplexField,
    pub probe: ComplexField,
    pub scan: ScanPattern,
    pub sensors: Vec<SensorSpec>,
}

impl SceneModel {
    pub fn new(
        object: ComplexField,
        probe: ComplexField,
        scan: ScanPattern,
        sensors: Vec<SensorSpec>,
    ) -> Result<Self> {
        let scene = SceneModel {
            object,
            probe,
            scan,
            sensors,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Object grid just large enough for every crop of `scan` plus `margin`
    /// pixels on each side.
    pub fn object_grid_for(probe_grid: &GridSpec, scan: &ScanPattern, margin: usize) -> GridSpec {
        let (mut ex, mut ey) = (0i64, 0i64);
        for &(x, y) in &scan.positions {
            ex = ex.max(snap(x, probe_grid.pitch_x).abs());
            ey = ey.max(snap(y, probe_grid.pitch_y).abs());
        }
        let nx = probe_grid.nx + 2 * (ex as usize + margin) + 1;
        let ny = probe_grid.ny + 2 * (ey as usize + margin) + 1;
        probe_grid.resized(nx + nx % 2, ny + ny % 2)
    }

    /// Scene with an object of constant `fill` sized by [`object_grid_for`](Self::object_grid_for).
    pub fn assemble(
        probe: ComplexField,
        scan: ScanPattern,
        sensors: Vec<SensorSpec>,
        margin: usize,
        fill: Complex64,
    ) -> Result<Self> {
        let grid = Self::object_grid_for(probe.grid(), &scan, margin);
        Self::new(ComplexField::constant(grid, fill), probe, scan, sensors)
    }

    pub fn validate(&self) -> Result<()> {
        let (og, pg) = (self.object.grid(), self.probe.grid());
        if !og.same_sampling(pg) {
            return Err(Error::param(
                "scene",
                "object and probe must share pixel pitch and wavelength",
            ));
        }
        for s in &self.sensors {
            s.validate()?;
        }
        self.scan.validate()?;
        for i in 0..self.scan.len() {
            self.crop_origin(i)?;
        }
        Ok(())
    }

    pub fn position_count(&self) -> usize {
        self.scan.len()
    }

    /// Snapped pixel offset of position `i` from the object center, `(dy, dx)`.
    pub fn pixel_offset(&self, index: usize) -> Result<(i64, i64)> {
        let &(x, y) = self.scan.positions.get(index).ok_or_else(|| {
            Error::param(
                "position_index",
                format!("{index} out of range for {} positions", self.scan.len()),
            )
        })?;
        let g = self.probe.grid();
        Ok((snap(y, g.pitch_y), snap(x, g.pitch_x)))
    }

    /// Top-left object pixel of the crop for position `index`.
    pub fn crop_origin(&self, index: usize) -> Result<(usize, usize)> {
        let (dy, dx) = self.pixel_offset(index)?;
        let (ony, onx) = self.object.grid().dims();
        let (pny, pnx) = self.probe.grid().dims();
        let iy = (ony / 2) as i64 + dy - (pny / 2) as i64;
        let ix = (onx / 2) as i64 + dx - (pnx / 2) as i64;
        if iy < 0 || ix < 0 || iy as usize + pny > ony || ix as usize + pnx > onx {
            return Err(Error::AtPosition {
                index,
                source: Box::new(Error::OutOfSupport {
                    what: format!("probe crop at ({iy}, {ix}) of a {ony}x{onx} object"),
                }),
            });
        }
        Ok((iy as usize, ix as usize))
    }

    /// Propagation plans for every sensor, in sensor order.
    pub fn plans(&self) -> Result<Vec<PropagationPlan>> {
        self.sensors
            .iter()
            .map(|s| s.plan(self.probe.grid()))
            .collect()
    }
}

fn snap(v: f64, pitch: f64) -> i64 {
    (v / pitch).round() as i64
}

/// Raw exit-wave samples for a crop origin.
pub(crate) fn exit_values(
    object: &Array2<Complex64>,
    probe: &Array2<Complex64>,
    origin: (usize, usize),
) -> Array2<Complex64> {
    let (ny, nx) = probe.dim();
    let mut out = object
        .slice(s![origin.0..origin.0 + ny, origin.1..origin.1 + nx])
        .to_owned();
    out.zip_mut_with(probe, |o, p| *o *= *p);
    out
}

/// Exit wave `O(crop at R_i) * P` on the probe grid.
pub fn exit_field(scene: &SceneModel, position_index: usize) -> Result<ComplexField> {
    let origin = scene.crop_origin(position_index)?;
    Ok(ComplexField::from_parts_unchecked(
        *scene.probe.grid(),
        exit_values(scene.object.values(), scene.probe.values(), origin),
    ))
}

fn intensity_with_plan(
    plan: &PropagationPlan,
    exit: &Array2<Complex64>,
    weight: f64,
) -> Array2<f64> {
    plan.forward_values(exit).mapv(|v| weight * v.norm_sqr())
}

/// Intensity on `sensor` for scan position `position_index`.
pub fn predict_intensity(
    scene: &SceneModel,
    position_index: usize,
    sensor: &SensorSpec,
) -> Result<RealField> {
    sensor.validate()?;
    let plan = sensor.plan(scene.probe.grid())?;
    let psi = exit_field(scene, position_index)?;
    Ok(RealField::from_parts_unchecked(
        *plan.window_grid(),
        intensity_with_plan(&plan, psi.values(), sensor.exposure_weight),
    ))
}

/// Detector frames with their acquisition geometry. Frames are stored
/// position-major, then by sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Probe grid (pixel pitch and wavelength shared by every detector).
    pub grid: GridSpec,
    pub sensors: Vec<SensorSpec>,
    pub scan: ScanPattern,
    frames: Vec<Array2<f64>>,
}

impl Dataset {
    pub fn new(
        grid: GridSpec,
        sensors: Vec<SensorSpec>,
        scan: ScanPattern,
        frames: Vec<Array2<f64>>,
    ) -> Result<Self> {
        if frames.len() != scan.len() * sensors.len() {
            return Err(Error::param(
                "frames",
                format!(
                    "{} frames for {} positions x {} sensors",
                    frames.len(),
                    scan.len(),
                    sensors.len()
                ),
            ));
        }
        for (k, f) in frames.iter().enumerate() {
            let s = &sensors[k % sensors.len()];
            if f.dim() != (s.height, s.width) {
                return Err(Error::AtPosition {
                    index: k / sensors.len(),
                    source: Box::new(Error::ShapeMismatch {
                        expected: (s.height, s.width),
                        found: f.dim(),
                    }),
                });
            }
        }
        Ok(Dataset {
            grid,
            sensors,
            scan,
            frames,
        })
    }

    pub fn position_count(&self) -> usize {
        self.scan.len()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, position: usize, sensor: usize) -> &Array2<f64> {
        &self.frames[position * self.sensors.len() + sensor]
    }

    pub fn frame_mut(&mut self, position: usize, sensor: usize) -> &mut Array2<f64> {
        let n = self.sensors.len();
        &mut self.frames[position * n + sensor]
    }

    pub fn frames(&self) -> &[Array2<f64>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Array2<f64>> {
        self.frames
    }

    /// Keep only the named sensors, in the given order.
    pub fn select_sensors(&self, names: &[&str]) -> Result<Dataset> {
        let mut idx = Vec::with_capacity(names.len());
        for n in names {
            let i = self
                .sensors
                .iter()
                .position(|s| s.name == *n)
                .ok_or_else(|| Error::param("sensors", format!("no sensor named {n:?}")))?;
            idx.push(i);
        }
        let sensors = idx.iter().map(|&i| self.sensors[i].clone()).collect();
        let frames = (0..self.position_count())
            .flat_map(|p| idx.iter().map(move |&i| (p, i)))
            .map(|(p, i)| self.frame(p, i).clone())
            .collect();
        Dataset::new(self.grid, sensors, self.scan.clone(), frames)
    }
}

/// Frames for every (position, sensor) pair.
pub fn predict_dataset(scene: &SceneModel) -> Result<Dataset> {
    let plans = scene.plans()?;
    let origins = (0..scene.position_count())
        .map(|i| scene.crop_origin(i))
        .collect::<Result<Vec<_>>>()?;
    let per_position: Vec<Vec<Array2<f64>>> = origins
        .par_iter()
        .map(|&origin| {
            let psi = exit_values(scene.object.values(), scene.probe.values(), origin);
            plans
                .iter()
                .zip(&scene.sensors)
                .map(|(plan, s)| intensity_with_plan(plan, &psi, s.exposure_weight))
                .collect()
        })
        .collect();
    Dataset::new(
        *scene.probe.grid(),
        scene.sensors.clone(),
        scene.scan.clone(),
        per_position.into_iter().flatten().collect(),
    )
}
