//! Run configuration loaded from TOML. Every key has a default; the defaults
//! describe the full-scale two-sensor experiment.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use ptyfuse_core::evaluation::{PixelRect, TransmittanceMode};
use ptyfuse_core::scan::{poisson_disk, Region};
use ptyfuse_core::simulator::{
    make_diverging_probe, GaussianPhase, LineSet, NoiseSpec, TargetSpec,
};
use ptyfuse_core::{
    ComplexField, GridSpec, ReconstructionConfig, ScanPattern, SceneModel, SensorSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsConfig {
    /// Meters.
    pub wavelength: f64,
    /// Detector and object pixel pitch, meters.
    pub pitch: f64,
    /// Object to detector distance, meters.
    pub distance: f64,
    /// Rim angle of the diverging probe wavefront, also used in the
    /// resolution summary.
    pub illumination_na: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        OpticsConfig {
            wavelength: 561e-9,
            pitch: 3.45e-6,
            distance: 61e-3,
            illumination_na: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Probe grid side, pixels.
    pub grid: usize,
    /// Meters.
    pub diameter: f64,
    /// Raised-cosine edge width, meters.
    pub edge: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            grid: 512,
            diameter: 1.2e-3,
            edge: 40e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Side of the square scan region centered on the axis, meters.
    pub region_side: f64,
    /// Minimum distance between positions, meters.
    pub min_distance: f64,
    pub positions: usize,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            region_side: 2.4e-3,
            min_distance: 0.25e-3,
            positions: 52,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// Window center offset from the axis, meters.
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "unit")]
    pub exposure_weight: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    /// Scale of the default line-set layout; ignored when `line_sets` is given.
    pub ladder_scale: f64,
    pub line_sets: Option<Vec<LineSet>>,
    pub line_transmittance: f64,
    pub background_transmittance: f64,
    pub phase: Option<GaussianPhase>,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig {
            ladder_scale: 4.0,
            line_sets: None,
            line_transmittance: 0.0,
            background_transmittance: 1.0,
            phase: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Extra object pixels beyond the outermost probe crop.
    pub margin: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            margin: ptyfuse_core::forward::DEFAULT_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub mode: TransmittanceMode,
    /// Clear-glass patch used to normalize images; none keeps the raw values.
    pub clear_region: Option<PixelRect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub full_width: usize,
    pub full_height: usize,
    /// Height of the full-width band, pixels.
    pub band_height: usize,
    /// Side of the centered and shifted square windows, pixels.
    pub window: usize,
    /// Horizontal offsets of the second window, meters.
    pub shifts: Vec<f64>,
    pub shifted_exposure_weight: f64,
    pub include_full_frame: bool,
    pub include_band: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            full_width: 2448,
            full_height: 2048,
            band_height: 512,
            window: 256,
            shifts: vec![883e-6, 1766e-6, 2649e-6],
            shifted_exposure_weight: 10.0,
            include_full_frame: true,
            include_band: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub optics: OpticsConfig,
    pub probe: ProbeConfig,
    pub scan: ScanConfig,
    pub sensors: Vec<SensorConfig>,
    pub target: TargetConfig,
    pub noise: NoiseSpec,
    pub scene: SceneConfig,
    pub reconstruction: ReconstructionConfig,
    pub evaluation: EvaluationConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            optics: OpticsConfig::default(),
            probe: ProbeConfig::default(),
            scan: ScanConfig::default(),
            sensors: vec![
                SensorConfig {
                    name: "a".into(),
                    width: 512,
                    height: 512,
                    x0: 0.0,
                    y0: 0.0,
                    exposure_weight: 1.0,
                },
                SensorConfig {
                    name: "b".into(),
                    width: 512,
                    height: 512,
                    x0: 2649e-6,
                    y0: 0.0,
                    exposure_weight: 10.0,
                },
            ],
            target: TargetConfig::default(),
            noise: NoiseSpec::default(),
            scene: SceneConfig::default(),
            reconstruction: ReconstructionConfig::default(),
            evaluation: EvaluationConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> CliResult<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces the scan, noise and optimizer seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scan.seed = seed;
        self.noise.rng_seed = seed;
        self.reconstruction.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> CliResult<()> {
        self.probe_grid()?;
        let positive = [
            ("optics.distance", self.optics.distance),
            ("probe.diameter", self.probe.diameter),
            ("scan.region_side", self.scan.region_side),
            ("scan.min_distance", self.scan.min_distance),
            ("target.ladder_scale", self.target.ladder_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Invalid(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.probe.edge.is_finite() && self.probe.edge >= 0.0) {
            return Err(CliError::Invalid("probe.edge must be >= 0".into()));
        }
        if !(self.optics.illumination_na.is_finite() && self.optics.illumination_na >= 0.0) {
            return Err(CliError::Invalid(
                "optics.illumination_na must be >= 0".into(),
            ));
        }
        if self.scan.positions == 0 {
            return Err(CliError::Invalid("scan.positions must be >= 1".into()));
        }
        if self.sensors.is_empty() {
            return Err(CliError::Invalid(
                "at least one [[sensors]] entry is required".into(),
            ));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            if self.sensors[..i].iter().any(|o| o.name == s.name) {
                return Err(CliError::Invalid(format!(
                    "duplicate sensor name {:?}",
                    s.name
                )));
            }
        }
        self.sensor_specs()?;
        self.target_spec().validate()?;
        self.noise.validate()?;
        self.reconstruction.validate()?;
        let a = &self.ablation;
        if a.window == 0 || a.full_width == 0 || a.full_height == 0 || a.band_height == 0 {
            return Err(CliError::Invalid(
                "ablation window sizes must be >= 1".into(),
            ));
        }
        if !(a.shifted_exposure_weight.is_finite() && a.shifted_exposure_weight > 0.0) {
            return Err(CliError::Invalid(
                "ablation.shifted_exposure_weight must be > 0".into(),
            ));
        }
        if a.shifts.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(CliError::Invalid(
                "ablation.shifts must be finite and nonzero".into(),
            ));
        }
        self.probe_field()?;
        Ok(())
    }

    pub fn probe_grid(&self) -> CliResult<GridSpec> {
        Ok(GridSpec::square(
            self.probe.grid,
            self.optics.pitch,
            self.optics.wavelength,
        )?)
    }

    pub fn sensor_specs(&self) -> CliResult<Vec<SensorSpec>> {
        self.sensors
            .iter()
            .map(|s| {
                Ok(SensorSpec::new(
                    s.name.clone(),
                    s.width,
                    s.height,
                    s.x0,
                    s.y0,
                    self.optics.distance,
                    s.exposure_weight,
                )?)
            })
            .collect()
    }

    /// Sensor specs restricted to `names`, in the order given.
    pub fn select_sensors(&self, names: &[String]) -> CliResult<Vec<SensorSpec>> {
        let all = self.sensor_specs()?;
        names
            .iter()
            .map(|n| {
                all.iter()
                    .find(|s| &s.name == n)
                    .cloned()
                    .ok_or_else(|| CliError::Invalid(format!("no sensor named {n:?} in config")))
            })
            .collect()
    }

    pub fn target_spec(&self) -> TargetSpec {
        let t = &self.target;
        let line_sets = match &t.line_sets {
            Some(sets) => sets.clone(),
            None => TargetSpec::ladder(self.optics.pitch, t.ladder_scale).line_sets,
        };
        TargetSpec {
            line_sets,
            line_transmittance: t.line_transmittance,
            background_transmittance: t.background_transmittance,
            phase: t.phase,
        }
    }

    pub fn scan_pattern(&self) -> CliResult<ScanPattern> {
        let region = Region::centered_square(self.scan.region_side)?;
        Ok(poisson_disk(
            region,
            self.scan.min_distance,
            self.scan.positions,
            self.scan.seed,
        )?)
    }

    pub fn probe_field(&self) -> CliResult<ComplexField> {
        Ok(make_diverging_probe(
            &self.probe_grid()?,
            self.probe.diameter,
            self.probe.edge,
            self.optics.illumination_na,
        )?)
    }

    /// Scene with a clear object, the configured probe and `sensors`.
    pub fn blank_scene(
        &self,
        scan: ScanPattern,
        sensors: Vec<SensorSpec>,
    ) -> CliResult<SceneModel> {
        Ok(SceneModel::assemble(
            self.probe_field()?,
            scan,
            sensors,
            self.scene.margin,
            Complex64::new(1.0, 0.0),
        )?)
    }
}
