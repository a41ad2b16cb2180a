//! The simulate, reconstruct, evaluate and ablate stages as library calls.

use std::fmt;
use std::fs;
use std::path::Path;

use log::info;
use ptyfuse_core::evaluation::{
    detection_na, evaluate_target, normalize_transmittance_with, theoretical_resolution,
    visibility_table, TransmittanceMode, VisibilityReport,
};
use ptyfuse_core::optimization::loss_table;
use ptyfuse_core::propagation::{propagate_asm, propagate_padded_oracle, propagate_shifted_asm};
use ptyfuse_core::scan::overlap_fraction;
use ptyfuse_core::simulator::{make_resolution_target, simulate_dataset, NoiseSpec};
use ptyfuse_core::{
    reconstruct, ComplexField, Dataset, RealField, Reconstruction, ReconstructionConfig, SensorSpec,
};

use crate::config::RunConfig;
use crate::container;
use crate::error::{CliError, CliResult};
use crate::image::write_pgm;

pub const DATASET_FILE: &str = "dataset.ptyf";
pub const OBJECT_TRUTH_FILE: &str = "object_truth.ptyf";
pub const PROBE_TRUTH_FILE: &str = "probe_truth.ptyf";
pub const SCAN_FILE: &str = "scan.txt";
pub const GEOMETRY_FILE: &str = "geometry.txt";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.ptyf";
pub const PROBE_FILE: &str = "probe.ptyf";
pub const LOSS_FILE: &str = "loss.tsv";
pub const IMAGE_FILE: &str = "transmittance.pgm";
pub const VISIBILITY_FILE: &str = "visibility.tsv";

/// Acquisition geometry figures printed by `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySummary {
    pub positions: usize,
    /// Mean neighbour overlap; needs at least two positions.
    pub overlap: Option<f64>,
    pub object_dims: (usize, usize),
    /// Sensor name and detection NA.
    pub sensors: Vec<(String, f64)>,
    pub illumination_na: f64,
    /// Smallest resolvable period with the on-axis sensors only, meters.
    pub resolution_on_axis: Option<f64>,
    /// Smallest resolvable period with every sensor, meters.
    pub resolution_fused: f64,
}

impl fmt::Display for GeometrySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "positions\t{}", self.positions)?;
        match self.overlap {
            Some(o) => writeln!(f, "overlap_fraction\t{o:.4}")?,
            None => writeln!(f, "overlap_fraction\t-")?,
        }
        writeln!(
            f,
            "object_grid\t{}x{}",
            self.object_dims.1, self.object_dims.0
        )?;
        for (name, na) in &self.sensors {
            writeln!(f, "detection_na[{name}]\t{na:.5}")?;
        }
        writeln!(f, "illumination_na\t{:.5}", self.illumination_na)?;
        match self.resolution_on_axis {
            Some(r) => writeln!(f, "resolution_on_axis_um\t{:.3}", r * 1e6)?,
            None => writeln!(f, "resolution_on_axis_um\t-")?,
        }
        writeln!(f, "resolution_fused_um\t{:.3}", self.resolution_fused * 1e6)
    }
}

pub fn geometry_summary(
    config: &RunConfig,
    dataset: &Dataset,
    object_dims: (usize, usize),
) -> CliResult<GeometrySummary> {
    let pitch = config.optics.pitch;
    let illum = config.optics.illumination_na;
    let lambda = config.optics.wavelength;
    let sensors: Vec<(String, f64)> = dataset
        .sensors
        .iter()
        .map(|s| (s.name.clone(), detection_na(s, pitch)))
        .collect();
    let on_axis = dataset
        .sensors
        .iter()
        .filter(|s| s.is_on_axis())
        .map(|s| detection_na(s, pitch))
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let fused = sensors.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(GeometrySummary {
        positions: dataset.position_count(),
        overlap: if dataset.position_count() > 1 {
            Some(overlap_fraction(&dataset.scan, config.probe.diameter)?)
        } else {
            None
        },
        object_dims,
        sensors,
        illumination_na: illum,
        resolution_on_axis: on_axis
            .map(|na| theoretical_resolution(lambda, illum, na))
            .transpose()?,
        resolution_fused: theoretical_resolution(lambda, illum, fused)?,
    })
}

pub struct Simulation {
    pub dataset: Dataset,
    pub object: ComplexField,
    pub probe: ComplexField,
    pub summary: GeometrySummary,
}

/// Renders the target, scans it and records every configured sensor (or the
/// named subset).
pub fn simulate(config: &RunConfig, sensors: Option<&[String]>) -> CliResult<Simulation> {
    let sensors = match sensors {
        Some(names) => config.select_sensors(names)?,
        None => config.sensor_specs()?,
    };
    simulate_with(config, sensors)
}

pub fn simulate_with(config: &RunConfig, sensors: Vec<SensorSpec>) -> CliResult<Simulation> {
    let scan = config.scan_pattern()?;
    let mut scene = config.blank_scene(scan, sensors)?;
    scene.object = make_resolution_target(scene.object.grid(), &config.target_spec())?;
    info!(
        "simulating {} positions x {} sensors on a {}x{} object",
        scene.position_count(),
        scene.sensors.len(),
        scene.object.grid().nx,
        scene.object.grid().ny
    );
    let dataset = simulate_dataset(&scene, &config.noise)?;
    let summary = geometry_summary(config, &dataset, scene.object.grid().dims())?;
    Ok(Simulation {
        dataset,
        object: scene.object,
        probe: scene.probe,
        summary,
    })
}

pub fn write_simulation(dir: &Path, sim: &Simulation, noise: NoiseSpec) -> CliResult<()> {
    create_dir(dir)?;
    container::write_dataset(&dir.join(DATASET_FILE), &sim.dataset, Some(noise))?;
    container::write_complex(&dir.join(OBJECT_TRUTH_FILE), &sim.object, "object")?;
    container::write_complex(&dir.join(PROBE_TRUTH_FILE), &sim.probe, "probe")?;
    write_text(&dir.join(SCAN_FILE), &sim.dataset.scan.to_text())?;
    write_text(&dir.join(GEOMETRY_FILE), &sim.summary.to_string())
}

/// Checks that `dataset` was recorded with the probe grid and sensors of `config`.
pub fn check_geometry(config: &RunConfig, dataset: &Dataset) -> CliResult<()> {
    let grid = config.probe_grid()?;
    if dataset.grid != grid {
        return Err(CliError::Invalid(format!(
            "geometry mismatch: dataset grid {:?} differs from config grid {:?}",
            dataset.grid, grid
        )));
    }
    let configured = config.sensor_specs()?;
    for s in &dataset.sensors {
        match configured.iter().find(|c| c.name == s.name) {
            Some(c) if c == s => {}
            Some(c) => {
                return Err(CliError::Invalid(format!(
                    "geometry mismatch: sensor {:?} is {:?} in the dataset but {:?} in the config",
                    s.name, s, c
                )))
            }
            None => {
                return Err(CliError::Invalid(format!(
                    "geometry mismatch: dataset sensor {:?} is not configured",
                    s.name
                )))
            }
        }
    }
    Ok(())
}

/// Optimizer settings for a sensor set: without off-axis sensors the mixing
/// factor is held at zero.
pub fn effective_config(
    base: &ReconstructionConfig,
    sensors: &[SensorSpec],
) -> ReconstructionConfig {
    let mut cfg = base.clone();
    if sensors.iter().all(SensorSpec::is_on_axis) {
        cfg.gamma_initial = 0.0;
        cfg.gamma_final = 0.0;
    }
    cfg
}

/// Reconstructs from `dataset`, optionally restricted to the named sensors.
pub fn reconstruct_dataset(
    config: &RunConfig,
    dataset: &Dataset,
    sensors: Option<&[String]>,
) -> CliResult<Reconstruction> {
    let subset;
    let dataset = match sensors {
        Some(names) => {
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            subset = dataset.select_sensors(&names)?;
            &subset
        }
        None => dataset,
    };
    run_reconstruction(config, dataset)
}

fn run_reconstruction(config: &RunConfig, dataset: &Dataset) -> CliResult<Reconstruction> {
    let cfg = effective_config(&config.reconstruction, &dataset.sensors);
    let initial = config.blank_scene(dataset.scan.clone(), dataset.sensors.clone())?;
    info!(
        "reconstructing with sensors [{}], {} epochs",
        dataset
            .sensors
            .iter()
            .map(|s| s.name.as_str())
            .collect::<Vec<_>>()
            .join(", "),
        cfg.epochs
    );
    Ok(reconstruct(dataset, &initial, &cfg)?)
}

/// Transmittance image of a reconstructed object.
pub fn transmittance(config: &RunConfig, object: &ComplexField) -> CliResult<RealField> {
    let mode = config.evaluation.mode;
    match &config.evaluation.clear_region {
        Some(rect) => Ok(normalize_transmittance_with(object, rect, mode)?),
        None => Ok(match mode {
            TransmittanceMode::Amplitude => object.amplitude(),
            TransmittanceMode::Intensity => object.intensity(),
        }),
    }
}

pub fn write_reconstruction(dir: &Path, config: &RunConfig, rec: &Reconstruction) -> CliResult<()> {
    create_dir(dir)?;
    container::write_complex(&dir.join(RECONSTRUCTION_FILE), &rec.object, "object")?;
    if config.reconstruction.optimize_probe {
        container::write_complex(&dir.join(PROBE_FILE), &rec.probe, "probe")?;
    }
    write_text(&dir.join(LOSS_FILE), &loss_table(&rec.history))?;
    write_pgm(&dir.join(IMAGE_FILE), &transmittance(config, &rec.object)?)
}

pub fn visibilities(config: &RunConfig, object: &ComplexField) -> CliResult<Vec<VisibilityReport>> {
    Ok(evaluate_target(
        &transmittance(config, object)?,
        &config.target_spec(),
    )?)
}

/// Visibility table with one column per named object.
pub fn evaluate(config: &RunConfig, objects: &[(String, ComplexField)]) -> CliResult<String> {
    let columns = objects
        .iter()
        .map(|(name, o)| Ok((name.clone(), visibilities(config, o)?)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(visibility_table(&columns)?)
}

/// One configuration of the detector ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCase {
    pub name: String,
    pub sensors: Vec<String>,
}

pub struct AblationRun {
    pub case: AblationCase,
    pub reconstruction: Reconstruction,
    pub visibility: Vec<VisibilityReport>,
}

pub struct Ablation {
    pub dataset: Dataset,
    pub runs: Vec<AblationRun>,
    pub table: String,
}

pub fn shift_label(shift: f64) -> String {
    format!("shift_{:.0}um", shift * 1e6)
}

/// Every window used by the ladder and the configurations built from them.
pub fn ablation_layout(config: &RunConfig) -> CliResult<(Vec<SensorSpec>, Vec<AblationCase>)> {
    let a = &config.ablation;
    let z = config.optics.distance;
    let mut sensors = Vec::new();
    let mut cases = Vec::new();
    let single = |name: &str| AblationCase {
        name: name.to_string(),
        sensors: vec![name.to_string()],
    };
    if a.include_full_frame {
        sensors.push(SensorSpec::new(
            "full",
            a.full_width,
            a.full_height,
            0.0,
            0.0,
            z,
            1.0,
        )?);
        cases.push(single("full"));
    }
    if a.include_band {
        sensors.push(SensorSpec::new(
            "band",
            a.full_width,
            a.band_height,
            0.0,
            0.0,
            z,
            1.0,
        )?);
        cases.push(single("band"));
    }
    sensors.push(SensorSpec::on_axis("center", a.window, z)?);
    cases.push(single("center"));
    for &shift in &a.shifts {
        let name = shift_label(shift);
        sensors.push(SensorSpec::new(
            name.clone(),
            a.window,
            a.window,
            shift,
            0.0,
            z,
            a.shifted_exposure_weight,
        )?);
        cases.push(AblationCase {
            name: name.clone(),
            sensors: vec!["center".to_string(), name],
        });
    }
    Ok((sensors, cases))
}

/// Simulates one dataset with every ladder window and reconstructs each
/// configuration from it.
pub fn ablate(config: &RunConfig) -> CliResult<Ablation> {
    let (sensors, cases) = ablation_layout(config)?;
    let sim = simulate_with(config, sensors)?;
    let mut runs = Vec::with_capacity(cases.len());
    for case in cases {
        let rec = reconstruct_dataset(config, &sim.dataset, Some(&case.sensors))?;
        let visibility = visibilities(config, &rec.object)?;
        runs.push(AblationRun {
            case,
            reconstruction: rec,
            visibility,
        });
    }
    let columns: Vec<(String, Vec<VisibilityReport>)> = runs
        .iter()
        .map(|r| (r.case.name.clone(), r.visibility.clone()))
        .collect();
    let table = visibility_table(&columns)?;
    Ok(Ablation {
        dataset: sim.dataset,
        runs,
        table,
    })
}

pub fn write_ablation(dir: &Path, config: &RunConfig, ablation: &Ablation) -> CliResult<()> {
    create_dir(dir)?;
    container::write_dataset(
        &dir.join(DATASET_FILE),
        &ablation.dataset,
        Some(config.noise),
    )?;
    for run in &ablation.runs {
        let sub = dir.join(&run.case.name);
        write_reconstruction(&sub, config, &run.reconstruction)?;
    }
    write_text(&dir.join(VISIBILITY_FILE), &ablation.table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMethod {
    /// Periodic transfer-function propagation on the source grid.
    Asm,
    /// Band-limited propagation to an offset window of the source size.
    Shifted,
    /// Zero-padded periodic propagation followed by a crop.
    Padded { pad_factor: usize },
}

pub fn propagate(
    field: &ComplexField,
    method: PropagationMethod,
    z: f64,
    x0: f64,
    y0: f64,
) -> CliResult<ComplexField> {
    Ok(match method {
        PropagationMethod::Asm => {
            if x0 != 0.0 || y0 != 0.0 {
                return Err(CliError::Invalid(
                    "the periodic method has no window offset; use the shifted method".into(),
                ));
            }
            propagate_asm(field, z)?
        }
        PropagationMethod::Shifted => propagate_shifted_asm(field, z, x0, y0)?,
        PropagationMethod::Padded { pad_factor } => {
            propagate_padded_oracle(field, z, x0, y0, pad_factor)?
        }
    })
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
