//! PTYF container: a small binary file for datasets and fields.
//!
//! Byte layout, all integers and floats little-endian:
//!
//! | offset    | size | content                                  |
//! |-----------|------|------------------------------------------|
//! | 0         | 4    | magic `PTYF`                             |
//! | 4         | 4    | format version, `u32`                    |
//! | 8         | 4    | metadata length `L` in bytes, `u32`      |
//! | 12        | L    | metadata, UTF-8 JSON                     |
//! | 12 + L    | ...  | payload, IEEE-754 `f32`                  |
//!
//! Dataset payloads hold frames position-major then by sensor, each frame
//! row-major. Real fields are row-major; complex fields interleave `re, im`
//! per pixel, row-major.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use ptyfuse_core::simulator::NoiseSpec;
use ptyfuse_core::{ComplexField, Dataset, GridSpec, RealField, ScanPattern, SensorSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 4] = *b"PTYF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub grid: GridSpec,
    pub sensors: Vec<SensorSpec>,
    pub scan: ScanPattern,
    pub noise: Option<NoiseSpec>,
    pub exposure_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMeta {
    pub grid: GridSpec,
    pub layout: Layout,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Metadata {
    Dataset(DatasetMeta),
    Field(FieldMeta),
}

impl Metadata {
    /// Number of `f32` values the payload must hold.
    pub fn payload_len(&self) -> usize {
        match self {
            Metadata::Dataset(d) => {
                d.sensors.iter().map(SensorSpec::pixel_count).sum::<usize>() * d.scan.len()
            }
            Metadata::Field(f) => {
                let n = f.grid.nx * f.grid.ny;
                match f.layout {
                    Layout::Real => n,
                    Layout::Complex => 2 * n,
                }
            }
        }
    }
}

pub fn encode(meta: &Metadata, payload: &[f32]) -> CliResult<Vec<u8>> {
    if payload.len() != meta.payload_len() {
        return Err(CliError::Invalid(format!(
            "payload holds {} values, metadata implies {}",
            payload.len(),
            meta.payload_len()
        )));
    }
    let json = serde_json::to_vec(meta).map_err(|e| CliError::Invalid(e.to_string()))?;
    let json_len = u32::try_from(json.len())
        .map_err(|_| CliError::Invalid("metadata exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + 4 * payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&json_len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode`]; `origin` only labels errors.
pub fn decode(bytes: &[u8], origin: &Path) -> CliResult<(Metadata, Vec<f32>)> {
    let bad = |reason: String| CliError::format(origin, reason);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(bad("missing PTYF magic".into()));
    }
    let word =
        |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let version = word(4);
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let json_len = word(8) as usize;
    let body = bytes
        .get(HEADER_LEN..HEADER_LEN + json_len)
        .ok_or_else(|| bad("truncated metadata".into()))?;
    let meta: Metadata = serde_json::from_slice(body).map_err(|e| bad(format!("metadata: {e}")))?;
    let raw = &bytes[HEADER_LEN + json_len..];
    if raw.len() != 4 * meta.payload_len() {
        return Err(bad(format!(
            "payload is {} bytes, metadata implies {}",
            raw.len(),
            4 * meta.payload_len()
        )));
    }
    let payload = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((meta, payload))
}

pub fn write_file(path: &Path, meta: &Metadata, payload: &[f32]) -> CliResult<()> {
    let bytes = encode(meta, payload)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> CliResult<(Metadata, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, path)
}

pub fn dataset_metadata(dataset: &Dataset, noise: Option<NoiseSpec>) -> Metadata {
    Metadata::Dataset(DatasetMeta {
        grid: dataset.grid,
        sensors: dataset.sensors.clone(),
        scan: dataset.scan.clone(),
        noise,
        exposure_weights: dataset.sensors.iter().map(|s| s.exposure_weight).collect(),
    })
}

pub fn write_dataset(path: &Path, dataset: &Dataset, noise: Option<NoiseSpec>) -> CliResult<()> {
    let payload: Vec<f32> = dataset
        .frames()
        .iter()
        .flat_map(|f| f.iter().map(|&v| v as f32))
        .collect();
    write_file(path, &dataset_metadata(dataset, noise), &payload)
}

pub fn read_dataset(path: &Path) -> CliResult<(Dataset, Option<NoiseSpec>)> {
    let (meta, payload) = read_file(path)?;
    let Metadata::Dataset(meta) = meta else {
        return Err(CliError::format(path, "expected a dataset, found a field"));
    };
    let weights: Vec<f64> = meta.sensors.iter().map(|s| s.exposure_weight).collect();
    if weights != meta.exposure_weights {
        return Err(CliError::format(
            path,
            "exposure weights disagree with the sensor list",
        ));
    }
    let mut frames = Vec::with_capacity(meta.scan.len() * meta.sensors.len());
    let mut at = 0;
    for _ in 0..meta.scan.len() {
        for s in &meta.sensors {
            let n = s.pixel_count();
            let values = payload[at..at + n].iter().map(|&v| f64::from(v)).collect();
            at += n;
            let frame = Array2::from_shape_vec((s.height, s.width), values)
                .map_err(|e| CliError::format(path, e.to_string()))?;
            frames.push(frame);
        }
    }
    let dataset = Dataset::new(meta.grid, meta.sensors, meta.scan, frames)?;
    Ok((dataset, meta.noise))
}

pub fn write_complex(path: &Path, field: &ComplexField, label: &str) -> CliResult<()> {
    let meta = Metadata::Field(FieldMeta {
        grid: *field.grid(),
        layout: Layout::Complex,
        label: label.to_string(),
    });
    let payload: Vec<f32> = field
        .values()
        .iter()
        .flat_map(|v| [v.re as f32, v.im as f32])
        .collect();
    write_file(path, &meta, &payload)
}

pub fn write_real(path: &Path, field: &RealField, label: &str) -> CliResult<()> {
    let meta = Metadata::Field(FieldMeta {
        grid: *field.grid(),
        layout: Layout::Real,
        label: label.to_string(),
    });
    let payload: Vec<f32> = field.values().iter().map(|&v| v as f32).collect();
    write_file(path, &meta, &payload)
}

/// Reads a field of either layout as complex; real fields get zero phase.
pub fn read_complex(path: &Path) -> CliResult<(ComplexField, String)> {
    let (meta, payload) = read_file(path)?;
    let Metadata::Field(meta) = meta else {
        return Err(CliError::format(path, "expected a field, found a dataset"));
    };
    let values: Vec<Complex64> = match meta.layout {
        Layout::Complex => payload
            .chunks_exact(2)
            .map(|c| Complex64::new(f64::from(c[0]), f64::from(c[1])))
            .collect(),
        Layout::Real => payload
            .iter()
            .map(|&v| Complex64::new(f64::from(v), 0.0))
            .collect(),
    };
    let arr = Array2::from_shape_vec(meta.grid.dims(), values)
        .map_err(|e| CliError::format(path, e.to_string()))?;
    Ok((ComplexField::new(meta.grid, arr)?, meta.label))
}

pub fn read_real(path: &Path) -> CliResult<(RealField, String)> {
    let (meta, payload) = read_file(path)?;
    let Metadata::Field(meta) = meta else {
        return Err(CliError::format(path, "expected a field, found a dataset"));
    };
    if meta.layout != Layout::Real {
        return Err(CliError::format(path, "expected a real field"));
    }
    let values = payload.iter().map(|&v| f64::from(v)).collect();
    let arr = Array2::from_shape_vec(meta.grid.dims(), values)
        .map_err(|e| CliError::format(path, e.to_string()))?;
    Ok((RealField::new(meta.grid, arr)?, meta.label))
}
