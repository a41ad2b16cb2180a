//! Multi-sensor ptychography.
//!
//! An object is scanned by a localized probe; for every scan position the exit
//! wave is propagated to one or more detectors, some of which sit off-axis to
//! capture high spatial frequencies. This crate provides the propagation
//! operators, the forward model, a gradient-based reconstruction, scan pattern
//! generation, a dataset simulator and image-quality metrics.

pub mod error;
pub mod evaluation;
pub mod fft;
pub mod forward;
pub mod grid;
pub mod optimization;
pub mod propagation;
pub mod scan;
pub mod simulator;

pub use error::{Error, Result};
pub use forward::{Dataset, SceneModel, SensorSpec};
pub use grid::{ComplexField, GridSpec, RealField};
pub use optimization::{reconstruct, LossReport, Reconstruction, ReconstructionConfig};
pub use scan::{Region, ScanPattern};
