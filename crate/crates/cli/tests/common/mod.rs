#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use ptyfuse::RunConfig;

/// Small two-sensor geometry that simulates and reconstructs in milliseconds.
pub const TINY: &str = r#"
[optics]
wavelength = 561e-9
pitch = 3.45e-6
distance = 5e-3

[probe]
grid = 32
diameter = 80e-6
edge = 5e-6

[scan]
region_side = 60e-6
min_distance = 20e-6
positions = 4
seed = 3

[[sensors]]
name = "a"
width = 32
height = 32

[[sensors]]
name = "b"
width = 32
height = 32
x0 = 110e-6
exposure_weight = 10.0

[target]
line_sets = [{ lines_per_mm = 40.0, orientation = "vertical", x = 0.0, y = 0.0 }]

[reconstruction]
epochs = 3
gamma_switch_epoch = 1
batch_size = 1
learning_rate = 0.02

[ablation]
full_width = 48
full_height = 40
band_height = 12
window = 16
shifts = [40e-6, 80e-6]
"#;

pub fn tiny() -> RunConfig {
    RunConfig::from_toml(TINY, Path::new("tiny.toml")).unwrap()
}

pub fn write_tiny(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path
}

pub fn ptyfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptyfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn workspace_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}
