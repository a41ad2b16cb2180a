//! Image-quality metrics: line-set fringe visibility, resolution bounds and
//! transmittance normalization.

use std::fmt::Write as _;

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::SensorSpec;
use crate::grid::{ComplexField, GridSpec, RealField};
use crate::simulator::{LineSet, Orientation, TargetSpec};

/// Rectangle in pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PixelRect {
    fn check_inside(&self, dims: (usize, usize)) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::param("region", "empty rectangle"));
        }
        if self.row0 + self.rows > dims.0 || self.col0 + self.cols > dims.1 {
            return Err(Error::OutOfSupport {
                what: format!("rectangle {self:?} in a {}x{} image", dims.0, dims.1),
            });
        }
        Ok(())
    }
}

/// Fraction of the bar length averaged into the profile.
pub const ALONG_BAR_FRACTION: f64 = 0.9;
/// Half-width of the analysed region across the bars, in bar pitches.
pub const ACROSS_HALF_PITCHES: f64 = 2.0;
/// Minimum peak prominence relative to the profile range.
pub const DEFAULT_PROMINENCE: f64 = 0.05;

/// Pixel region around one line set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSetRegion {
    pub rect: PixelRect,
    pub orientation: Orientation,
    pub lines_per_mm: f64,
    /// Middle-bar position along the profile, fractional pixels from its start.
    pub center: f64,
    /// Bar pitch in pixels.
    pub pitch_px: f64,
}

impl LineSetRegion {
    /// Region spanning two pitches either side of the middle bar and the
    /// central 90% of the bar length, for a set rendered on `grid`.
    pub fn for_line_set(grid: &GridSpec, set: &LineSet) -> Result<Self> {
        let cx = set.x / grid.pitch_x + (grid.nx / 2) as f64;
        let cy = set.y / grid.pitch_y + (grid.ny / 2) as f64;
        let (across_c, along_c, across_p, along_p) = match set.orientation {
            Orientation::Vertical => (cx, cy, grid.pitch_x, grid.pitch_y),
            Orientation::Horizontal => (cy, cx, grid.pitch_y, grid.pitch_x),
        };
        let pitch_px = set.pitch() / across_p;
        let half_len = ALONG_BAR_FRACTION * set.bar_length() / 2.0 / along_p;
        let a0 = (across_c - ACROSS_HALF_PITCHES * pitch_px).floor();
        let a1 = (across_c + ACROSS_HALF_PITCHES * pitch_px).ceil() + 1.0;
        let l0 = (along_c - half_len).ceil();
        let l1 = (along_c + half_len).floor() + 1.0;
        if a0 < 0.0 || l0 < 0.0 || l1 <= l0 {
            return Err(Error::OutOfSupport {
                what: format!("line set {} region", set.label()),
            });
        }
        let (a0, a1, l0, l1) = (a0 as usize, a1 as usize, l0 as usize, l1 as usize);
        let rect = match set.orientation {
            Orientation::Vertical => PixelRect {
                row0: l0,
                col0: a0,
                rows: l1 - l0,
                cols: a1 - a0,
            },
            Orientation::Horizontal => PixelRect {
                row0: a0,
                col0: l0,
                rows: a1 - a0,
                cols: l1 - l0,
            },
        };
        rect.check_inside(grid.dims())?;
        Ok(LineSetRegion {
            rect,
            orientation: set.orientation,
            lines_per_mm: set.lines_per_mm,
            center: across_c - a0 as f64,
            pitch_px,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub lines_per_mm: f64,
    pub orientation: Orientation,
    /// `None` when the three-minima / two-maxima structure is not found.
    pub visibility: Option<f64>,
    pub profile: Vec<f64>,
}

impl VisibilityReport {
    pub fn label(&self) -> String {
        format!("{}{}", self.lines_per_mm, self.orientation.letter())
    }
}

/// `(max - min) / (max + min)`.
pub fn visibility_from_means(i_max: f64, i_min: f64) -> f64 {
    if i_max + i_min == 0.0 {
        0.0
    } else {
        (i_max - i_min) / (i_max + i_min)
    }
}

/// Visibility of a bar profile whose middle minimum sits at `center` with
/// period `pitch_px`. Minima are searched near `center + k * pitch` for
/// `k = -1, 0, 1`, maxima near `center +- pitch / 2`.
pub fn profile_visibility(
    profile: &[f64],
    center: f64,
    pitch_px: f64,
    prominence: f64,
) -> Option<f64> {
    if profile.is_empty() || !profile.iter().all(|v| v.is_finite()) {
        return None;
    }
    let hi = profile.iter().cloned().fold(f64::MIN, f64::max);
    let lo = profile.iter().cloned().fold(f64::MAX, f64::min);
    let range = hi - lo;
    if range <= 1e-12 * hi.abs().max(1.0) {
        return None;
    }
    let w = ((pitch_px / 4.0).round() as i64).max(1);
    let search = |at: f64, pick_max: bool| -> Option<f64> {
        let i = at.round() as i64;
        let a = (i - w).max(0) as usize;
        let b = ((i + w + 1).min(profile.len() as i64)).max(0) as usize;
        if a >= b {
            return None;
        }
        let window = &profile[a..b];
        Some(if pick_max {
            window.iter().cloned().fold(f64::MIN, f64::max)
        } else {
            window.iter().cloned().fold(f64::MAX, f64::min)
        })
    };
    let mins = [-1.0, 0.0, 1.0]
        .iter()
        .map(|k| search(center + k * pitch_px, false))
        .collect::<Option<Vec<f64>>>()?;
    let maxs = [-0.5, 0.5]
        .iter()
        .map(|k| search(center + k * pitch_px, true))
        .collect::<Option<Vec<f64>>>()?;
    for (j, m) in maxs.iter().enumerate() {
        if m - mins[j].max(mins[j + 1]) < prominence * range {
            return None;
        }
    }
    let i_max = maxs.iter().sum::<f64>() / 2.0;
    let i_min = mins.iter().sum::<f64>() / 3.0;
    Some(visibility_from_means(i_max, i_min).clamp(0.0, 1.0))
}

/// Fringe visibility of one line set in a transmittance image.
pub fn fringe_visibility(
    transmittance: &RealField,
    region: &LineSetRegion,
) -> Result<VisibilityReport> {
    fringe_visibility_with(transmittance, region, DEFAULT_PROMINENCE)
}

pub fn fringe_visibility_with(
    transmittance: &RealField,
    region: &LineSetRegion,
    prominence: f64,
) -> Result<VisibilityReport> {
    let r = region.rect;
    r.check_inside(transmittance.grid().dims())?;
    if !(region.pitch_px.is_finite() && region.pitch_px > 0.0) {
        return Err(Error::param("region", "pitch must be > 0"));
    }
    let view = transmittance
        .values()
        .slice(s![r.row0..r.row0 + r.rows, r.col0..r.col0 + r.cols]);
    let profile: Vec<f64> = match region.orientation {
        Orientation::Vertical => (0..r.cols)
            .map(|j| view.column(j).sum() / r.rows as f64)
            .collect(),
        Orientation::Horizontal => (0..r.rows)
            .map(|i| view.row(i).sum() / r.cols as f64)
            .collect(),
    };
    let needed = region.center + 1.5 * region.pitch_px;
    if region.center < 1.0 * region.pitch_px || needed > profile.len() as f64 {
        return Err(Error::param(
            "region",
            "profile too short for three minima and two maxima",
        ));
    }
    Ok(VisibilityReport {
        lines_per_mm: region.lines_per_mm,
        orientation: region.orientation,
        visibility: profile_visibility(&profile, region.center, region.pitch_px, prominence),
        profile,
    })
}

/// Visibility of every line set of `target` in a transmittance image.
pub fn evaluate_target(
    transmittance: &RealField,
    target: &TargetSpec,
) -> Result<Vec<VisibilityReport>> {
    target
        .line_sets
        .iter()
        .map(|set| {
            let region = LineSetRegion::for_line_set(transmittance.grid(), set)?;
            fringe_visibility(transmittance, &region)
        })
        .collect()
}

/// Smallest resolvable period `wavelength / (na_illum + na_det)`.
pub fn theoretical_resolution(wavelength: f64, na_illum: f64, na_det: f64) -> Result<f64> {
    let sum = na_illum + na_det;
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::param("na", format!("NA sum must be > 0, got {sum}")));
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::param("wavelength", "must be > 0"));
    }
    Ok(wavelength / sum)
}

/// `sin(atan(edge / z))`, with `edge` the distance from the axis to the
/// farthest window edge along either axis.
pub fn detection_na(sensor: &SensorSpec, pitch: f64) -> f64 {
    let ex = sensor.x0.abs() + sensor.width as f64 * pitch / 2.0;
    let ey = sensor.y0.abs() + sensor.height as f64 * pitch / 2.0;
    (ex.max(ey) / sensor.z).atan().sin()
}

/// Quantity shown as transmittance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransmittanceMode {
    #[default]
    Amplitude,
    Intensity,
}

/// `|O|` divided by its mean over `clear`.
pub fn normalize_transmittance(
    reconstruction: &ComplexField,
    clear: &PixelRect,
) -> Result<RealField> {
    normalize_transmittance_with(reconstruction, clear, TransmittanceMode::Amplitude)
}

pub fn normalize_transmittance_with(
    reconstruction: &ComplexField,
    clear: &PixelRect,
    mode: TransmittanceMode,
) -> Result<RealField> {
    clear.check_inside(reconstruction.grid().dims())?;
    let t = match mode {
        TransmittanceMode::Amplitude => reconstruction.values().mapv(|v| v.norm()),
        TransmittanceMode::Intensity => reconstruction.values().mapv(|v| v.norm_sqr()),
    };
    let mean = t
        .slice(s![
            clear.row0..clear.row0 + clear.rows,
            clear.col0..clear.col0 + clear.cols
        ])
        .mean()
        .unwrap_or(0.0);
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::param("clear_region", "mean transmittance is zero"));
    }
    RealField::new(*reconstruction.grid(), t / mean)
}

/// Plain-text table: one row per line set, one column per configuration,
/// `-` for unresolved sets. Every column must list the same sets in order.
pub fn visibility_table(columns: &[(String, Vec<VisibilityReport>)]) -> Result<String> {
    let rows = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != rows) {
        return Err(Error::param(
            "columns",
            "every column needs the same line sets",
        ));
    }
    let mut out = String::from("lines_per_mm\torientation");
    for (name, _) in columns {
        let _ = write!(out, "\t{name}");
    }
    out.push('\n');
    for i in 0..rows {
        let first = &columns[0].1[i];
        let _ = write!(
            out,
            "{}\t{}",
            first.lines_per_mm,
            match first.orientation {
                Orientation::Horizontal => "horizontal",
                Orientation::Vertical => "vertical",
            }
        );
        for (_, reports) in columns {
            match reports[i].visibility {
                Some(v) => {
                    let _ = write!(out, "\t{v:.2}");
                }
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}
