//! Poisson-disk scan patterns and probe-overlap statistics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in the object plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub y_min: f64,
    pub width: f64,
    pub height: f64,
}

impl Region {
    pub fn new(x_min: f64, y_min: f64, width: f64, height: f64) -> Result<Self> {
        let r = Region {
            x_min,
            y_min,
            width,
            height,
        };
        r.validate()?;
        Ok(r)
    }

    /// Square of side `side` centered on the origin.
    pub fn centered_square(side: f64) -> Result<Self> {
        Self::new(-side / 2.0, -side / 2.0, side, side)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.width, self.height]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::param(
                "region",
                format!("degenerate region {self:?}"),
            ));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x_min + self.width / 2.0,
            self.y_min + self.height / 2.0,
        )
    }

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= self.x_min
            && x <= self.x_min + self.width
            && y >= self.y_min
            && y <= self.y_min + self.height
    }
}

/// Ordered list of probe positions, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPattern {
    pub positions: Vec<(f64, f64)>,
    pub min_distance: f64,
    pub region: Region,
    pub rng_seed: u64,
}

impl ScanPattern {
    /// Wrap explicit positions, checking the spacing and region invariants.
    pub fn new(
        positions: Vec<(f64, f64)>,
        min_distance: f64,
        region: Region,
        rng_seed: u64,
    ) -> Result<Self> {
        let p = ScanPattern {
            positions,
            min_distance,
            region,
            rng_seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Exhaustive check of every pairwise distance and of region membership.
    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        if !(self.min_distance >= 0.0 && self.min_distance.is_finite()) {
            return Err(Error::param("min_distance", "must be finite and >= 0"));
        }
        for (i, &p) in self.positions.iter().enumerate() {
            if !self.region.contains(p) {
                return Err(Error::AtPosition {
                    index: i,
                    source: Box::new(Error::OutOfSupport {
                        what: format!("scan point {p:?}"),
                    }),
                });
            }
        }
        if let Some((i, j, d)) = closest_pair(&self.positions) {
            if d < self.min_distance {
                return Err(Error::InfeasibleScan(format!(
                    "points {i} and {j} are {d:.4e} m apart, below {:.4e} m",
                    self.min_distance
                )));
            }
        }
        Ok(())
    }

    /// Tab-separated export: a `#` header with r and seed, then `x<TAB>y` rows.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# r={:e} seed={} region={:e},{:e},{:e},{:e}\n",
            self.min_distance,
            self.rng_seed,
            self.region.x_min,
            self.region.y_min,
            self.region.width,
            self.region.height
        );
        for (x, y) in &self.positions {
            let _ = writeln!(s, "{x:e}\t{y:e}");
        }
        s
    }

    /// Inverse of [`to_text`](Self::to_text).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::param("scan", "empty scan file"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::param("scan", "missing header line"))?;
        let (mut r, mut seed, mut region) = (None, None, None);
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("r=") {
                r = v.parse::<f64>().ok();
            } else if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse::<u64>().ok();
            } else if let Some(v) = tok.strip_prefix("region=") {
                let parts: Vec<f64> = v.split(',').filter_map(|t| t.parse().ok()).collect();
                if parts.len() == 4 {
                    region = Some(Region::new(parts[0], parts[1], parts[2], parts[3])?);
                }
            }
        }
        let r = r.ok_or_else(|| Error::param("scan", "header lacks r="))?;
        let seed = seed.ok_or_else(|| Error::param("scan", "header lacks seed="))?;
        let mut positions = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split('\t');
            let parse = |t: Option<&str>| t.and_then(|v| v.trim().parse::<f64>().ok());
            match (parse(it.next()), parse(it.next())) {
                (Some(x), Some(y)) => positions.push((x, y)),
                _ => {
                    return Err(Error::param(
                        "scan",
                        format!("malformed row {}: {line:?}", n + 2),
                    ))
                }
            }
        }
        let region = match region {
            Some(reg) => reg,
            None => bounding_region(&positions)?,
        };
        ScanPattern::new(positions, r, region, seed)
    }
}

fn bounding_region(points: &[(f64, f64)]) -> Result<Region> {
    if points.is_empty() {
        return Err(Error::param("scan", "no positions"));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let pad = 1e-12;
    Region::new(x0 - pad, y0 - pad, x1 - x0 + 2.0 * pad, y1 - y0 + 2.0 * pad)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn closest_pair(points: &[(f64, f64)]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = dist(points[i], points[j]);
            if best.is_none_or(|b| d < b.2) {
                best = Some((i, j, d));
            }
        }
    }
    best
}

const CANDIDATES: usize = 30;

/// Maximal Poisson-disk sample of `region` with spacing `r` (active-list dart
/// throwing, 30 candidates per active point).
pub fn poisson_disk_maximal(region: &Region, r: f64, rng_seed: u64) -> Result<Vec<(f64, f64)>> {
    region.validate()?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", "minimum distance must be > 0"));
    }
    let cell = r / 2f64.sqrt();
    let cols = (region.width / cell).ceil().max(1.0) as usize;
    let rows = (region.height / cell).ceil().max(1.0) as usize;
    if cols.saturating_mul(rows) > 50_000_000 {
        return Err(Error::param("r", "spacing too small for region"));
    }
    let mut cells: Vec<Option<usize>> = vec![None; cols * rows];
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let cell_of = |p: (f64, f64)| {
        let cx = (((p.0 - region.x_min) / cell) as usize).min(cols - 1);
        let cy = (((p.1 - region.y_min) / cell) as usize).min(rows - 1);
        (cx, cy)
    };
    let fits = |p: (f64, f64), cells: &[Option<usize>], points: &[(f64, f64)]| {
        let (cx, cy) = cell_of(p);
        let (x0, x1) = (cx.saturating_sub(2), (cx + 2).min(cols - 1));
        let (y0, y1) = (cy.saturating_sub(2), (cy + 2).min(rows - 1));
        for yy in y0..=y1 {
            for xx in x0..=x1 {
                if let Some(k) = cells[yy * cols + xx] {
                    if dist(points[k], p) < r {
                        return false;
                    }
                }
            }
        }
        true
    };

    let first = (
        region.x_min + rng.random::<f64>() * region.width,
        region.y_min + rng.random::<f64>() * region.height,
    );
    let (cx, cy) = cell_of(first);
    cells[cy * cols + cx] = Some(0);
    points.push(first);
    active.push(0);

    while !active.is_empty() {
        let slot = rng.random_range(0..active.len());
        let base = points[active[slot]];
        let mut placed = false;
        for _ in 0..CANDIDATES {
            let radius = r * (1.0 + rng.random::<f64>());
            let angle = 2.0 * PI * rng.random::<f64>();
            let p = (base.0 + radius * angle.cos(), base.1 + radius * angle.sin());
            if !region.contains(p) || !fits(p, &cells, &points) {
                continue;
            }
            let (cx, cy) = cell_of(p);
            cells[cy * cols + cx] = Some(points.len());
            active.push(points.len());
            points.push(p);
            placed = true;
            break;
        }
        if !placed {
            active.swap_remove(slot);
        }
    }
    Ok(points)
}

/// Poisson-disk scan of `target_count` points. A maximal sample is drawn and
/// the `target_count` points nearest the region center are kept, in
/// generation order.
pub fn poisson_disk(
    region: Region,
    r: f64,
    target_count: usize,
    rng_seed: u64,
) -> Result<ScanPattern> {
    if target_count == 0 {
        return Err(Error::param("target_count", "must be >= 1"));
    }
    let capacity = region.area() / (r * r * PI / 4.0);
    if (target_count as f64) > capacity {
        return Err(Error::InfeasibleScan(format!(
            "{target_count} points at spacing {r:e} m cannot fit in a {:e} m^2 region",
            region.area()
        )));
    }
    let all = poisson_disk_maximal(&region, r, rng_seed)?;
    if all.len() < target_count {
        return Err(Error::InfeasibleScan(format!(
            "maximal sampling produced {} points, {target_count} requested",
            all.len()
        )));
    }
    let c = region.center();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| dist(all[a], c).total_cmp(&dist(all[b], c)).then(a.cmp(&b)));
    let mut keep = order[..target_count].to_vec();
    keep.sort_unstable();
    let positions = keep.into_iter().map(|i| all[i]).collect();
    ScanPattern::new(positions, r, region, rng_seed)
}

/// Intersection area of two disks of `diameter` at center distance `d`,
/// divided by the disk area.
pub fn disk_overlap(d: f64, diameter: f64) -> f64 {
    let r = diameter / 2.0;
    let d = d.abs();
    if d >= diameter {
        return 0.0;
    }
    let lens = 2.0 * r * r * (d / (2.0 * r)).acos() - d / 2.0 * (4.0 * r * r - d * d).sqrt();
    (lens / (PI * r * r)).clamp(0.0, 1.0)
}

/// Mean over positions of the disk-overlap fraction with the nearest neighbor.
pub fn overlap_fraction(pattern: &ScanPattern, probe_diameter: f64) -> Result<f64> {
    if !(probe_diameter > 0.0 && probe_diameter.is_finite()) {
        return Err(Error::param("probe_diameter", "must be > 0"));
    }
    let pts = &pattern.positions;
    if pts.len() < 2 {
        return Err(Error::param(
            "pattern",
            "overlap needs at least 2 positions",
        ));
    }
    let total: f64 = pts
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let nn = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &q)| dist(p, q))
                .fold(f64::INFINITY, f64::min);
            disk_overlap(nn, probe_diameter)
        })
        .sum();
    Ok(total / pts.len() as f64)
}
