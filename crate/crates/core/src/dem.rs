//! Digital elevation maps, synthetic terrain, occlusion and state assembly.
//!
//! A DEM is a `rows x cols` grid of terrain heights stored row-major. Row 0 is
//! the row farthest ahead of the robot, row `rows - 1` the one nearest to it;
//! columns run left to right across the heading. Flat bin index
//! `b = row * cols + col`.
//!
//! Heights under a missing mask are kept as ground truth so that a simulated
//! probe can reveal them later. Anything model-facing goes through
//! [`assemble_state`], which replaces masked heights with `NaN`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flipper::FlipperConfig;

/// Grid shape and bin sizes shared by every DEM of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Horizontal bin size in meters.
    pub resolution: f64,
    /// Height quantum in meters.
    pub vertical_resolution: f64,
}

impl Default for DemGeometry {
    fn default() -> Self {
        DemGeometry {
            rows: 20,
            cols: 5,
            resolution: 0.10,
            vertical_resolution: 0.05,
        }
    }
}

impl DemGeometry {
    pub fn new(rows: usize, cols: usize) -> Self {
        DemGeometry {
            rows,
            cols,
            ..Default::default()
        }
    }

    pub fn bins(&self) -> usize {
        self.rows * self.cols
    }

    pub fn bin(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn row_col(&self, bin: usize) -> (usize, usize) {
        (bin / self.cols, bin % self.cols)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Parameter("DEM grid must have rows*cols > 0".into()));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Parameter("DEM resolution must be positive".into()));
        }
        if !(self.vertical_resolution >= 0.0 && self.vertical_resolution.is_finite()) {
            return Err(Error::Parameter(
                "vertical resolution must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Rounds a height to the nearest multiple of the vertical resolution.
    /// A zero vertical resolution disables quantization.
    pub fn quantize(&self, h: f64) -> f64 {
        if self.vertical_resolution > 0.0 {
            (h / self.vertical_resolution).round() * self.vertical_resolution
        } else {
            h
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dem {
    geometry: DemGeometry,
    heights: Vec<f64>,
    missing: Vec<bool>,
}

impl Dem {
    pub fn flat(geometry: DemGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Dem {
            geometry,
            heights: vec![0.0; geometry.bins()],
            missing: vec![false; geometry.bins()],
        })
    }

    /// Builds a fully observed DEM, quantizing every height.
    pub fn from_heights(geometry: DemGeometry, heights: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if heights.len() != geometry.bins() {
            return Err(Error::Parameter(format!(
                "expected {} heights, got {}",
                geometry.bins(),
                heights.len()
            )));
        }
        if let Some(h) = heights.iter().find(|h| !h.is_finite()) {
            return Err(Error::Parameter(format!("non-finite height {h}")));
        }
        let heights = heights.into_iter().map(|h| geometry.quantize(h)).collect();
        Ok(Dem {
            geometry,
            heights,
            missing: vec![false; geometry.bins()],
        })
    }

    pub fn geometry(&self) -> &DemGeometry {
        &self.geometry
    }

    pub fn rows(&self) -> usize {
        self.geometry.rows
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols
    }

    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    /// Ground-truth height, regardless of the mask.
    pub fn true_height(&self, bin: usize) -> f64 {
        self.heights[bin]
    }

    pub fn height_at(&self, row: usize, col: usize) -> f64 {
        self.heights[self.geometry.bin(row, col)]
    }

    pub fn true_heights(&self) -> &[f64] {
        &self.heights
    }

    /// Height as seen by a sensor: `None` for masked bins.
    pub fn observed(&self, bin: usize) -> Option<f64> {
        if self.missing[bin] {
            None
        } else {
            Some(self.heights[bin])
        }
    }

    pub fn is_missing(&self, bin: usize) -> bool {
        self.missing[bin]
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn missing_bins(&self) -> Vec<usize> {
        (0..self.bins()).filter(|&b| self.missing[b]).collect()
    }

    pub fn is_fully_observed(&self) -> bool {
        !self.missing.iter().any(|&m| m)
    }

    /// Replaces the mask; ground truth is unchanged.
    pub fn with_mask(&self, missing: Vec<bool>) -> Result<Dem> {
        if missing.len() != self.bins() {
            return Err(Error::Parameter("mask length does not match grid".into()));
        }
        Ok(Dem {
            geometry: self.geometry,
            heights: self.heights.clone(),
            missing,
        })
    }

    /// Clears the mask on `bins`, exposing the retained ground truth.
    pub fn reveal(&self, bins: &[usize]) -> Dem {
        let mut out = self.clone();
        for &b in bins {
            out.missing[b] = false;
        }
        out
    }

    pub fn reveal_all(&self) -> Dem {
        self.reveal(&self.missing_bins())
    }

    /// Writes a height into a bin and marks it observed.
    pub fn set_observed(&mut self, bin: usize, height: f64) {
        self.heights[bin] = height;
        self.missing[bin] = false;
    }

    /// Serializes the sensor view: header `rows cols resolution vres` then one
    /// line per row with `NaN` for missing bins.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let mut s = format!("{} {} {} {}\n", g.rows, g.cols, g.resolution, g.vertical_resolution);
        for r in 0..g.rows {
            let row: Vec<String> = (0..g.cols)
                .map(|c| match self.observed(g.bin(r, c)) {
                    Some(h) => format!("{h}"),
                    None => "NaN".to_string(),
                })
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    /// Parses [`Dem::to_text`] output. Masked bins come back with `NaN` as
    /// their (unknown) ground truth.
    pub fn from_text(text: &str) -> Result<Dem> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| Error::parse(1, format!("missing {what}")))
        };
        let rows: usize = next("rows")?
            .parse()
            .map_err(|_| Error::parse(1, "bad rows"))?;
        let cols: usize = next("cols")?
            .parse()
            .map_err(|_| Error::parse(1, "bad cols"))?;
        let resolution: f64 = next("resolution")?
            .parse()
            .map_err(|_| Error::parse(1, "bad resolution"))?;
        let vertical_resolution: f64 = next("vres")?
            .parse()
            .map_err(|_| Error::parse(1, "bad vres"))?;
        let geometry = DemGeometry {
            rows,
            cols,
            resolution,
            vertical_resolution,
        };
        geometry.validate()?;
        let mut heights = Vec::with_capacity(geometry.bins());
        let mut missing = Vec::with_capacity(geometry.bins());
        for b in 0..geometry.bins() {
            let tok = next("height")?;
            let v = parse_value(tok).ok_or_else(|| {
                Error::parse(2 + b / cols, format!("bad height token {tok:?}"))
            })?;
            missing.push(v.is_nan());
            heights.push(v);
        }
        Ok(Dem {
            geometry,
            heights,
            missing,
        })
    }
}

pub(crate) fn parse_value(tok: &str) -> Option<f64> {
    if tok.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        tok.parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

/// Obstacle shapes for synthetic terrain.
///
/// Distances are counted in rows from the back edge of the grid (the row
/// nearest the robot is distance 0). Obstacles span the full width.
#[derive(Clone, Debug, PartialEq)]
pub enum Terrain {
    Flat,
    Pallet {
        height: f64,
        length_bins: usize,
        near_edge: usize,
    },
    Staircase {
        steps: usize,
        step_height: f64,
        step_bins: usize,
        near_edge: usize,
    },
    Rubble {
        amp: f64,
    },
}

/// Generates a fully observed DEM. Deterministic in `(terrain, geometry, seed)`.
pub fn generate_terrain(terrain: &Terrain, geometry: DemGeometry, seed: u64) -> Result<Dem> {
    geometry.validate()?;
    let rows = geometry.rows;
    let cols = geometry.cols;
    let dist = |r: usize| rows - 1 - r;
    let heights: Vec<f64> = match *terrain {
        Terrain::Flat => vec![0.0; rows * cols],
        Terrain::Pallet {
            height,
            length_bins,
            near_edge,
        } => {
            if !(height > 0.0 && height.is_finite()) {
                return Err(Error::Parameter("pallet height must be > 0".into()));
            }
            if length_bins == 0 {
                return Err(Error::Parameter("pallet length must be >= 1 bin".into()));
            }
            (0..rows * cols)
                .map(|b| {
                    let d = dist(b / cols);
                    if d >= near_edge && d < near_edge + length_bins {
                        height
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        Terrain::Staircase {
            steps,
            step_height,
            step_bins,
            near_edge,
        } => {
            if steps == 0 {
                return Err(Error::Parameter("staircase needs at least one step".into()));
            }
            if step_bins == 0 || !step_height.is_finite() || step_height == 0.0 {
                return Err(Error::Parameter(
                    "staircase steps need nonzero height and depth".into(),
                ));
            }
            (0..rows * cols)
                .map(|b| {
                    let d = dist(b / cols);
                    if d < near_edge {
                        0.0
                    } else {
                        let k = ((d - near_edge) / step_bins + 1).min(steps);
                        k as f64 * step_height
                    }
                })
                .collect()
        }
        Terrain::Rubble { amp } => {
            if !(amp >= 0.0 && amp.is_finite()) {
                return Err(Error::Parameter("rubble amplitude must be >= 0".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..rows * cols)
                .map(|_| if amp > 0.0 { rng.random_range(0.0..amp) } else { 0.0 })
                .collect()
        }
    };
    Dem::from_heights(geometry, heights)
}

/// Masks the first `count` bins in front-to-back, left-to-right order, i.e.
/// whole rows starting with the one farthest ahead.
pub fn occlude_front(dem: &Dem, count: usize) -> Result<Dem> {
    if count > dem.bins() {
        return Err(Error::Parameter(format!(
            "cannot occlude {count} of {} bins",
            dem.bins()
        )));
    }
    let mut out = dem.clone();
    for m in out.missing.iter_mut().take(count) {
        *m = true;
    }
    Ok(out)
}

/// Proprioceptive part of the state.
#[derive(Clone, Debug, PartialEq)]
pub struct Proprio {
    pub speed_desired: f64,
    pub speed_actual: f64,
    pub roll: f64,
    pub pitch: f64,
    pub flipper_angles: [f64; 4],
    pub compliance: [f64; 2],
    pub flipper_currents: [f64; 4],
    pub current_config: FlipperConfig,
}

/// Number of proprioceptive features in a [`StateVector`].
pub const PROPRIO_DIM: usize = 15;

/// Offset of the pitch feature, used by the synthetic corpus and tests.
pub const PITCH_FEATURE: usize = 3;

impl Proprio {
    pub fn zeroed(current_config: FlipperConfig) -> Self {
        Proprio {
            speed_desired: 0.0,
            speed_actual: 0.0,
            roll: 0.0,
            pitch: 0.0,
            flipper_angles: [0.0; 4],
            compliance: [0.0; 2],
            flipper_currents: [0.0; 4],
            current_config,
        }
    }

    /// Canonical feature order: speeds (desired, actual), roll, pitch, four
    /// flipper angles (FL, FR, RL, RR), two compliance thresholds (front,
    /// rear), four flipper currents, current configuration as its zero-based
    /// index (so a zeroed I-shape proprio is the zero vector).
    pub fn features(&self) -> [f64; PROPRIO_DIM] {
        let mut f = [0.0; PROPRIO_DIM];
        f[0] = self.speed_desired;
        f[1] = self.speed_actual;
        f[2] = self.roll;
        f[3] = self.pitch;
        f[4..8].copy_from_slice(&self.flipper_angles);
        f[8..10].copy_from_slice(&self.compliance);
        f[10..14].copy_from_slice(&self.flipper_currents);
        f[14] = self.current_config.index() as f64;
        f
    }

    pub fn from_features(f: &[f64]) -> Result<Self> {
        if f.len() < PROPRIO_DIM {
            return Err(Error::Parameter("too few proprioceptive features".into()));
        }
        if f[..PROPRIO_DIM].iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("proprioceptive features must be finite".into()));
        }
        let idx = f[14];
        if idx.fract() != 0.0 || !(0.0..=4.0).contains(&idx) {
            return Err(Error::Parameter(format!("bad configuration feature {idx}")));
        }
        Ok(Proprio {
            speed_desired: f[0],
            speed_actual: f[1],
            roll: f[2],
            pitch: f[3],
            flipper_angles: [f[4], f[5], f[6], f[7]],
            compliance: [f[8], f[9]],
            flipper_currents: [f[10], f[11], f[12], f[13]],
            current_config: FlipperConfig::from_index(idx as usize),
        })
    }
}

/// Model-facing feature vector: proprio features then row-major DEM heights.
/// Missing entries hold `NaN` and are flagged in `missing`.
#[derive(Clone, Debug)]
pub struct StateVector {
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl PartialEq for StateVector {
    fn eq(&self, other: &Self) -> bool {
        self.missing == other.missing && self.key() == other.key()
    }
}

impl StateVector {
    /// Builds a state from raw values; `NaN` entries become missing.
    pub fn from_values(values: Vec<f64>) -> Self {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        StateVector { values, missing }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn get(&self, feature: usize) -> Option<f64> {
        if self.missing[feature] {
            None
        } else {
            Some(self.values[feature])
        }
    }

    pub fn is_missing(&self, feature: usize) -> bool {
        self.missing[feature]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Bit-level identity key, for exact table lookups.
    pub fn key(&self) -> Vec<u64> {
        self.values
            .iter()
            .map(|v| if v.is_nan() { f64::NAN.to_bits() } else { v.to_bits() })
            .collect()
    }

    /// Sets a feature to an observed value.
    pub fn set(&mut self, feature: usize, value: f64) {
        self.values[feature] = value;
        self.missing[feature] = value.is_nan();
    }
}

/// Concatenates proprio features with the DEM heights as a sensor sees them.
pub fn assemble_state(proprio: &Proprio, dem: &Dem) -> StateVector {
    let mut values = Vec::with_capacity(PROPRIO_DIM + dem.bins());
    values.extend_from_slice(&proprio.features());
    let mut missing = vec![false; PROPRIO_DIM];
    for b in 0..dem.bins() {
        values.push(dem.observed(b).unwrap_or(f64::NAN));
        missing.push(dem.is_missing(b));
    }
    StateVector { values, missing }
}

/// Inverse of [`assemble_state`]; masked DEM bins come back with `NaN` heights.
pub fn split_state(state: &StateVector, geometry: DemGeometry) -> Result<(Proprio, Dem)> {
    geometry.validate()?;
    if state.len() != PROPRIO_DIM + geometry.bins() {
        return Err(Error::Parameter(format!(
            "state length {} does not match grid {}x{}",
            state.len(),
            geometry.rows,
            geometry.cols
        )));
    }
    if state.missing[..PROPRIO_DIM].iter().any(|&m| m) {
        return Err(Error::Validation(
            "proprioceptive features may not be missing".into(),
        ));
    }
    let proprio = Proprio::from_features(&state.values[..PROPRIO_DIM])?;
    let dem = Dem {
        geometry,
        heights: state.values[PROPRIO_DIM..].to_vec(),
        missing: state.missing[PROPRIO_DIM..].to_vec(),
    };
    Ok((proprio, dem))
}
