//! Directional antenna gain.
//!
//! Angles follow one convention throughout the crate: azimuth in degrees
//! clockwise from north (the +y axis of the local ENU frame), and tilt /
//! elevation in degrees, positive upward from the horizontal plane.
//!
//! The default pattern is the separable parametric form used in cellular
//! planning tools:
//!
//! ```text
//! G = g_max - min( min(12 (daz/hpbw_az)^2, sla) + min(12 (del/hpbw_el)^2, sla), fbr )
//! ```
//!
//! A measured pattern sampled on a regular azimuth/elevation grid can be
//! used instead; it is evaluated with bilinear interpolation in the same
//! steered-offset coordinates. Both variants rotate a single template with
//! the steering angle.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};

const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Steering orientation of a beam boresight.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Orientation {
    azimuth_deg: f64,
    tilt_deg: f64,
}

impl Orientation {
    /// Builds an orientation, normalizing the azimuth to `[0, 360)`.
    pub fn new(azimuth_deg: f64, tilt_deg: f64) -> Result<Self> {
        if !azimuth_deg.is_finite() || !tilt_deg.is_finite() {
            return Err(TwinError::InvalidArgument(format!(
                "non-finite orientation ({azimuth_deg}, {tilt_deg})"
            )));
        }
        if !(-90.0..=90.0).contains(&tilt_deg) {
            return Err(TwinError::InvalidArgument(format!(
                "tilt {tilt_deg} outside [-90, 90]"
            )));
        }
        Ok(Orientation {
            azimuth_deg: normalize_azimuth(azimuth_deg),
            tilt_deg,
        })
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn tilt_deg(&self) -> f64 {
        self.tilt_deg
    }
}

impl TryFrom<[f64; 2]> for Orientation {
    type Error = TwinError;

    fn try_from(value: [f64; 2]) -> Result<Self> {
        Orientation::new(value[0], value[1])
    }
}

impl From<Orientation> for [f64; 2] {
    fn from(o: Orientation) -> Self {
        [o.azimuth_deg, o.tilt_deg]
    }
}

/// Maps any angle to `[0, 360)`.
pub fn normalize_azimuth(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Maps any angle to `(-180, 180]`.
pub fn wrap_180(deg: f64) -> f64 {
    let a = normalize_azimuth(deg);
    if a > 180.0 {
        a - 360.0
    } else {
        a
    }
}

/// Azimuth/elevation (degrees) of a unit direction vector in the ENU frame.
///
/// At zenith and nadir the azimuth is undefined and reported as 0.
pub fn direction_angles(direction: [f64; 3]) -> Result<(f64, f64)> {
    let [x, y, z] = direction;
    let norm = (x * x + y * y + z * z).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(TwinError::InvalidArgument(format!(
            "direction {direction:?} is not a unit vector (norm {norm})"
        )));
    }
    Ok(unit_direction_angles(direction))
}

/// Same as [`direction_angles`] without the norm check.
pub(crate) fn unit_direction_angles([x, y, z]: [f64; 3]) -> (f64, f64) {
    let horizontal = x.hypot(y);
    let azimuth = if horizontal == 0.0 {
        0.0
    } else {
        normalize_azimuth(x.atan2(y).to_degrees())
    };
    let elevation = z.clamp(-1.0, 1.0).asin().to_degrees();
    (azimuth, elevation)
}

/// Offsets of an observation direction from the steered boresight, as
/// `(daz, del)` with `daz` wrapped to `(-180, 180]`.
pub fn steered_offsets(orientation: Orientation, direction: [f64; 3]) -> Result<(f64, f64)> {
    let (az, el) = direction_angles(direction)?;
    Ok(offsets_from_angles(orientation, az, el))
}

#[inline]
pub(crate) fn offsets_from_angles(orientation: Orientation, az: f64, el: f64) -> (f64, f64) {
    (
        wrap_180(az - orientation.azimuth_deg),
        el - orientation.tilt_deg,
    )
}

/// Parametric single-element pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    #[serde(default = "defaults::g_max_dbi")]
    pub g_max_dbi: f64,
    #[serde(default = "defaults::hpbw_az_deg")]
    pub hpbw_az_deg: f64,
    #[serde(default = "defaults::hpbw_el_deg")]
    pub hpbw_el_deg: f64,
    #[serde(default = "defaults::sla_db")]
    pub sla_db: f64,
    #[serde(default = "defaults::fbr_db")]
    pub fbr_db: f64,
}

mod defaults {
    pub fn g_max_dbi() -> f64 {
        17.0
    }
    pub fn hpbw_az_deg() -> f64 {
        65.0
    }
    pub fn hpbw_el_deg() -> f64 {
        35.0
    }
    pub fn sla_db() -> f64 {
        30.0
    }
    pub fn fbr_db() -> f64 {
        30.0
    }
}

impl Default for AntennaPattern {
    fn default() -> Self {
        AntennaPattern {
            g_max_dbi: defaults::g_max_dbi(),
            hpbw_az_deg: defaults::hpbw_az_deg(),
            hpbw_el_deg: defaults::hpbw_el_deg(),
            sla_db: defaults::sla_db(),
            fbr_db: defaults::fbr_db(),
        }
    }
}

impl AntennaPattern {
    pub fn validate(&self, field: &str) -> Result<()> {
        let in_range = |v: f64| v > 0.0 && v <= 180.0;
        if !self.g_max_dbi.is_finite() {
            return Err(TwinError::validation(
                format!("{field}.g_max_dbi"),
                "must be finite",
            ));
        }
        if !in_range(self.hpbw_az_deg) {
            return Err(TwinError::validation(
                format!("{field}.hpbw_az_deg"),
                format!("{} not in (0, 180]", self.hpbw_az_deg),
            ));
        }
        if !in_range(self.hpbw_el_deg) {
            return Err(TwinError::validation(
                format!("{field}.hpbw_el_deg"),
                format!("{} not in (0, 180]", self.hpbw_el_deg),
            ));
        }
        if !(self.sla_db > 0.0 && self.sla_db.is_finite()) {
            return Err(TwinError::validation(
                format!("{field}.sla_db"),
                "must be positive",
            ));
        }
        if !(self.fbr_db >= self.sla_db && self.fbr_db.is_finite()) {
            return Err(TwinError::validation(
                format!("{field}.fbr_db"),
                format!("{} must be >= sla_db {}", self.fbr_db, self.sla_db),
            ));
        }
        Ok(())
    }

    /// Attenuation relative to boresight for the given steered offsets.
    #[inline]
    pub fn attenuation_db(&self, daz_deg: f64, del_deg: f64) -> f64 {
        let h = 12.0 * (daz_deg / self.hpbw_az_deg).powi(2);
        let v = 12.0 * (del_deg / self.hpbw_el_deg).powi(2);
        (h.min(self.sla_db) + v.min(self.sla_db)).min(self.fbr_db)
    }

    #[inline]
    pub fn gain_at_offsets(&self, daz_deg: f64, del_deg: f64) -> f64 {
        self.g_max_dbi - self.attenuation_db(daz_deg, del_deg)
    }
}

/// Gain of a parametric pattern steered to `orientation`, observed along the
/// unit vector `direction`.
pub fn gain(pattern: &AntennaPattern, orientation: Orientation, direction: [f64; 3]) -> Result<f64> {
    let (daz, del) = steered_offsets(orientation, direction)?;
    Ok(pattern.gain_at_offsets(daz, del))
}

pub const MAX_TABLE_ANGLE_DEG: f64 = 360.0;
pub const MAX_TABLE_GAIN_DB: f64 = 1000.0;

/// Measured gain sampled on a regular grid of steered offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct TablePattern {
    az_deg: Vec<f64>,
    el_deg: Vec<f64>,
    /// Row-major over elevation: `gain[ie * az.len() + ia]`.
    gain_dbi: Vec<f64>,
}

impl TablePattern {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TwinError::io(path, e))?;
        Self::parse_csv(text.as_bytes())
    }

    /// Parses CSV with header `az_deg,el_deg,gain_dbi`. The samples must form
    /// a complete regular grid (every azimuth paired with every elevation).
    pub fn parse_csv(data: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            az_deg: f64,
            el_deg: f64,
            gain_dbi: f64,
        }

        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(data);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["az_deg", "el_deg", "gain_dbi"] {
            return Err(TwinError::Csv(format!(
                "expected header az_deg,el_deg,gain_dbi, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for row in reader.deserialize::<Row>() {
            let row = row?;
            // bounds keep interpolation arithmetic finite
            let in_range = row.az_deg.abs() <= MAX_TABLE_ANGLE_DEG
                && row.el_deg.abs() <= MAX_TABLE_ANGLE_DEG
                && row.gain_dbi.abs() <= MAX_TABLE_GAIN_DB;
            if !in_range {
                return Err(TwinError::Csv(format!(
                    "pattern sample ({}, {}, {}) outside |angle| <= {MAX_TABLE_ANGLE_DEG} deg, |gain| <= {MAX_TABLE_GAIN_DB} dB",
                    row.az_deg, row.el_deg, row.gain_dbi
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(TwinError::EmptySet("pattern table"));
        }

        let axis = |f: fn(&Row) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let az = axis(|r| r.az_deg);
        let el = axis(|r| r.el_deg);
        if az.len() * el.len() != rows.len() {
            return Err(TwinError::Csv(format!(
                "pattern table is not a regular grid: {} rows for {} azimuths x {} elevations",
                rows.len(),
                az.len(),
                el.len()
            )));
        }
        let mut gain = vec![f64::NAN; rows.len()];
        for r in &rows {
            let ia = az.binary_search_by(|v| v.total_cmp(&r.az_deg)).unwrap();
            let ie = el.binary_search_by(|v| v.total_cmp(&r.el_deg)).unwrap();
            let slot = &mut gain[ie * az.len() + ia];
            if !slot.is_nan() {
                return Err(TwinError::Csv(format!(
                    "duplicate pattern sample at az {} el {}",
                    r.az_deg, r.el_deg
                )));
            }
            *slot = r.gain_dbi;
        }
        Ok(TablePattern {
            az_deg: az,
            el_deg: el,
            gain_dbi: gain,
        })
    }

    pub fn max_gain_dbi(&self) -> f64 {
        self.gain_dbi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation, clamped to the sampled range on both axes.
    pub fn gain_at_offsets(&self, daz_deg: f64, del_deg: f64) -> f64 {
        let (ia, ta) = bracket(&self.az_deg, daz_deg);
        let (ie, te) = bracket(&self.el_deg, del_deg);
        let n = self.az_deg.len();
        let at = |ie: usize, ia: usize| self.gain_dbi[ie * n + ia];
        let ia1 = (ia + 1).min(n - 1);
        let ie1 = (ie + 1).min(self.el_deg.len() - 1);
        let g0 = at(ie, ia) * (1.0 - ta) + at(ie, ia1) * ta;
        let g1 = at(ie1, ia) * (1.0 - ta) + at(ie1, ia1) * ta;
        g0 * (1.0 - te) + g1 * te
    }
}

/// Lower grid index and fractional position of `x` within a sorted axis.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    if axis.len() == 1 || x <= axis[0] {
        return (0, 0.0);
    }
    let last = axis.len() - 1;
    if x >= axis[last] {
        return (last, 0.0);
    }
    let hi = axis.partition_point(|&v| v <= x);
    let lo = hi - 1;
    (lo, (x - axis[lo]) / (axis[hi] - axis[lo]))
}

/// Pattern variants accepted in scene files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Pattern {
    Parametric(AntennaPattern),
    Table {
        /// Path of the CSV table, relative to the scene file.
        path: String,
        #[serde(skip)]
        table: Option<std::sync::Arc<TablePattern>>,
    },
}

impl Default for Pattern {
    fn default() -> Self {
        Pattern::Parametric(AntennaPattern::default())
    }
}

impl Pattern {
    #[inline]
    pub fn gain_at_offsets(&self, daz_deg: f64, del_deg: f64) -> f64 {
        match self {
            Pattern::Parametric(p) => p.gain_at_offsets(daz_deg, del_deg),
            Pattern::Table { table, .. } => table
                .as_ref()
                .expect("table pattern used before loading")
                .gain_at_offsets(daz_deg, del_deg),
        }
    }

    pub fn gain(&self, orientation: Orientation, direction: [f64; 3]) -> Result<f64> {
        let (daz, del) = steered_offsets(orientation, direction)?;
        Ok(self.gain_at_offsets(daz, del))
    }

    pub fn max_gain_dbi(&self) -> f64 {
        match self {
            Pattern::Parametric(p) => p.g_max_dbi,
            Pattern::Table { table, .. } => table
                .as_ref()
                .map_or(f64::NAN, |t| t.max_gain_dbi()),
        }
    }

    pub(crate) fn is_loaded(&self) -> bool {
        !matches!(self, Pattern::Table { table: None, .. })
    }
}
