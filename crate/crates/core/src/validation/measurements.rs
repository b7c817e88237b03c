use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{schema_error, Result, TwinError};
use crate::scene::CylinderSpec;

const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Slack of the region check. Positions are written with four decimals, so
/// a point on the boundary may round up to 0.05 mm outside it.
pub const REGION_TOLERANCE_M: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Position along the trajectory; strictly increasing within a set.
    pub seq: u64,
    pub position_m: [f64; 3],
    pub cell_id: String,
    pub rsrp_dbm: f64,
}

/// Ordered RSRP samples along a measurement trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    samples: Vec<Sample>,
    source: String,
}

#[derive(Deserialize)]
struct CsvRow {
    seq: u64,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    cell_id: String,
    rsrp_dbm: f64,
}

impl MeasurementSet {
    pub fn new(samples: Vec<Sample>, source: impl Into<String>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !s.rsrp_dbm.is_finite() {
                return Err(TwinError::validation(
                    format!("samples[{i}].rsrp_dbm"),
                    "must be finite",
                ));
            }
            if !s.position_m.iter().all(|v| v.is_finite()) {
                return Err(TwinError::validation(
                    format!("samples[{i}].position_m"),
                    "must be finite",
                ));
            }
            if s.cell_id.is_empty() {
                return Err(TwinError::validation(
                    format!("samples[{i}].cell_id"),
                    "must not be empty",
                ));
            }
            if i > 0 && s.seq <= samples[i - 1].seq {
                return Err(TwinError::validation(
                    format!("samples[{i}].seq"),
                    format!(
                        "sequence index {} does not increase after {}",
                        s.seq,
                        samples[i - 1].seq
                    ),
                ));
            }
        }
        Ok(MeasurementSet {
            samples,
            source: source.into(),
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.rsrp_dbm).collect()
    }

    /// Parses the canonical `seq,x_m,y_m,z_m,cell_id,rsrp_dbm` CSV.
    pub fn from_csv_reader<R: Read>(reader: R, source: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let expected = ["seq", "x_m", "y_m", "z_m", "cell_id", "rsrp_dbm"];
        if header.iter().ne(expected.iter().copied()) {
            return Err(TwinError::validation(
                "header",
                format!("expected {}", expected.join(",")),
            ));
        }
        let mut samples = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            let r = row?;
            samples.push(Sample {
                seq: r.seq,
                position_m: [r.x_m, r.y_m, r.z_m],
                cell_id: r.cell_id,
                rsrp_dbm: r.rsrp_dbm,
            });
        }
        Self::new(samples, source)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| TwinError::io(path, e))?;
        Self::from_csv_reader(file, path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seq", "x_m", "y_m", "z_m", "cell_id", "rsrp_dbm"])?;
        for s in &self.samples {
            w.write_record([
                s.seq.to_string(),
                format!("{:.4}", s.position_m[0]),
                format!("{:.4}", s.position_m[1]),
                format!("{:.4}", s.position_m[2]),
                s.cell_id.clone(),
                format!("{:.4}", s.rsrp_dbm),
            ])?;
        }
        w.flush().map_err(|e| TwinError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Checks that every sample lies inside the airspace cylinder, up to
    /// [`REGION_TOLERANCE_M`].
    pub fn check_region(&self, spec: &CylinderSpec) -> Result<()> {
        let tol = REGION_TOLERANCE_M;
        let r = spec.radius_m + tol;
        for (i, s) in self.samples.iter().enumerate() {
            let [x, y, z] = s.position_m;
            let dx = x - spec.center_m[0];
            let dy = y - spec.center_m[1];
            if dx * dx + dy * dy > r * r || z < spec.z_min_m - tol || z > spec.z_max_m + tol {
                return Err(TwinError::validation(
                    format!("samples[{i}].position_m"),
                    format!("({x}, {y}, {z}) lies outside the airspace"),
                ));
            }
        }
        Ok(())
    }

    /// Samples whose index lies inside / outside `range`, preserving order.
    pub fn split(&self, range: std::ops::Range<usize>) -> (Vec<Sample>, Vec<Sample>) {
        let mut inside = Vec::with_capacity(range.len());
        let mut outside = Vec::with_capacity(self.len().saturating_sub(range.len()));
        for (i, s) in self.samples.iter().enumerate() {
            if range.contains(&i) {
                inside.push(s.clone());
            } else {
                outside.push(s.clone());
            }
        }
        (inside, outside)
    }
}

/// How position columns of a foreign CSV are interpreted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PositionFrame {
    /// Columns already hold local east/north/up meters.
    Enu { x: String, y: String, z: String },
    /// Latitude/longitude in degrees and altitude in meters, projected onto
    /// a local tangent plane at `origin` with an equirectangular
    /// approximation.
    Geodetic {
        lat: String,
        lon: String,
        alt: String,
        /// `[lat_deg, lon_deg, alt_m]` of the local frame origin.
        origin: [f64; 3],
    },
}

/// Describes how to read a dataset whose columns differ from the canonical
/// measurement schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementMapping {
    /// Column holding the trajectory order; row order is used when absent.
    #[serde(default)]
    pub seq: Option<String>,
    pub position: PositionFrame,
    pub cell_id: String,
    pub rsrp_dbm: String,
    /// Renames dataset cell identifiers to scene cell ids.
    #[serde(default)]
    pub cell_aliases: BTreeMap<String, String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl MeasurementMapping {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let m: MeasurementMapping = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        if !m.delimiter.is_ascii() {
            return Err(TwinError::validation("delimiter", "must be an ASCII character"));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TwinError::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Reads a foreign CSV into a measurement set. Rows with an empty RSRP
    /// value are skipped.
    pub fn ingest<R: Read>(&self, reader: R, source: impl Into<String>) -> Result<MeasurementSet> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(self.delimiter as u8)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            header.iter().position(|h| h == name).ok_or_else(|| {
                TwinError::validation("mapping", format!("column {name:?} not found in header"))
            })
        };
        let seq_col = self.seq.as_deref().map(col).transpose()?;
        let (a, b, c) = match &self.position {
            PositionFrame::Enu { x, y, z } => (col(x)?, col(y)?, col(z)?),
            PositionFrame::Geodetic { lat, lon, alt, .. } => (col(lat)?, col(lon)?, col(alt)?),
        };
        let cell_col = col(&self.cell_id)?;
        let rsrp_col = col(&self.rsrp_dbm)?;

        let mut samples = Vec::new();
        for (row_no, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row_no + 2;
            let text = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                text(i).parse::<f64>().map_err(|_| {
                    TwinError::validation(
                        format!("line {line}, column {}", &header[i]),
                        format!("{:?} is not a number", text(i)),
                    )
                })
            };
            if text(rsrp_col).is_empty() {
                continue;
            }
            let seq = match seq_col {
                Some(i) => text(i).parse::<u64>().map_err(|_| {
                    TwinError::validation(
                        format!("line {line}, column {}", &header[i]),
                        "sequence index must be a non-negative integer",
                    )
                })?,
                None => row_no as u64,
            };
            let (p, q, r) = (num(a)?, num(b)?, num(c)?);
            let position_m = match &self.position {
                PositionFrame::Enu { .. } => [p, q, r],
                PositionFrame::Geodetic { origin, .. } => geodetic_to_enu([p, q, r], *origin),
            };
            let raw_cell = text(cell_col);
            let cell_id = self
                .cell_aliases
                .get(raw_cell)
                .cloned()
                .unwrap_or_else(|| raw_cell.to_string());
            samples.push(Sample {
                seq,
                position_m,
                cell_id,
                rsrp_dbm: num(rsrp_col)?,
            });
        }
        MeasurementSet::new(samples, source)
    }
}

/// Local east/north/up meters of `[lat_deg, lon_deg, alt_m]` relative to
/// `origin`, using an equirectangular tangent-plane approximation.
pub fn geodetic_to_enu(point: [f64; 3], origin: [f64; 3]) -> [f64; 3] {
    let lat0 = origin[0].to_radians();
    let east = (point[1] - origin[1]).to_radians() * EARTH_RADIUS_M * lat0.cos();
    let north = (point[0] - origin[0]).to_radians() * EARTH_RADIUS_M;
    [east, north, point[2] - origin[2]]
}
