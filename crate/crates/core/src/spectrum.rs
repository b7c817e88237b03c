//! Spectrum twin: line-of-sight received power from free-space path loss and
//! the steered antenna pattern, plus a single calibrated global offset.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antenna::{offsets_from_angles, unit_direction_angles, Orientation, Pattern};
use crate::error::{Result, TwinError};
use crate::optimizer::BeamAssignment;
use crate::scene::{Cell, RadioConstants, SceneConfig, Site, SubBeam, VoxelGrid};
use crate::validation::MeasurementSet;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Free-space path loss `20 log10(4 pi d f / c)` in dB.
pub fn fspl_db(distance_m: f64, frequency_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0 && distance_m.is_finite()) {
        return Err(TwinError::InvalidArgument(format!(
            "distance {distance_m} m must be positive"
        )));
    }
    if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
        return Err(TwinError::InvalidArgument(format!(
            "frequency {frequency_hz} Hz must be positive"
        )));
    }
    Ok(fspl_unchecked(distance_m, frequency_hz))
}

#[inline]
fn fspl_unchecked(distance_m: f64, frequency_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * distance_m * frequency_hz / SPEED_OF_LIGHT_M_S).log10()
}

/// Transmitter-to-point geometry shared by every sub-beam of a site.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LinkGeometry {
    pub fspl_db: f64,
    pub az_deg: f64,
    pub el_deg: f64,
}

pub(crate) fn link_geometry(
    site: &Site,
    point: [f64; 3],
    frequency_hz: f64,
) -> Result<LinkGeometry> {
    let d = [
        point[0] - site.position_m[0],
        point[1] - site.position_m[1],
        point[2] - site.position_m[2],
    ];
    let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if dist == 0.0 {
        return Err(TwinError::Singularity {
            site: site.id.clone(),
            point,
        });
    }
    let (az_deg, el_deg) = unit_direction_angles([d[0] / dist, d[1] / dist, d[2] / dist]);
    Ok(LinkGeometry {
        fspl_db: fspl_unchecked(dist, frequency_hz),
        az_deg,
        el_deg,
    })
}

/// Geometry of every grid voxel as seen from every site, indexed
/// `[site][voxel]`.
pub(crate) fn grid_geometry(
    scene: &SceneConfig,
    grid: &VoxelGrid,
) -> Result<Vec<Vec<LinkGeometry>>> {
    scene
        .sites
        .iter()
        .map(|site| {
            grid.centers()
                .par_iter()
                .map(|&c| link_geometry(site, c, scene.radio.frequency_hz))
                .collect()
        })
        .collect()
}

#[inline]
pub(crate) fn rsrp_from_geometry(
    tx_power_dbm: f64,
    pattern: &Pattern,
    angle: Orientation,
    geom: &LinkGeometry,
    offset_db: f64,
) -> f64 {
    let (daz, del) = offsets_from_angles(angle, geom.az_deg, geom.el_deg);
    tx_power_dbm + pattern.gain_at_offsets(daz, del) - geom.fspl_db + offset_db
}

/// Received power of one sub-beam steered to `angle` at `point`.
pub fn beam_rsrp(
    site: &Site,
    cell: &Cell,
    sub_beam: &SubBeam,
    angle: Orientation,
    point: [f64; 3],
    radio: &RadioConstants,
    offset_db: f64,
) -> Result<f64> {
    let geom = link_geometry(site, point, radio.frequency_hz)?;
    Ok(rsrp_from_geometry(
        cell.tx_power_dbm,
        &sub_beam.pattern,
        angle,
        &geom,
        offset_db,
    ))
}

/// Cell-level value: maximum over sub-beams in sub-beam order.
#[inline]
pub(crate) fn cell_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    pub cell_id: String,
    /// Cell-level RSRP per voxel (dBm).
    pub rsrp_dbm: Vec<f64>,
    /// Per-sub-beam RSRP, `[beam][voxel]`, when retained.
    pub sub_beam_rsrp_dbm: Option<Vec<Vec<f64>>>,
}

/// Per-voxel RSRP of every cell under one beam assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct RadioField {
    voxel_count: usize,
    /// Sorted by cell id.
    cells: Vec<CellField>,
    assignment: BeamAssignment,
    offset_db: f64,
}

impl RadioField {
    pub fn voxel_count(&self) -> usize {
        self.voxel_count
    }

    pub fn cells(&self) -> &[CellField] {
        &self.cells
    }

    pub fn cell(&self, cell_id: &str) -> Option<&CellField> {
        self.cells.iter().find(|c| c.cell_id == cell_id)
    }

    pub fn assignment(&self) -> &BeamAssignment {
        &self.assignment
    }

    pub fn offset_db(&self) -> f64 {
        self.offset_db
    }

    pub fn has_sub_beams(&self) -> bool {
        self.cells.iter().all(|c| c.sub_beam_rsrp_dbm.is_some())
    }

    /// Drops the per-sub-beam arrays to save memory.
    pub fn without_sub_beams(mut self) -> Self {
        for c in &mut self.cells {
            c.sub_beam_rsrp_dbm = None;
        }
        self
    }

    /// Builds a field directly from per-sub-beam arrays, computing the
    /// cell-level maxima. Intended for tests and external models.
    pub fn from_sub_beams(
        cells: Vec<(String, Vec<Vec<f64>>)>,
        assignment: BeamAssignment,
        offset_db: f64,
    ) -> Result<Self> {
        let voxel_count = cells
            .first()
            .and_then(|(_, beams)| beams.first())
            .map_or(0, Vec::len);
        let mut out = Vec::with_capacity(cells.len());
        for (cell_id, beams) in cells {
            if beams.is_empty() || beams.iter().any(|b| b.len() != voxel_count) {
                return Err(TwinError::DimensionMismatch(format!(
                    "cell {cell_id} sub-beam arrays do not match {voxel_count} voxels"
                )));
            }
            let rsrp_dbm = (0..voxel_count)
                .map(|v| cell_max(beams.iter().map(|b| b[v])))
                .collect();
            out.push(CellField {
                cell_id,
                rsrp_dbm,
                sub_beam_rsrp_dbm: Some(beams),
            });
        }
        out.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
        Ok(RadioField {
            voxel_count,
            cells: out,
            assignment,
            offset_db,
        })
    }

    /// Writes `x_m,y_m,z_m,cell_id,rsrp_dbm`, voxel-major with cells in
    /// lexicographic order.
    pub fn write_csv<W: Write>(&self, grid: &VoxelGrid, out: W) -> Result<()> {
        if grid.count() != self.voxel_count {
            return Err(TwinError::DimensionMismatch(format!(
                "field has {} voxels, grid has {}",
                self.voxel_count,
                grid.count()
            )));
        }
        let mut w = std::io::BufWriter::new(out);
        let io = |e| TwinError::io("field csv", e);
        writeln!(w, "x_m,y_m,z_m,cell_id,rsrp_dbm").map_err(io)?;
        for (v, c) in grid.centers().iter().enumerate() {
            for cell in &self.cells {
                writeln!(
                    w,
                    "{:.4},{:.4},{:.4},{},{:.4}",
                    c[0], c[1], c[2], cell.cell_id, cell.rsrp_dbm[v]
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Checks that `assignment` covers every sub-beam of `scene` with an angle
/// inside the sub-beam's bounds.
pub(crate) fn check_assignment(scene: &SceneConfig, assignment: &BeamAssignment) -> Result<()> {
    for r in scene.beams() {
        let cell = scene.cell(r);
        let angle = assignment
            .get(&cell.id, r.beam)
            .ok_or_else(|| TwinError::IncompleteAssignment {
                cell: cell.id.clone(),
                beam: r.beam,
            })?;
        if !scene.sub_beam(r).bounds.contains(angle) {
            return Err(TwinError::OutOfBounds {
                cell: cell.id.clone(),
                beam: r.beam,
                azimuth_deg: angle.azimuth_deg(),
                tilt_deg: angle.tilt_deg(),
            });
        }
    }
    Ok(())
}

/// Evaluates every (voxel, sub-beam) pair and reduces each cell to its
/// per-voxel maximum.
pub fn build_field(
    scene: &SceneConfig,
    grid: &VoxelGrid,
    assignment: &BeamAssignment,
    offset_db: f64,
) -> Result<RadioField> {
    check_assignment(scene, assignment)?;
    let geometry = grid_geometry(scene, grid)?;
    Ok(build_field_with_geometry(scene, &geometry, assignment, offset_db))
}

pub(crate) fn build_field_with_geometry(
    scene: &SceneConfig,
    geometry: &[Vec<LinkGeometry>],
    assignment: &BeamAssignment,
    offset_db: f64,
) -> RadioField {
    let voxel_count = geometry.first().map_or(0, Vec::len);
    let mut cells = Vec::new();
    for (si, site) in scene.sites.iter().enumerate() {
        for cell in &site.cells {
            let beams: Vec<Vec<f64>> = cell
                .sub_beams
                .iter()
                .enumerate()
                .map(|(bi, beam)| {
                    let angle = assignment.get(&cell.id, bi).expect("assignment checked");
                    geometry[si]
                        .par_iter()
                        .map(|g| {
                            rsrp_from_geometry(cell.tx_power_dbm, &beam.pattern, angle, g, offset_db)
                        })
                        .collect()
                })
                .collect();
            let rsrp_dbm = (0..voxel_count)
                .into_par_iter()
                .map(|v| cell_max(beams.iter().map(|b| b[v])))
                .collect();
            cells.push(CellField {
                cell_id: cell.id.clone(),
                rsrp_dbm,
                sub_beam_rsrp_dbm: Some(beams),
            });
        }
    }
    cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
    RadioField {
        voxel_count,
        cells,
        assignment: assignment.clone(),
        offset_db,
    }
}

/// A calibrated twin: scene, beam assignment and global offset.
#[derive(Clone, Copy, Debug)]
pub struct TwinModel<'a> {
    pub scene: &'a SceneConfig,
    pub assignment: &'a BeamAssignment,
    pub offset_db: f64,
}

impl<'a> TwinModel<'a> {
    pub fn new(scene: &'a SceneConfig, assignment: &'a BeamAssignment, offset_db: f64) -> Self {
        TwinModel {
            scene,
            assignment,
            offset_db,
        }
    }

    pub fn with_offset(self, offset_db: f64) -> Self {
        TwinModel { offset_db, ..self }
    }

    /// Cell-level RSRP at arbitrary points.
    pub fn predict<'p, I>(&self, points: I) -> Result<Vec<f64>>
    where
        I: IntoParallelIterator<Item = ([f64; 3], &'p str)>,
    {
        predict_at(self.scene, self.assignment, self.offset_db, points)
    }

    pub fn predict_measurements(&self, set: &MeasurementSet) -> Result<Vec<f64>> {
        self.predict(
            set.samples()
                .par_iter()
                .map(|s| (s.position_m, s.cell_id.as_str())),
        )
    }
}

/// Cell-level RSRP (max over the cell's sub-beams) at off-grid points.
pub fn predict_at<'p, I>(
    scene: &SceneConfig,
    assignment: &BeamAssignment,
    offset_db: f64,
    points: I,
) -> Result<Vec<f64>>
where
    I: IntoParallelIterator<Item = ([f64; 3], &'p str)>,
{
    check_assignment(scene, assignment)?;
    points
        .into_par_iter()
        .map(|(p, cell_id)| {
            let (si, ci) = scene
                .find_cell(cell_id)
                .ok_or_else(|| TwinError::UnknownCell(cell_id.to_string()))?;
            let site = &scene.sites[si];
            let cell = &site.cells[ci];
            let geom = link_geometry(site, p, scene.radio.frequency_hz)?;
            Ok(cell_max(cell.sub_beams.iter().enumerate().map(|(bi, beam)| {
                let angle = assignment.get(&cell.id, bi).expect("assignment checked");
                rsrp_from_geometry(cell.tx_power_dbm, &beam.pattern, angle, &geom, offset_db)
            })))
        })
        .collect()
}

/// Least-squares single additive offset between measurements and the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOffset {
    pub offset_db: f64,
    pub residual_rmse_db: f64,
    pub n_samples: usize,
}

/// Fits `measured ~ predicted + offset`. Predictions are matched to the
/// samples of `measured` by position in the list.
pub fn calibrate_offset(predicted: &[f64], measured: &MeasurementSet) -> Result<CalibrationOffset> {
    let values: Vec<f64> = measured.samples().iter().map(|s| s.rsrp_dbm).collect();
    calibrate_values(predicted, &values)
}

pub fn calibrate_values(predicted: &[f64], measured: &[f64]) -> Result<CalibrationOffset> {
    if predicted.len() != measured.len() {
        return Err(TwinError::DimensionMismatch(format!(
            "{} predictions for {} measurements",
            predicted.len(),
            measured.len()
        )));
    }
    if measured.is_empty() {
        return Err(TwinError::EmptySet("calibration"));
    }
    let n = measured.len() as f64;
    let offset_db = measured
        .iter()
        .zip(predicted)
        .map(|(m, p)| m - p)
        .sum::<f64>()
        / n;
    let residual_rmse_db = (measured
        .iter()
        .zip(predicted)
        .map(|(m, p)| (m - p - offset_db).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CalibrationOffset {
        offset_db,
        residual_rmse_db,
        n_samples: measured.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// RMSE of the current model (with its current offset).
    pub rmse_db: f64,
    pub threshold_db: f64,
    /// True when `rmse_db > threshold_db`.
    pub drift_detected: bool,
    /// Offset refit from scratch on the new measurements.
    pub refit: CalibrationOffset,
}

/// Compares the current model against fresh measurements and refits the
/// global offset.
pub fn drift_check(
    model: &TwinModel<'_>,
    new_measurements: &MeasurementSet,
    threshold_db: f64,
) -> Result<DriftReport> {
    if new_measurements.is_empty() {
        return Err(TwinError::EmptySet("drift check"));
    }
    let bare = model.with_offset(0.0).predict_measurements(new_measurements)?;
    let refit = calibrate_offset(&bare, new_measurements)?;
    let n = bare.len() as f64;
    let rmse_db = (new_measurements
        .samples()
        .iter()
        .zip(&bare)
        .map(|(s, p)| (s.rsrp_dbm - (p + model.offset_db)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DriftReport {
        rmse_db,
        threshold_db,
        drift_detected: rmse_db > threshold_db,
        refit,
    })
}
