//! Interference twin: serving cell, interference power and SINR per voxel.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};
use crate::scene::{RadioConstants, VoxelGrid};
use crate::spectrum::RadioField;
use crate::units::dbm_to_mw;

pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub thermal_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            thermal_dbm_per_hz: THERMAL_NOISE_DBM_PER_HZ,
            bandwidth_hz: 100e6,
            noise_figure_db: 7.0,
        }
    }
}

impl From<&RadioConstants> for NoiseModel {
    fn from(r: &RadioConstants) -> Self {
        NoiseModel {
            thermal_dbm_per_hz: THERMAL_NOISE_DBM_PER_HZ,
            bandwidth_hz: r.bandwidth_hz,
            noise_figure_db: r.noise_figure_db,
        }
    }
}

impl NoiseModel {
    pub fn new(bandwidth_hz: f64, noise_figure_db: f64) -> Result<Self> {
        let m = NoiseModel {
            thermal_dbm_per_hz: THERMAL_NOISE_DBM_PER_HZ,
            bandwidth_hz,
            noise_figure_db,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(TwinError::InvalidArgument(format!(
                "bandwidth {} Hz must be positive",
                self.bandwidth_hz
            )));
        }
        if !(self.noise_figure_db >= 0.0 && self.noise_figure_db.is_finite()) {
            return Err(TwinError::InvalidArgument(format!(
                "noise figure {} dB must be non-negative",
                self.noise_figure_db
            )));
        }
        Ok(())
    }
}

pub fn noise_floor_dbm(model: &NoiseModel) -> f64 {
    model.thermal_dbm_per_hz + 10.0 * model.bandwidth_hz.log10() + model.noise_figure_db
}

/// Per-voxel serving/SINR evaluation shared by field construction and the
/// optimizer's incremental scorer, so both produce identical bits.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SinrKernel {
    activity_factor: f64,
    noise_dbm: f64,
    noise_mw: f64,
}

const DB_PER_NEPER_LOG: f64 = 10.0 / std::f64::consts::LN_10;

impl SinrKernel {
    pub fn new(model: &NoiseModel, activity_factor: f64) -> Self {
        let noise_dbm = noise_floor_dbm(model);
        SinrKernel {
            activity_factor,
            noise_dbm,
            noise_mw: dbm_to_mw(noise_dbm),
        }
    }

    /// Serving cell index, serving RSRP and SINR for one voxel.
    ///
    /// `cell_max[c]` is the cell-level RSRP and `cell_mw[c]` the linear sum
    /// of the cell's sub-beam powers. Cells must be in lexicographic id
    /// order so the first maximum wins ties.
    #[inline]
    pub fn evaluate(&self, cell_max: &[f64], cell_mw: &[f64]) -> (usize, f64, f64) {
        let mut serving = 0;
        for c in 1..cell_max.len() {
            if cell_max[c] > cell_max[serving] {
                serving = c;
            }
        }
        let mut interference = 0.0;
        for (c, &mw) in cell_mw.iter().enumerate() {
            if c != serving {
                interference += mw;
            }
        }
        let interference = self.activity_factor * interference;
        // S - 10 log10(I + N), written so that I = 0 gives S - N exactly
        let sinr = cell_max[serving]
            - self.noise_dbm
            - DB_PER_NEPER_LOG * (interference / self.noise_mw).ln_1p();
        (serving, cell_max[serving], sinr)
    }
}

/// Linear power sum over a cell's sub-beams, in sub-beam order.
#[inline]
pub(crate) fn cell_power_mw(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |acc, mw| acc + mw)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SinrField {
    /// Cell ids in lexicographic order; `serving_cell` indexes into this.
    cell_ids: Vec<String>,
    serving_cell: Vec<u32>,
    serving_rsrp_dbm: Vec<f64>,
    sinr_db: Vec<f64>,
    activity_factor: f64,
    noise_floor_dbm: f64,
}

impl SinrField {
    pub fn voxel_count(&self) -> usize {
        self.sinr_db.len()
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn serving_cell_id(&self, voxel: usize) -> &str {
        &self.cell_ids[self.serving_cell[voxel] as usize]
    }

    pub fn serving_cell_index(&self) -> &[u32] {
        &self.serving_cell
    }

    pub fn serving_rsrp_dbm(&self) -> &[f64] {
        &self.serving_rsrp_dbm
    }

    pub fn sinr_db(&self) -> &[f64] {
        &self.sinr_db
    }

    pub fn activity_factor(&self) -> f64 {
        self.activity_factor
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        self.noise_floor_dbm
    }

    /// Writes `x_m,y_m,z_m,serving_cell,rsrp_dbm,sinr_db` in voxel order.
    pub fn write_csv<W: Write>(&self, grid: &VoxelGrid, out: W) -> Result<()> {
        if grid.count() != self.voxel_count() {
            return Err(TwinError::DimensionMismatch(format!(
                "SINR field has {} voxels, grid has {}",
                self.voxel_count(),
                grid.count()
            )));
        }
        let mut w = std::io::BufWriter::new(out);
        let io = |e| TwinError::io("sinr csv", e);
        writeln!(w, "x_m,y_m,z_m,serving_cell,rsrp_dbm,sinr_db").map_err(io)?;
        for (v, c) in grid.centers().iter().enumerate() {
            writeln!(
                w,
                "{:.4},{:.4},{:.4},{},{:.4},{:.4}",
                c[0],
                c[1],
                c[2],
                self.serving_cell_id(v),
                self.serving_rsrp_dbm[v],
                self.sinr_db[v]
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Derives serving cell and SINR per voxel. Interference is the sum of all
/// sub-beams of every non-serving cell, scaled by `activity_factor`.
pub fn build_sinr_field(
    field: &RadioField,
    model: &NoiseModel,
    activity_factor: f64,
) -> Result<SinrField> {
    model.validate()?;
    if !(0.0..=1.0).contains(&activity_factor) {
        return Err(TwinError::InvalidArgument(format!(
            "activity factor {activity_factor} outside [0, 1]"
        )));
    }
    if field.cells().is_empty() {
        return Err(TwinError::MissingData("radio field has no cells".into()));
    }
    let mut sub_beams = Vec::with_capacity(field.cells().len());
    for c in field.cells() {
        let beams = c.sub_beam_rsrp_dbm.as_ref().ok_or_else(|| {
            TwinError::MissingData(format!("cell {} has no per-sub-beam RSRP", c.cell_id))
        })?;
        sub_beams.push(beams);
    }
    let kernel = SinrKernel::new(model, activity_factor);
    let n_cells = field.cells().len();

    let per_voxel: Vec<(usize, f64, f64)> = (0..field.voxel_count())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n_cells], vec![0.0; n_cells]),
            |(max, mw), v| {
                for (c, cell) in field.cells().iter().enumerate() {
                    max[c] = cell.rsrp_dbm[v];
                    mw[c] = cell_power_mw(sub_beams[c].iter().map(|b| dbm_to_mw(b[v])));
                }
                kernel.evaluate(max, mw)
            },
        )
        .collect();

    Ok(SinrField {
        cell_ids: field.cells().iter().map(|c| c.cell_id.clone()).collect(),
        serving_cell: per_voxel.iter().map(|p| p.0 as u32).collect(),
        serving_rsrp_dbm: per_voxel.iter().map(|p| p.1).collect(),
        sinr_db: per_voxel.iter().map(|p| p.2).collect(),
        activity_factor,
        noise_floor_dbm: kernel.noise_dbm,
    })
}

/// Serving cell id per voxel: the argmax of cell-level RSRP, ties going to
/// the lexicographically smallest id.
pub fn serving_map(field: &RadioField) -> Vec<&str> {
    (0..field.voxel_count())
        .map(|v| {
            let mut best = &field.cells()[0];
            for c in &field.cells()[1..] {
                if c.rsrp_dbm[v] > best.rsrp_dbm[v] {
                    best = c;
                }
            }
            best.cell_id.as_str()
        })
        .collect()
}
