//! Incremental objective evaluation.
//!
//! The evaluator caches every sub-beam's per-voxel power plus each cell's
//! per-voxel maximum and linear sum. Scoring a candidate angle recomputes
//! only the target sub-beam and its cell; all other cells come from the
//! cache. The per-voxel arithmetic is the same code path used by
//! [`build_field`](crate::spectrum::build_field) and
//! [`build_sinr_field`](crate::interference::build_sinr_field), so the
//! incremental and full objectives agree bit for bit.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antenna::Orientation;
use crate::error::{Result, TwinError};
use crate::interference::{build_sinr_field, cell_power_mw, NoiseModel, SinrField, SinrKernel};
use crate::metrics::CoverageThresholds;
use crate::optimizer::BeamAssignment;
use crate::scene::{BeamRef, SceneConfig, VoxelGrid};
use crate::spectrum::{
    build_field_with_geometry, cell_max, check_assignment, grid_geometry, rsrp_from_geometry,
    LinkGeometry,
};
use crate::units::dbm_to_mw;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    /// Weight per covered voxel.
    pub alpha: f64,
    /// Weight per dB of capped SINR margin, summed over voxels.
    pub beta: f64,
    pub margin_cap_db: f64,
    /// Early-termination threshold as a fraction of the current objective.
    pub epsilon_gain: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            alpha: 1.0,
            beta: 0.1,
            margin_cap_db: 10.0,
            epsilon_gain: 0.005,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.beta >= 0.0
            && self.margin_cap_db > 0.0
            && self.epsilon_gain >= 0.0
            && [self.alpha, self.beta, self.margin_cap_db, self.epsilon_gain]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(TwinError::InvalidArgument(format!(
                "objective weights {self:?} must be finite with alpha, beta, epsilon >= 0 and margin cap > 0"
            )))
        }
    }
}

/// Running totals of the objective terms.
#[derive(Clone, Copy, Debug, Default)]
struct Score {
    covered: u64,
    margin_db: f64,
}

impl Score {
    #[inline]
    fn add(&mut self, rsrp: f64, sinr: f64, t: &CoverageThresholds, cap: f64) {
        if rsrp >= t.rsrp_strict_dbm && sinr >= t.sinr_basic_db {
            self.covered += 1;
        }
        self.margin_db += (sinr - t.sinr_strict_db).min(cap);
    }

    fn value(&self, w: &ObjectiveWeights) -> f64 {
        w.alpha * self.covered as f64 + w.beta * self.margin_db
    }
}

/// Objective of an already-built SINR field.
pub fn score_sinr_field(
    sinr: &SinrField,
    weights: &ObjectiveWeights,
    thresholds: &CoverageThresholds,
) -> f64 {
    let mut s = Score::default();
    for (&rsrp, &q) in sinr.serving_rsrp_dbm().iter().zip(sinr.sinr_db()) {
        s.add(rsrp, q, thresholds, weights.margin_cap_db);
    }
    s.value(weights)
}

/// `alpha * N_cov + beta * M` for a complete assignment, computed through
/// full radio and SINR field construction.
pub fn objective(
    scene: &SceneConfig,
    grid: &VoxelGrid,
    assignment: &BeamAssignment,
    weights: &ObjectiveWeights,
    thresholds: &CoverageThresholds,
) -> Result<f64> {
    weights.validate()?;
    check_assignment(scene, assignment)?;
    let geometry = grid_geometry(scene, grid)?;
    let field = build_field_with_geometry(scene, &geometry, assignment, 0.0);
    let sinr = build_sinr_field(
        &field,
        &NoiseModel::from(&scene.radio),
        scene.radio.activity_factor,
    )?;
    Ok(score_sinr_field(&sinr, weights, thresholds))
}

struct BeamState {
    angle: Orientation,
    dbm: Vec<f64>,
    mw: Vec<f64>,
}

struct CellState {
    site: usize,
    cell: usize,
    beams: Vec<BeamState>,
    max_dbm: Vec<f64>,
    sum_mw: Vec<f64>,
}

/// Replacement values for one sub-beam while scoring a candidate.
struct Replacement<'v> {
    slot: usize,
    beam: usize,
    dbm: &'v [f64],
    mw: &'v [f64],
}

pub(crate) struct Evaluator<'a> {
    scene: &'a SceneConfig,
    thresholds: CoverageThresholds,
    weights: ObjectiveWeights,
    kernel: SinrKernel,
    geometry: Vec<Vec<LinkGeometry>>,
    /// Sorted by cell id.
    cells: Vec<CellState>,
    slot_of: HashMap<(usize, usize), usize>,
    voxel_count: usize,
    objective: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        scene: &'a SceneConfig,
        grid: &VoxelGrid,
        assignment: &BeamAssignment,
        weights: &ObjectiveWeights,
        thresholds: &CoverageThresholds,
    ) -> Result<Self> {
        weights.validate()?;
        check_assignment(scene, assignment)?;
        let geometry = grid_geometry(scene, grid)?;
        let mut order: Vec<(usize, usize)> = scene
            .sites
            .iter()
            .enumerate()
            .flat_map(|(si, s)| (0..s.cells.len()).map(move |ci| (si, ci)))
            .collect();
        order.sort_by(|a, b| {
            scene.sites[a.0].cells[a.1]
                .id
                .cmp(&scene.sites[b.0].cells[b.1].id)
        });
        let slot_of = order.iter().enumerate().map(|(i, &k)| (k, i)).collect();

        let mut ev = Evaluator {
            scene,
            thresholds: *thresholds,
            weights: *weights,
            kernel: SinrKernel::new(&NoiseModel::from(&scene.radio), scene.radio.activity_factor),
            voxel_count: grid.count(),
            geometry,
            cells: Vec::with_capacity(order.len()),
            slot_of,
            objective: 0.0,
        };
        for (si, ci) in order {
            let cell = &scene.sites[si].cells[ci];
            let beams = (0..cell.sub_beams.len())
                .map(|bi| {
                    let r = BeamRef {
                        site: si,
                        cell: ci,
                        beam: bi,
                    };
                    let angle = assignment.get(&cell.id, bi).expect("assignment checked");
                    let (dbm, mw) = ev.beam_values(r, angle);
                    BeamState { angle, dbm, mw }
                })
                .collect();
            let mut state = CellState {
                site: si,
                cell: ci,
                beams,
                max_dbm: Vec::new(),
                sum_mw: Vec::new(),
            };
            refresh_cell(&mut state, ev.voxel_count);
            ev.cells.push(state);
        }
        ev.objective = ev.score(None);
        Ok(ev)
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn angle(&self, r: BeamRef) -> Orientation {
        self.cells[self.slot(r)].beams[r.beam].angle
    }

    pub fn assignment(&self) -> BeamAssignment {
        let mut a = BeamAssignment::default();
        for c in &self.cells {
            let id = &self.scene.sites[c.site].cells[c.cell].id;
            for (bi, b) in c.beams.iter().enumerate() {
                a.set(id, bi, b.angle);
            }
        }
        a
    }

    fn slot(&self, r: BeamRef) -> usize {
        self.slot_of[&(r.site, r.cell)]
    }

    fn beam_values(&self, r: BeamRef, angle: Orientation) -> (Vec<f64>, Vec<f64>) {
        let cell = self.scene.cell(r);
        let pattern = &self.scene.sub_beam(r).pattern;
        let dbm: Vec<f64> = self.geometry[r.site]
            .iter()
            .map(|g| rsrp_from_geometry(cell.tx_power_dbm, pattern, angle, g, 0.0))
            .collect();
        let mw = dbm.iter().map(|&d| dbm_to_mw(d)).collect();
        (dbm, mw)
    }

    fn score(&self, replacement: Option<Replacement<'_>>) -> f64 {
        let n_cells = self.cells.len();
        let mut max = vec![0.0; n_cells];
        let mut mw = vec![0.0; n_cells];
        let mut s = Score::default();
        for v in 0..self.voxel_count {
            for (c, cell) in self.cells.iter().enumerate() {
                match &replacement {
                    Some(rep) if rep.slot == c => {
                        let beams = cell.beams.iter().enumerate();
                        max[c] = cell_max(beams.clone().map(|(bi, b)| {
                            if bi == rep.beam {
                                rep.dbm[v]
                            } else {
                                b.dbm[v]
                            }
                        }));
                        mw[c] = cell_power_mw(beams.map(|(bi, b)| {
                            if bi == rep.beam {
                                rep.mw[v]
                            } else {
                                b.mw[v]
                            }
                        }));
                    }
                    _ => {
                        max[c] = cell.max_dbm[v];
                        mw[c] = cell.sum_mw[v];
                    }
                }
            }
            let (_, rsrp, sinr) = self.kernel.evaluate(&max, &mw);
            s.add(rsrp, sinr, &self.thresholds, self.weights.margin_cap_db);
        }
        s.value(&self.weights)
    }

    /// Objective after setting `r` to `angle`, all else unchanged.
    pub fn objective_with(&self, r: BeamRef, angle: Orientation) -> f64 {
        let slot = self.slot(r);
        if self.cells[slot].beams[r.beam].angle == angle {
            return self.objective;
        }
        let (dbm, mw) = self.beam_values(r, angle);
        self.score(Some(Replacement {
            slot,
            beam: r.beam,
            dbm: &dbm,
            mw: &mw,
        }))
    }

    pub fn delta(&self, r: BeamRef, angle: Orientation) -> f64 {
        self.objective_with(r, angle) - self.objective
    }

    /// Scores several candidates for one sub-beam, in parallel, returning
    /// deltas in candidate order.
    pub fn deltas(&self, r: BeamRef, candidates: &[Orientation]) -> Vec<f64> {
        candidates
            .par_iter()
            .map(|&a| self.delta(r, a))
            .collect()
    }

    pub fn commit(&mut self, r: BeamRef, angle: Orientation) {
        let slot = self.slot(r);
        if self.cells[slot].beams[r.beam].angle == angle {
            return;
        }
        let (dbm, mw) = self.beam_values(r, angle);
        let cell = &mut self.cells[slot];
        cell.beams[r.beam] = BeamState { angle, dbm, mw };
        refresh_cell(cell, self.voxel_count);
        self.objective = self.score(None);
    }
}

fn refresh_cell(cell: &mut CellState, voxel_count: usize) {
    cell.max_dbm = (0..voxel_count)
        .map(|v| cell_max(cell.beams.iter().map(|b| b.dbm[v])))
        .collect();
    cell.sum_mw = (0..voxel_count)
        .map(|v| cell_power_mw(cell.beams.iter().map(|b| b.mw[v])))
        .collect();
}
