//! Greedy sequential sub-beam steering with same-cell angle reuse.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::antenna::Orientation;
use crate::error::{Result, TwinError};
use crate::metrics::CoverageThresholds;
use crate::optimizer::evaluator::{Evaluator, ObjectiveWeights};
use crate::optimizer::BeamAssignment;
use crate::scene::{BeamRef, SceneConfig, SubBeam, VoxelGrid};

/// Names one sub-beam by cell id and index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeamKey {
    pub cell_id: String,
    pub beam: usize,
}

impl BeamKey {
    pub fn new(cell_id: impl Into<String>, beam: usize) -> Self {
        BeamKey {
            cell_id: cell_id.into(),
            beam,
        }
    }

    pub(crate) fn resolve(&self, scene: &SceneConfig) -> Result<BeamRef> {
        let (site, cell) = scene
            .find_cell(&self.cell_id)
            .ok_or_else(|| TwinError::UnknownCell(self.cell_id.clone()))?;
        if self.beam >= scene.sites[site].cells[cell].sub_beams.len() {
            return Err(TwinError::Configuration(format!(
                "cell {} has no sub-beam {}",
                self.cell_id, self.beam
            )));
        }
        Ok(BeamRef {
            site,
            cell,
            beam: self.beam,
        })
    }
}

/// Round-robin across cells: every cell's first sub-beam, then every cell's
/// second, and so on. Cells keep scene order.
pub fn round_robin_order(scene: &SceneConfig) -> Vec<BeamKey> {
    let cells: Vec<_> = scene.sites.iter().flat_map(|s| &s.cells).collect();
    let depth = cells.iter().map(|c| c.sub_beams.len()).max().unwrap_or(0);
    (0..depth)
        .flat_map(|b| {
            cells
                .iter()
                .filter(move |c| b < c.sub_beams.len())
                .map(move |c| BeamKey::new(c.id.clone(), b))
        })
        .collect()
}

/// Candidate lattice of a sub-beam with its current angle appended when the
/// current angle is off the lattice.
pub fn candidate_set(beam: &SubBeam, current: Orientation) -> Vec<Orientation> {
    let mut c = beam.candidate_lattice();
    if !c.contains(&current) {
        c.push(current);
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub beam: BeamKey,
    pub candidates_evaluated: usize,
    pub chosen: Orientation,
    pub reused: bool,
    /// Objective change of the chosen angle.
    pub delta: f64,
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub steps: Vec<TraceStep>,
}

impl OptimizationTrace {
    pub fn initial_objective(&self) -> Option<f64> {
        self.steps.first().map(|s| s.objective_before)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.steps.last().map(|s| s.objective_after)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.steps).expect("trace serializes")
    }
}

/// Visits sub-beams in `order`, moving each to its best candidate angle.
///
/// When the best improvement falls below `epsilon_gain * max(objective, 1)`
/// and another sub-beam of the same cell was already assigned in this run,
/// the most recently assigned same-cell angle is reused instead, provided it
/// lies in the sub-beam's bounds and does not lower the objective.
pub fn greedy_optimize(
    scene: &SceneConfig,
    grid: &VoxelGrid,
    initial: &BeamAssignment,
    weights: &ObjectiveWeights,
    thresholds: &CoverageThresholds,
    order: &[BeamKey],
) -> Result<(BeamAssignment, OptimizationTrace)> {
    let refs = order
        .iter()
        .map(|k| k.resolve(scene))
        .collect::<Result<Vec<_>>>()?;
    {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = order.iter().find(|k| !seen.insert(*k)) {
            return Err(TwinError::Configuration(format!(
                "sub-beam {}:{} appears twice in the optimization order",
                dup.cell_id, dup.beam
            )));
        }
    }
    let mut ev = Evaluator::new(scene, grid, initial, weights, thresholds)?;
    let mut last_in_cell: HashMap<(usize, usize), Orientation> = HashMap::new();
    let mut trace = OptimizationTrace::default();

    for (key, &r) in order.iter().zip(&refs) {
        let sub_beam = scene.sub_beam(r);
        let current = ev.angle(r);
        let candidates = candidate_set(sub_beam, current);
        if candidates.is_empty() {
            return Err(TwinError::Configuration(format!(
                "sub-beam {}:{} has no candidate angles",
                key.cell_id, key.beam
            )));
        }
        let deltas = ev.deltas(r, &candidates);
        let mut best = 0;
        for (i, &d) in deltas.iter().enumerate() {
            if d > deltas[best] {
                best = i;
            }
        }
        let before = ev.objective();
        let mut chosen = (candidates[best], deltas[best], false);

        let threshold = weights.epsilon_gain * before.max(1.0);
        if deltas[best] < threshold {
            if let Some(&reuse) = last_in_cell.get(&(r.site, r.cell)) {
                if sub_beam.bounds.contains(reuse) {
                    let d = match candidates.iter().position(|&c| c == reuse) {
                        Some(i) => deltas[i],
                        None => ev.delta(r, reuse),
                    };
                    if d >= 0.0 {
                        chosen = (reuse, d, true);
                    }
                }
            }
        }

        let (angle, delta, reused) = chosen;
        ev.commit(r, angle);
        last_in_cell.insert((r.site, r.cell), angle);
        trace.steps.push(TraceStep {
            beam: key.clone(),
            candidates_evaluated: candidates.len(),
            chosen: angle,
            reused,
            delta,
            objective_before: before,
            objective_after: ev.objective(),
        });
    }
    Ok((ev.assignment(), trace))
}

/// Objective change from moving one sub-beam of `current` to `angle`.
pub fn score_candidate(
    scene: &SceneConfig,
    grid: &VoxelGrid,
    current: &BeamAssignment,
    target: &BeamKey,
    angle: Orientation,
    weights: &ObjectiveWeights,
    thresholds: &CoverageThresholds,
) -> Result<f64> {
    let r = target.resolve(scene)?;
    if !scene.sub_beam(r).bounds.contains(angle) {
        return Err(TwinError::OutOfBounds {
            cell: target.cell_id.clone(),
            beam: target.beam,
            azimuth_deg: angle.azimuth_deg(),
            tilt_deg: angle.tilt_deg(),
        });
    }
    let ev = Evaluator::new(scene, grid, current, weights, thresholds)?;
    Ok(ev.delta(r, angle))
}
