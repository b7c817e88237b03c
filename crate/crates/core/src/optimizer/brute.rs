use crate::antenna::Orientation;
use crate::error::{Result, TwinError};
use crate::metrics::CoverageThresholds;
use crate::optimizer::evaluator::{Evaluator, ObjectiveWeights};
use crate::optimizer::BeamAssignment;
use crate::scene::{BeamRef, SceneConfig, VoxelGrid};

pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 100_000;

#[derive(Clone, Debug)]
pub struct BruteForceResult {
    pub assignment: BeamAssignment,
    pub objective: f64,
    /// Number of complete assignments evaluated.
    pub evaluated: u128,
}

/// Exhaustive search over every sub-beam's candidate lattice (plus its
/// baseline). Ties resolve to the lexicographically smallest angle tuple,
/// with sub-beams ordered by (cell id, index) and angles by (azimuth, tilt).
pub fn brute_force_optimize(
    scene: &SceneConfig,
    grid: &VoxelGrid,
    weights: &ObjectiveWeights,
    thresholds: &CoverageThresholds,
    cap: u128,
) -> Result<BruteForceResult> {
    let mut beams: Vec<(String, BeamRef)> = scene
        .beams()
        .map(|r| (scene.cell(r).id.clone(), r))
        .collect();
    beams.sort_by(|a, b| (&a.0, a.1.beam).cmp(&(&b.0, b.1.beam)));

    let choices: Vec<Vec<Orientation>> = beams
        .iter()
        .map(|(_, r)| {
            let sb = scene.sub_beam(*r);
            let mut c = sb.candidate_lattice();
            if !c.contains(&sb.baseline) {
                c.push(sb.baseline);
            }
            c.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
            c.dedup();
            c
        })
        .collect();
    let size = choices
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(TwinError::SearchSpaceTooLarge { size, cap });
    }
    if size == 0 {
        return Err(TwinError::Configuration("a sub-beam has no candidates".into()));
    }

    let mut start = BeamAssignment::default();
    for ((cell, r), c) in beams.iter().zip(&choices) {
        start.set(cell, r.beam, c[0]);
    }
    let mut ev = Evaluator::new(scene, grid, &start, weights, thresholds)?;
    let mut digits = vec![0usize; beams.len()];
    let mut best = (ev.objective(), digits.clone());
    let mut evaluated = 1u128;

    // odometer with the last sub-beam varying fastest
    loop {
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                let mut out = BeamAssignment::default();
                for (((cell, r), c), &d) in beams.iter().zip(&choices).zip(&best.1) {
                    out.set(cell, r.beam, c[d]);
                }
                return Ok(BruteForceResult {
                    assignment: out,
                    objective: best.0,
                    evaluated,
                });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < choices[pos].len() {
                ev.commit(beams[pos].1, choices[pos][digits[pos]]);
                break;
            }
            digits[pos] = 0;
            ev.commit(beams[pos].1, choices[pos][0]);
        }
        evaluated += 1;
        if ev.objective() > best.0 {
            best = (ev.objective(), digits.clone());
        }
    }
}
