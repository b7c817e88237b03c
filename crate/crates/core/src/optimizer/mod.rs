//! Sub-beam steering optimization.

mod assignment;
mod brute;
mod evaluator;
mod greedy;

pub use assignment::BeamAssignment;
pub use brute::{brute_force_optimize, BruteForceResult, DEFAULT_BRUTE_FORCE_CAP};
pub use evaluator::{objective, score_sinr_field, ObjectiveWeights};
pub use greedy::{
    candidate_set, greedy_optimize, round_robin_order, score_candidate, BeamKey,
    OptimizationTrace, TraceStep,
};
