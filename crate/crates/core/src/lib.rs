//! Digital twin of a low-altitude cellular network.
//!
//! The airspace above a set of base stations is cut into voxels. For a given
//! steering of every sub-beam the twin predicts per-voxel RSRP and SINR,
//! checks those predictions against drone measurements, and searches the
//! sub-beam steering angles for better coverage.
//!
//! Conventions used throughout: positions are local east/north/up meters;
//! azimuth is degrees clockwise from north in `[0, 360)`; tilt is degrees
//! above the horizon in `[-90, 90]`. Power is in dBm, gains and losses in dB.

// Negated comparisons such as `!(x > 0.0)` reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod antenna;
pub mod error;
pub mod interference;
pub mod metrics;
pub mod optimizer;
pub mod scene;
pub mod spectrum;
pub mod synth;
pub mod units;
pub mod validation;

pub use antenna::{AntennaPattern, Orientation, Pattern, TablePattern};
pub use error::{Result, TwinError};
pub use interference::{build_sinr_field, noise_floor_dbm, serving_map, NoiseModel, SinrField};
pub use metrics::{compare_report, coverage_ratios, difference_heatmap, CoverageThresholds};
pub use optimizer::{
    brute_force_optimize, greedy_optimize, objective, round_robin_order, score_candidate,
    BeamAssignment, BeamKey, ObjectiveWeights, OptimizationTrace,
};
pub use scene::{build_voxel_grid, load_scene, CylinderSpec, SceneConfig, VoxelGrid};
pub use spectrum::{
    beam_rsrp, build_field, calibrate_offset, drift_check, fspl_db, predict_at, RadioField,
    TwinModel,
};
pub use validation::{MeasurementSet, Sample};
