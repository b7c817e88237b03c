//! Measurement ingestion, block hold-out validation and spatial baselines.

mod folds;
mod harness;
mod kriging;
mod layers;
mod measurements;
mod nearest;

pub use folds::{block_holdout_folds, fold_intervals, FoldSpec, MIN_FOLD_SAMPLES};
pub use harness::{
    error_cdf, rmse, run_validation, CdfPoint, FoldParams, FoldReport, FoldResult,
    KrigingPredictor, NearestNeighborPredictor, PooledResult, Predictor, PredictorOutput,
    TwinPredictor, ValidationReport,
};
pub use kriging::{
    empirical_variogram, fit_exponential, kriging_fit, kriging_predict, ordinary_kriging,
    EmpiricalVariogram, KrigingConfig, KrigingModel, LayerFit, LayerSummary, VariogramKind,
    VariogramModel, MIN_LAYER_SAMPLES,
};
pub use layers::{LayerScheme, PointPrediction};
pub use measurements::{
    geodetic_to_enu, MeasurementMapping, MeasurementSet, PositionFrame, Sample, REGION_TOLERANCE_M,
};
pub use nearest::NearestNeighborModel;
