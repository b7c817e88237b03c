use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TwinError};
use crate::optimizer::BeamAssignment;
use crate::scene::SceneConfig;
use crate::spectrum::{calibrate_offset, TwinModel};
use crate::validation::kriging::{kriging_fit, KrigingConfig, MIN_LAYER_SAMPLES};
use crate::validation::layers::{LayerScheme, PointPrediction};
use crate::validation::nearest::NearestNeighborModel;
use crate::validation::{block_holdout_folds, FoldSpec, MeasurementSet};

pub fn rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(TwinError::EmptySet("rmse"));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Empirical CDF of `|error|` evaluated at each grid point:
/// `F(x) = #{|e| <= x} / n`.
pub fn error_cdf(errors: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(TwinError::EmptySet("error_cdf"));
    }
    let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let n = abs.len() as f64;
    Ok(grid
        .iter()
        .map(|&x| (x, abs.partition_point(|&e| e <= x) as f64 / n))
        .collect())
}

pub struct PredictorOutput {
    pub predictions: Vec<PointPrediction>,
    /// Calibrated offset, for predictors that fit one.
    pub offset_db: Option<f64>,
}

/// A method that learns from training samples and predicts test samples.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;
    fn fit_predict(&self, train: &MeasurementSet, test: &MeasurementSet) -> Result<PredictorOutput>;
}

/// The twin with a single global offset calibrated on the training samples.
pub struct TwinPredictor<'a> {
    pub scene: &'a SceneConfig,
    pub assignment: &'a BeamAssignment,
}

impl Predictor for TwinPredictor<'_> {
    fn name(&self) -> &str {
        "twin"
    }

    fn fit_predict(&self, train: &MeasurementSet, test: &MeasurementSet) -> Result<PredictorOutput> {
        let model = TwinModel::new(self.scene, self.assignment, 0.0);
        let offset = calibrate_offset(&model.predict_measurements(train)?, train)?;
        let raw = model.predict_measurements(test)?;
        Ok(PredictorOutput {
            predictions: raw
                .into_iter()
                .map(|v| PointPrediction {
                    value_dbm: v + offset.offset_db,
                    fallback: false,
                })
                .collect(),
            offset_db: Some(offset.offset_db),
        })
    }
}

pub struct KrigingPredictor {
    pub config: KrigingConfig,
}

impl Predictor for KrigingPredictor {
    fn name(&self) -> &str {
        "kriging"
    }

    fn fit_predict(&self, train: &MeasurementSet, test: &MeasurementSet) -> Result<PredictorOutput> {
        let model = kriging_fit(train.samples(), &self.config)?;
        Ok(PredictorOutput {
            predictions: model.predict(&points(test))?,
            offset_db: None,
        })
    }
}

pub struct NearestNeighborPredictor {
    pub layers: LayerScheme,
}

impl Predictor for NearestNeighborPredictor {
    fn name(&self) -> &str {
        "nearest_neighbor"
    }

    fn fit_predict(&self, train: &MeasurementSet, test: &MeasurementSet) -> Result<PredictorOutput> {
        let model = NearestNeighborModel::fit(train.samples(), self.layers, MIN_LAYER_SAMPLES)?;
        Ok(PredictorOutput {
            predictions: model.predict(&points(test)),
            offset_db: None,
        })
    }
}

fn points(set: &MeasurementSet) -> Vec<([f64; 3], &str)> {
    set.samples()
        .iter()
        .map(|s| (s.position_m, s.cell_id.as_str()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldParams {
    pub train_fraction: f64,
    pub n_folds: usize,
    /// Absolute-error points at which CDFs are reported.
    pub cdf_grid_db: Vec<f64>,
}

impl Default for FoldParams {
    fn default() -> Self {
        FoldParams {
            train_fraction: 0.7,
            n_folds: 3,
            cdf_grid_db: (0..=40).map(|i| i as f64 * 0.5).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CdfPoint {
    #[serde(serialize_with = "crate::units::fixed4::serialize")]
    pub abs_error_db: f64,
    pub fraction: f64,
}

fn cdf_points(errors: &[f64], grid: &[f64]) -> Result<Vec<CdfPoint>> {
    Ok(error_cdf(errors, grid)?
        .into_iter()
        .map(|(abs_error_db, fraction)| CdfPoint {
            abs_error_db,
            fraction,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub predictor: String,
    /// Set when the predictor failed on this fold.
    pub error: Option<String>,
    #[serde(serialize_with = "crate::units::fixed4::option::serialize")]
    pub rmse_db: Option<f64>,
    #[serde(serialize_with = "crate::units::fixed4::option::serialize")]
    pub offset_db: Option<f64>,
    pub n_test: usize,
    /// Test predictions that used a fallback value.
    pub n_fallback: usize,
    pub cdf: Vec<CdfPoint>,
    #[serde(skip)]
    pub errors_db: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: FoldSpec,
    pub results: Vec<FoldResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PooledResult {
    pub predictor: String,
    /// RMSE over the concatenated errors of all successful folds.
    #[serde(serialize_with = "crate::units::fixed4::option::serialize")]
    pub rmse_db: Option<f64>,
    pub n_errors: usize,
    pub n_fallback: usize,
    pub failed_folds: Vec<usize>,
    pub cdf: Vec<CdfPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub source: String,
    pub n_samples: usize,
    pub train_fraction: f64,
    pub n_folds: usize,
    pub folds: Vec<FoldReport>,
    pub pooled: Vec<PooledResult>,
}

impl ValidationReport {
    pub fn pooled(&self, predictor: &str) -> Option<&PooledResult> {
        self.pooled.iter().find(|p| p.predictor == predictor)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn run_fold(
    set: &MeasurementSet,
    fold: &FoldSpec,
    predictor: &dyn Predictor,
    grid: &[f64],
) -> FoldResult {
    let attempt = || -> Result<(Vec<f64>, usize, Option<f64>)> {
        let (test, train) = set.split(fold.test_range());
        let train = MeasurementSet::new(train, set.source())?;
        let test = MeasurementSet::new(test, set.source())?;
        let out = predictor.fit_predict(&train, &test)?;
        if out.predictions.len() != test.len() {
            return Err(TwinError::DimensionMismatch(format!(
                "{} predictions for {} test samples",
                out.predictions.len(),
                test.len()
            )));
        }
        let errors = out
            .predictions
            .iter()
            .zip(test.samples())
            .map(|(p, s)| p.value_dbm - s.rsrp_dbm)
            .collect();
        let fallback = out.predictions.iter().filter(|p| p.fallback).count();
        Ok((errors, fallback, out.offset_db))
    };
    let base = FoldResult {
        predictor: predictor.name().to_string(),
        error: None,
        rmse_db: None,
        offset_db: None,
        n_test: fold.test_len(),
        n_fallback: 0,
        cdf: Vec::new(),
        errors_db: Vec::new(),
    };
    let scored = attempt().and_then(|(errors, fallback, offset)| {
        Ok(FoldResult {
            rmse_db: Some(rmse(&errors)?),
            cdf: cdf_points(&errors, grid)?,
            offset_db: offset,
            n_fallback: fallback,
            errors_db: errors,
            ..base.clone()
        })
    });
    scored.unwrap_or_else(|e| FoldResult {
        error: Some(e.to_string()),
        ..base
    })
}

/// Block hold-out evaluation of several predictors on identical folds.
/// A predictor failing on one fold is recorded and the run continues.
pub fn run_validation(
    set: &MeasurementSet,
    predictors: &[&dyn Predictor],
    params: &FoldParams,
) -> Result<ValidationReport> {
    if predictors.len() < 2 {
        return Err(TwinError::InvalidArgument(format!(
            "validation compares at least two predictors, got {}",
            predictors.len()
        )));
    }
    let mut names: Vec<&str> = predictors.iter().map(|p| p.name()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(TwinError::InvalidArgument("predictor names must be unique".into()));
    }
    let folds = block_holdout_folds(set, params.train_fraction, params.n_folds)?;
    let grid = &params.cdf_grid_db;

    let reports: Vec<FoldReport> = folds
        .par_iter()
        .map(|fold| FoldReport {
            fold: fold.clone(),
            results: predictors
                .par_iter()
                .map(|p| run_fold(set, fold, *p, grid))
                .collect(),
        })
        .collect();

    let pooled = predictors
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut errors = Vec::new();
            let mut failed = Vec::new();
            let mut fallback = 0;
            for r in &reports {
                let fr = &r.results[i];
                if fr.error.is_some() {
                    failed.push(r.fold.fold);
                } else {
                    errors.extend_from_slice(&fr.errors_db);
                    fallback += fr.n_fallback;
                }
            }
            Ok(PooledResult {
                predictor: p.name().to_string(),
                rmse_db: if errors.is_empty() { None } else { Some(rmse(&errors)?) },
                n_errors: errors.len(),
                n_fallback: fallback,
                failed_folds: failed,
                cdf: if errors.is_empty() {
                    Vec::new()
                } else {
                    cdf_points(&errors, grid)?
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ValidationReport {
        source: set.source().to_string(),
        n_samples: set.len(),
        train_fraction: params.train_fraction,
        n_folds: params.n_folds,
        folds: reports,
        pooled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::Sample;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 1.0);
        assert!((rmse(&[3.0, 4.0]).unwrap() - 3.5355).abs() < 1e-4);
        assert_eq!(rmse(&[0.0; 5]).unwrap(), 0.0);
        assert!(matches!(rmse(&[]), Err(TwinError::EmptySet(_))));
    }

    #[test]
    fn cdf_examples() {
        let f = error_cdf(&[2.0], &[1.9, 2.0, 2.1]).unwrap();
        assert_eq!(f, vec![(1.9, 0.0), (2.0, 1.0), (2.1, 1.0)]);
        let f = error_cdf(&[1.0, -2.0, 3.0], &[2.0]).unwrap();
        assert!((f[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(error_cdf(&[], &[0.0]).is_err());
        let errs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 7.0 - 7.0).collect();
        let grid: Vec<f64> = (0..2000).map(|i| i as f64 * 0.01).collect();
        let f = error_cdf(&errs, &grid).unwrap();
        assert!(f.windows(2).all(|w| w[0].1 <= w[1].1));
        let max = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        assert_eq!(error_cdf(&errs, &[max]).unwrap()[0].1, 1.0);
    }

    /// Predicts the stored value exactly, or fails on a chosen fold.
    struct Oracle {
        name: &'static str,
        fail_if_test_starts_at: Option<u64>,
    }

    impl Predictor for Oracle {
        fn name(&self) -> &str {
            self.name
        }

        fn fit_predict(&self, _: &MeasurementSet, test: &MeasurementSet) -> Result<PredictorOutput> {
            if Some(test.samples()[0].seq) == self.fail_if_test_starts_at {
                return Err(TwinError::Configuration("boom".into()));
            }
            Ok(PredictorOutput {
                predictions: test
                    .samples()
                    .iter()
                    .map(|s| PointPrediction {
                        value_dbm: s.rsrp_dbm,
                        fallback: false,
                    })
                    .collect(),
                offset_db: None,
            })
        }
    }

    fn set(n: usize) -> MeasurementSet {
        MeasurementSet::new(
            (0..n)
                .map(|i| Sample {
                    seq: i as u64,
                    position_m: [i as f64, 0.0, 5.0],
                    cell_id: "A".into(),
                    rsrp_dbm: -80.0 + (i as f64 * 0.3).sin() * 6.0,
                })
                .collect(),
            "unit",
        )
        .unwrap()
    }

    #[test]
    fn oracle_predictors() {
        let s = set(60);
        let a = Oracle { name: "a", fail_if_test_starts_at: None };
        let b = Oracle { name: "b", fail_if_test_starts_at: Some(18) };
        let r = run_validation(&s, &[&a, &b], &FoldParams::default()).unwrap();
        assert_eq!(r.folds.len(), 3);
        for f in &r.folds {
            assert_eq!(f.results[0].rmse_db, Some(0.0));
        }
        assert_eq!(r.pooled("a").unwrap().rmse_db, Some(0.0));
        let pb = r.pooled("b").unwrap();
        assert_eq!(pb.failed_folds, vec![1]);
        assert_eq!(pb.n_errors, 36);
        assert!(r.folds[1].results[1].error.is_some());
        assert!(run_validation(&s, &[&a], &FoldParams::default()).is_err());
        assert!(run_validation(&s, &[&a, &a], &FoldParams::default()).is_err());
    }

    #[test]
    fn pooled_is_rmse_of_concatenation() {
        let s = set(200);
        let k = KrigingPredictor { config: KrigingConfig::default() };
        let nn = NearestNeighborPredictor { layers: LayerScheme::default() };
        let r = run_validation(&s, &[&k, &nn], &FoldParams::default()).unwrap();
        for (i, p) in r.pooled.iter().enumerate() {
            let all: Vec<f64> = r
                .folds
                .iter()
                .flat_map(|f| f.results[i].errors_db.clone())
                .collect();
            assert_eq!(p.rmse_db, Some(rmse(&all).unwrap()));
        }
        let again = run_validation(&s, &[&k, &nn], &FoldParams::default()).unwrap();
        assert_eq!(r.to_json_string(), again.to_json_string());
    }
}
