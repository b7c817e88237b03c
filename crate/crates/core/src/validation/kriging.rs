//! Height-wise ordinary Kriging with an exponential variogram.
//!
//! Training samples are binned into horizontal layers and fitted separately
//! per (layer, cell). Each layer is an independent 2D problem.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};
use crate::validation::layers::{dist2, Group, LayerScheme, LayeredSamples, PointPrediction};
use crate::validation::Sample;

/// Fewer samples than this in a (layer, cell) group leaves it unfittable.
pub const MIN_LAYER_SAMPLES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrigingConfig {
    pub layers: LayerScheme,
    /// Nearest training points used per prediction.
    pub neighbors: usize,
    pub lag_bins: usize,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        KrigingConfig {
            layers: LayerScheme::default(),
            neighbors: 32,
            lag_bins: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariogramKind {
    Exponential,
}

/// `gamma(h) = nugget + (sill - nugget) * (1 - exp(-h / range_m))` for
/// distinct locations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub kind: VariogramKind,
    pub nugget: f64,
    pub sill: f64,
    pub range_m: f64,
}

impl VariogramModel {
    pub fn exponential(nugget: f64, sill: f64, range_m: f64) -> Result<Self> {
        let ok = nugget >= 0.0
            && sill > nugget
            && range_m > 0.0
            && [nugget, sill, range_m].iter().all(|v| v.is_finite());
        if !ok {
            return Err(TwinError::InvalidArgument(format!(
                "variogram needs nugget >= 0, sill > nugget, range > 0; got {nugget}, {sill}, {range_m}"
            )));
        }
        Ok(VariogramModel {
            kind: VariogramKind::Exponential,
            nugget,
            sill,
            range_m,
        })
    }

    pub fn partial_sill(&self) -> f64 {
        self.sill - self.nugget
    }

    /// Semivariance between two distinct samples `h` meters apart. The
    /// nugget applies even at `h = 0`.
    pub fn between(&self, h: f64) -> f64 {
        self.nugget + self.partial_sill() * (1.0 - (-h / self.range_m).exp())
    }

    /// Semivariance between a sample and a prediction location; zero when
    /// they coincide, which makes the predictor an exact interpolator.
    pub fn to_target(&self, h: f64) -> f64 {
        if h == 0.0 {
            0.0
        } else {
            self.between(h)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    /// Mean pair distance per non-empty bin.
    pub lags_m: Vec<f64>,
    pub semivariance: Vec<f64>,
    pub pair_counts: Vec<usize>,
}

/// Semivariance in `bins` equal-width lag bins up to half the maximum pair
/// distance. `None` when all points coincide.
pub fn empirical_variogram(
    points: &[[f64; 2]],
    values: &[f64],
    bins: usize,
) -> Option<EmpiricalVariogram> {
    let n = points.len();
    let mut max_d2 = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            max_d2 = max_d2.max(dist2(points[i], points[j]));
        }
    }
    if max_d2 == 0.0 || bins == 0 {
        return None;
    }
    let cutoff = max_d2.sqrt() / 2.0;
    let width = cutoff / bins as f64;
    let mut sum_h = vec![0.0; bins];
    let mut sum_g = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for i in 0..n {
        for j in i + 1..n {
            let h = dist2(points[i], points[j]).sqrt();
            if h > cutoff {
                continue;
            }
            let b = ((h / width) as usize).min(bins - 1);
            let d = values[i] - values[j];
            sum_h[b] += h;
            sum_g[b] += 0.5 * d * d;
            count[b] += 1;
        }
    }
    let mut out = EmpiricalVariogram {
        lags_m: Vec::new(),
        semivariance: Vec::new(),
        pair_counts: Vec::new(),
    };
    for b in 0..bins {
        if count[b] > 0 {
            out.lags_m.push(sum_h[b] / count[b] as f64);
            out.semivariance.push(sum_g[b] / count[b] as f64);
            out.pair_counts.push(count[b]);
        }
    }
    Some(out)
}

/// Nugget and partial sill minimizing squared error for a fixed range, with
/// the nugget clamped at zero. Returns (nugget, psill, sse).
fn fit_for_range(lags: &[f64], gamma: &[f64], range: f64) -> Option<(f64, f64, f64)> {
    let f: Vec<f64> = lags.iter().map(|h| 1.0 - (-h / range).exp()).collect();
    let n = f.len() as f64;
    let sf: f64 = f.iter().sum();
    let sff: f64 = f.iter().map(|x| x * x).sum();
    let sg: f64 = gamma.iter().sum();
    let sfg: f64 = f.iter().zip(gamma).map(|(x, g)| x * g).sum();
    let det = n * sff - sf * sf;
    let (mut c0, mut c1) = if det.abs() > 1e-12 * n * sff.max(1e-300) {
        ((sg * sff - sf * sfg) / det, (n * sfg - sf * sg) / det)
    } else {
        (-1.0, 0.0)
    };
    if c0 < 0.0 {
        c0 = 0.0;
        if sff <= 0.0 {
            return None;
        }
        c1 = sfg / sff;
    }
    if !(c1 > 0.0) {
        return None;
    }
    let sse = f
        .iter()
        .zip(gamma)
        .map(|(x, g)| (g - c0 - c1 * x).powi(2))
        .sum();
    Some((c0, c1, sse))
}

/// Least-squares exponential fit to the bin means. The range is searched on
/// a log grid and then refined; nugget and partial sill are solved in closed
/// form for each trial range.
pub fn fit_exponential(emp: &EmpiricalVariogram) -> Option<VariogramModel> {
    let max_lag = emp.lags_m.iter().copied().fold(0.0, f64::max);
    if emp.lags_m.len() < 2 || max_lag <= 0.0 {
        return None;
    }
    let search = |lo: f64, hi: f64, steps: usize| {
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for k in 0..=steps {
            let a = lo * (hi / lo).powf(k as f64 / steps as f64);
            if let Some((c0, c1, sse)) = fit_for_range(&emp.lags_m, &emp.semivariance, a) {
                if best.is_none_or(|b| sse < b.3) {
                    best = Some((a, c0, c1, sse));
                }
            }
        }
        best
    };
    let (a, ..) = search(max_lag * 1e-2, max_lag * 10.0, 120)?;
    let step = (1000.0f64).powf(1.0 / 120.0);
    let (a, c0, c1, _) = search(a / step, a * step, 60)?;
    VariogramModel::exponential(c0, c0 + c1, a).ok()
}

/// Ordinary-Kriging estimate at `target` from the given samples. Returns the
/// estimate and the weights, which sum to one.
pub fn ordinary_kriging(
    points: &[[f64; 2]],
    values: &[f64],
    variogram: &VariogramModel,
    target: [f64; 2],
) -> Result<(f64, Vec<f64>)> {
    let n = points.len();
    if n == 0 || values.len() != n {
        return Err(TwinError::DimensionMismatch(format!(
            "{n} points with {} values",
            values.len()
        )));
    }
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        for j in i + 1..n {
            let g = variogram.between(dist2(points[i], points[j]).sqrt());
            a[(i, j)] = g;
            a[(j, i)] = g;
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        b[i] = variogram.to_target(dist2(points[i], target).sqrt());
    }
    b[n] = 1.0;

    let solution = a
        .clone()
        .lu()
        .solve(&b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .or_else(|| {
            a.svd(true, true)
                .solve(&b, 1e-12)
                .ok()
                .filter(|x| x.iter().all(|v| v.is_finite()))
        })
        .ok_or_else(|| TwinError::Configuration("Kriging system could not be solved".into()))?;
    let weights: Vec<f64> = solution.iter().take(n).copied().collect();
    let estimate = weights.iter().zip(values).map(|(w, v)| w * v).sum();
    Ok((estimate, weights))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LayerFit {
    Kriging { variogram: VariogramModel },
    /// No spatial variation in the training values.
    Constant { value_dbm: f64 },
    /// Too few samples; predictions use the cell's training mean.
    Unfittable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: i64,
    pub cell_id: String,
    pub samples: usize,
    pub fit: LayerFit,
}

#[derive(Clone, Debug)]
pub struct KrigingModel {
    config: KrigingConfig,
    data: LayeredSamples,
    fits: BTreeMap<(i64, String), LayerFit>,
}

fn fit_group(g: &Group, config: &KrigingConfig) -> LayerFit {
    if g.values.len() < MIN_LAYER_SAMPLES {
        return LayerFit::Unfittable;
    }
    let mean = g.values.iter().sum::<f64>() / g.values.len() as f64;
    if g.values.iter().all(|&v| v == g.values[0]) {
        return LayerFit::Constant {
            value_dbm: g.values[0],
        };
    }
    let Some(emp) = empirical_variogram(&g.points, &g.values, config.lag_bins) else {
        // every sample at one location
        return LayerFit::Constant { value_dbm: mean };
    };
    let variogram = fit_exponential(&emp).unwrap_or_else(|| {
        // Non-increasing empirical variogram: fall back to a pure-sill model
        // spanning the sample variance.
        let var = g.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (g.values.len() - 1) as f64;
        let max_lag = emp.lags_m.iter().copied().fold(0.0, f64::max);
        VariogramModel::exponential(0.0, var, (max_lag / 3.0).max(f64::MIN_POSITIVE))
            .expect("positive variance")
    });
    LayerFit::Kriging { variogram }
}

/// Fits one model per (altitude layer, cell) from training samples.
pub fn kriging_fit(train: &[Sample], config: &KrigingConfig) -> Result<KrigingModel> {
    if config.neighbors == 0 || config.lag_bins == 0 {
        return Err(TwinError::InvalidArgument(
            "Kriging needs at least one neighbor and one lag bin".into(),
        ));
    }
    let data = LayeredSamples::new(train, config.layers)?;
    let largest = data.groups.values().map(|g| g.values.len()).max().unwrap_or(0);
    if largest < MIN_LAYER_SAMPLES {
        return Err(TwinError::TooFewSamples {
            needed: MIN_LAYER_SAMPLES,
            got: largest,
        });
    }
    let fits = data
        .groups
        .par_iter()
        .map(|(k, g)| (k.clone(), fit_group(g, config)))
        .collect();
    Ok(KrigingModel {
        config: *config,
        data,
        fits,
    })
}

impl KrigingModel {
    pub fn config(&self) -> &KrigingConfig {
        &self.config
    }

    pub fn layers(&self) -> Vec<LayerSummary> {
        self.fits
            .iter()
            .map(|((layer, cell), fit)| LayerSummary {
                layer: *layer,
                cell_id: cell.clone(),
                samples: self.data.groups[&(*layer, cell.clone())].values.len(),
                fit: fit.clone(),
            })
            .collect()
    }

    /// Indices (into the layer group) and weights of the Kriging estimate at
    /// a point, or `None` when the point is not served by a fitted variogram.
    pub fn weights_at(
        &self,
        position_m: [f64; 3],
        cell_id: &str,
    ) -> Result<Option<Vec<(usize, f64)>>> {
        let key = self.data.key(position_m, cell_id);
        let Some(LayerFit::Kriging { variogram }) = self.fits.get(&key) else {
            return Ok(None);
        };
        let g = &self.data.groups[&key];
        let target = [position_m[0], position_m[1]];
        let idx = nearest(&g.points, target, self.config.neighbors);
        let pts: Vec<[f64; 2]> = idx.iter().map(|&i| g.points[i]).collect();
        let vals: Vec<f64> = idx.iter().map(|&i| g.values[i]).collect();
        let (_, w) = ordinary_kriging(&pts, &vals, variogram, target)?;
        Ok(Some(idx.into_iter().zip(w).collect()))
    }

    pub fn predict_one(&self, position_m: [f64; 3], cell_id: &str) -> Result<PointPrediction> {
        let key = self.data.key(position_m, cell_id);
        match self.fits.get(&key) {
            Some(LayerFit::Constant { value_dbm }) => Ok(PointPrediction {
                value_dbm: *value_dbm,
                fallback: false,
            }),
            Some(LayerFit::Kriging { .. }) => {
                let g = &self.data.groups[&key];
                let w = self.weights_at(position_m, cell_id)?.expect("fitted layer");
                Ok(PointPrediction {
                    value_dbm: w.iter().map(|&(i, w)| w * g.values[i]).sum(),
                    fallback: false,
                })
            }
            Some(LayerFit::Unfittable) | None => Ok(PointPrediction {
                value_dbm: self.data.fallback(cell_id),
                fallback: true,
            }),
        }
    }

    pub fn predict(&self, points: &[([f64; 3], &str)]) -> Result<Vec<PointPrediction>> {
        points
            .par_iter()
            .map(|(p, c)| self.predict_one(*p, c))
            .collect()
    }
}

pub fn kriging_predict(
    model: &KrigingModel,
    points: &[([f64; 3], &str)],
) -> Result<Vec<PointPrediction>> {
    model.predict(points)
}

/// Indices of the `k` points nearest to `target`, ties broken by index,
/// returned in ascending index order.
fn nearest(points: &[[f64; 2]], target: [f64; 2], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    if k < points.len() {
        let key = |&i: &usize| (dist2(points[i], target), i);
        idx.select_nth_unstable_by(k - 1, |a, b| {
            key(a).partial_cmp(&key(b)).expect("finite distances")
        });
        idx.truncate(k);
        idx.sort_unstable();
    }
    idx
}
