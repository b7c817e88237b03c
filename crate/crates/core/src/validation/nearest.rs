use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::Result;
use crate::validation::layers::{dist2, LayerScheme, LayeredSamples, PointPrediction};
use crate::validation::Sample;

/// Predicts the value of the nearest training sample of the same cell in the
/// same altitude layer. Layers with too few samples for Kriging use the same
/// cell-mean fallback so the two baselines differ only in interpolation.
#[derive(Clone, Debug)]
pub struct NearestNeighborModel {
    data: LayeredSamples,
    min_layer_samples: usize,
}

impl NearestNeighborModel {
    pub fn fit(train: &[Sample], scheme: LayerScheme, min_layer_samples: usize) -> Result<Self> {
        Ok(NearestNeighborModel {
            data: LayeredSamples::new(train, scheme)?,
            min_layer_samples: min_layer_samples.max(1),
        })
    }

    pub fn predict_one(&self, position_m: [f64; 3], cell_id: &str) -> PointPrediction {
        let key = self.data.key(position_m, cell_id);
        match self.data.groups.get(&key) {
            Some(g) if g.values.len() >= self.min_layer_samples => {
                let target = [position_m[0], position_m[1]];
                let best = (0..g.points.len())
                    .min_by(|&a, &b| {
                        (dist2(g.points[a], target), a)
                            .partial_cmp(&(dist2(g.points[b], target), b))
                            .expect("finite distances")
                    })
                    .expect("non-empty group");
                PointPrediction {
                    value_dbm: g.values[best],
                    fallback: false,
                }
            }
            _ => PointPrediction {
                value_dbm: self.data.fallback(cell_id),
                fallback: true,
            },
        }
    }

    pub fn predict(&self, points: &[([f64; 3], &str)]) -> Vec<PointPrediction> {
        points
            .par_iter()
            .map(|(p, c)| self.predict_one(*p, c))
            .collect()
    }

    /// Sample count per (layer, cell).
    pub fn group_sizes(&self) -> BTreeMap<(i64, String), usize> {
        self.data
            .groups
            .iter()
            .map(|(k, g)| (k.clone(), g.values.len()))
            .collect()
    }
}
