use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};
use crate::validation::Sample;

/// Horizontal altitude slabs of fixed height, indexed from `z_origin_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerScheme {
    pub layer_height_m: f64,
    pub z_origin_m: f64,
}

impl Default for LayerScheme {
    fn default() -> Self {
        LayerScheme {
            layer_height_m: 10.0,
            z_origin_m: 0.0,
        }
    }
}

impl LayerScheme {
    pub fn validate(&self) -> Result<()> {
        if !(self.layer_height_m > 0.0 && self.layer_height_m.is_finite())
            || !self.z_origin_m.is_finite()
        {
            return Err(TwinError::InvalidArgument(format!(
                "layer height {} must be positive and finite",
                self.layer_height_m
            )));
        }
        Ok(())
    }

    pub fn layer_of(&self, z_m: f64) -> i64 {
        ((z_m - self.z_origin_m) / self.layer_height_m).floor() as i64
    }
}

/// Training samples of one (layer, cell) pair, projected to the plane.
#[derive(Clone, Debug, Default)]
pub(crate) struct Group {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

/// Training samples grouped by (layer, cell) with the means used when a
/// group cannot serve a prediction.
#[derive(Clone, Debug)]
pub(crate) struct LayeredSamples {
    pub scheme: LayerScheme,
    pub groups: BTreeMap<(i64, String), Group>,
    pub cell_means: BTreeMap<String, f64>,
    pub global_mean: f64,
}

impl LayeredSamples {
    pub fn new(train: &[Sample], scheme: LayerScheme) -> Result<Self> {
        scheme.validate()?;
        if train.is_empty() {
            return Err(TwinError::EmptySet("training samples"));
        }
        let mut groups: BTreeMap<(i64, String), Group> = BTreeMap::new();
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for s in train {
            let g = groups
                .entry((scheme.layer_of(s.position_m[2]), s.cell_id.clone()))
                .or_default();
            g.points.push([s.position_m[0], s.position_m[1]]);
            g.values.push(s.rsrp_dbm);
            let e = sums.entry(s.cell_id.clone()).or_insert((0.0, 0));
            e.0 += s.rsrp_dbm;
            e.1 += 1;
        }
        let global_mean = train.iter().map(|s| s.rsrp_dbm).sum::<f64>() / train.len() as f64;
        Ok(LayeredSamples {
            scheme,
            groups,
            cell_means: sums
                .into_iter()
                .map(|(c, (s, n))| (c, s / n as f64))
                .collect(),
            global_mean,
        })
    }

    pub fn key(&self, position_m: [f64; 3], cell_id: &str) -> (i64, String) {
        (self.scheme.layer_of(position_m[2]), cell_id.to_string())
    }

    /// Training mean of the cell, or of all samples for an unseen cell.
    pub fn fallback(&self, cell_id: &str) -> f64 {
        self.cell_means
            .get(cell_id)
            .copied()
            .unwrap_or(self.global_mean)
    }
}

/// One prediction and whether it came from the fallback mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub value_dbm: f64,
    pub fallback: bool,
}

/// Squared planar distance.
#[inline]
pub(crate) fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}
