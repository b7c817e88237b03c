//! Coverage ratios, difference heatmaps and before/after comparisons.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};
use crate::interference::SinrField;
use crate::scene::VoxelGrid;
use crate::spectrum::RadioField;

/// Altitudes used for heatmaps when none are requested.
pub const DEFAULT_HEATMAP_ALTITUDES_M: [f64; 4] = [50.0, 150.0, 300.0, 450.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageThresholds {
    pub rsrp_basic_dbm: f64,
    pub rsrp_strict_dbm: f64,
    pub sinr_basic_db: f64,
    pub sinr_strict_db: f64,
}

impl Default for CoverageThresholds {
    fn default() -> Self {
        CoverageThresholds {
            rsrp_basic_dbm: -95.0,
            rsrp_strict_dbm: -85.0,
            sinr_basic_db: -3.0,
            sinr_strict_db: 5.0,
        }
    }
}

impl CoverageThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rsrp_basic_dbm,
            self.rsrp_strict_dbm,
            self.sinr_basic_db,
            self.sinr_strict_db,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(TwinError::validation("thresholds", "values must be finite"));
        }
        if self.rsrp_strict_dbm < self.rsrp_basic_dbm {
            return Err(TwinError::validation(
                "thresholds.rsrp_strict_dbm",
                "must be >= rsrp_basic_dbm",
            ));
        }
        if self.sinr_strict_db < self.sinr_basic_db {
            return Err(TwinError::validation(
                "thresholds.sinr_strict_db",
                "must be >= sinr_basic_db",
            ));
        }
        Ok(())
    }
}

/// Voxel counts meeting each threshold. A threshold is met when the value is
/// greater than or equal to it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub total: u64,
    pub rsrp_basic: u64,
    pub rsrp_strict: u64,
    pub sinr_basic: u64,
    pub sinr_strict: u64,
    /// RSRP basic and SINR basic together.
    pub joint_basic: u64,
    /// RSRP strict and SINR strict together.
    pub joint_strict: u64,
}

impl CoverageCounts {
    fn add(&mut self, rsrp: f64, sinr: f64, t: &CoverageThresholds) {
        let rb = rsrp >= t.rsrp_basic_dbm;
        let rs = rsrp >= t.rsrp_strict_dbm;
        let sb = sinr >= t.sinr_basic_db;
        let ss = sinr >= t.sinr_strict_db;
        self.total += 1;
        self.rsrp_basic += rb as u64;
        self.rsrp_strict += rs as u64;
        self.sinr_basic += sb as u64;
        self.sinr_strict += ss as u64;
        self.joint_basic += (rb && sb) as u64;
        self.joint_strict += (rs && ss) as u64;
    }

    pub fn ratios(&self) -> CoverageRatios {
        let r = |n: u64| {
            if self.total == 0 {
                0.0
            } else {
                n as f64 / self.total as f64
            }
        };
        CoverageRatios {
            rsrp_basic: r(self.rsrp_basic),
            rsrp_strict: r(self.rsrp_strict),
            sinr_basic: r(self.sinr_basic),
            sinr_strict: r(self.sinr_strict),
            joint_basic: r(self.joint_basic),
            joint_strict: r(self.joint_strict),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageRatios {
    pub rsrp_basic: f64,
    pub rsrp_strict: f64,
    pub sinr_basic: f64,
    pub sinr_strict: f64,
    pub joint_basic: f64,
    pub joint_strict: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCoverage {
    pub layer: usize,
    pub altitude_m: f64,
    pub counts: CoverageCounts,
    pub ratios: CoverageRatios,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub thresholds: CoverageThresholds,
    pub counts: CoverageCounts,
    pub ratios: CoverageRatios,
    /// Layers containing at least one counted voxel, bottom to top.
    pub layers: Vec<LayerCoverage>,
    pub masked: bool,
}

/// Threshold satisfaction on serving-cell values, optionally restricted to
/// the voxels where `mask` is true.
pub fn coverage_ratios(
    grid: &VoxelGrid,
    field: &RadioField,
    sinr: &SinrField,
    thresholds: &CoverageThresholds,
    mask: Option<&[bool]>,
) -> Result<CoverageReport> {
    thresholds.validate()?;
    let n = grid.count();
    if field.voxel_count() != n || sinr.voxel_count() != n {
        return Err(TwinError::DimensionMismatch(format!(
            "grid has {n} voxels, radio field {}, SINR field {}",
            field.voxel_count(),
            sinr.voxel_count()
        )));
    }
    if let Some(m) = mask {
        if m.len() != n {
            return Err(TwinError::DimensionMismatch(format!(
                "mask has {} entries for {n} voxels",
                m.len()
            )));
        }
    }
    let mut total = CoverageCounts::default();
    let mut layers = vec![CoverageCounts::default(); grid.layer_count()];
    let rsrp = sinr.serving_rsrp_dbm();
    let q = sinr.sinr_db();
    for v in 0..n {
        if mask.is_some_and(|m| !m[v]) {
            continue;
        }
        total.add(rsrp[v], q[v], thresholds);
        layers[grid.layer_of(v)].add(rsrp[v], q[v], thresholds);
    }
    if total.total == 0 {
        return Err(TwinError::EmptySet("coverage mask selects no voxels"));
    }
    let spec = grid.spec();
    Ok(CoverageReport {
        thresholds: *thresholds,
        counts: total,
        ratios: total.ratios(),
        layers: layers
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.total > 0)
            .map(|(layer, counts)| LayerCoverage {
                layer,
                altitude_m: spec.z_min_m + (layer as f64 + 0.5) * spec.voxel_m,
                counts,
                ratios: counts.ratios(),
            })
            .collect(),
        masked: mask.is_some(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapPoint {
    pub x_m: f64,
    pub y_m: f64,
    pub delta_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub layer: usize,
    pub altitude_m: f64,
    pub points: Vec<HeatmapPoint>,
}

impl Heatmap {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_m", "y_m", "delta_db"])?;
        for p in &self.points {
            w.write_record([
                format!("{:.4}", p.x_m),
                format!("{:.4}", p.y_m),
                format!("{:.4}", p.delta_db),
            ])?;
        }
        w.flush().map_err(|e| TwinError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Per-voxel `after - before` over the layer containing `altitude_m`.
pub fn difference_heatmap(
    grid: &VoxelGrid,
    before: &[f64],
    after: &[f64],
    altitude_m: f64,
) -> Result<Heatmap> {
    if before.len() != grid.count() || after.len() != grid.count() {
        return Err(TwinError::DimensionMismatch(format!(
            "grid has {} voxels, before {}, after {}",
            grid.count(),
            before.len(),
            after.len()
        )));
    }
    let layer = grid
        .layer_at_altitude(altitude_m)
        .ok_or(TwinError::UnknownLayer(altitude_m))?;
    let voxels = grid.layer_voxels(layer);
    if voxels.is_empty() {
        return Err(TwinError::UnknownLayer(altitude_m));
    }
    let spec = grid.spec();
    Ok(Heatmap {
        layer,
        altitude_m: spec.z_min_m + (layer as f64 + 0.5) * spec.voxel_m,
        points: voxels
            .into_iter()
            .map(|v| {
                let c = grid.centers()[v];
                HeatmapPoint {
                    x_m: c[0],
                    y_m: c[1],
                    delta_db: after[v] - before[v],
                }
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub metric: String,
    /// Absent for joint rows, which combine two thresholds.
    pub threshold: Option<f64>,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// RSRP basic/strict and SINR basic/strict, then joint basic.
    pub rows: Vec<CompareRow>,
    pub before: CoverageReport,
    pub after: CoverageReport,
}

impl CompareReport {
    pub fn row(&self, metric: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

type RowSpec = (&'static str, Option<f64>, fn(&CoverageRatios) -> f64);

pub fn compare_report(
    grid: &VoxelGrid,
    before: (&RadioField, &SinrField),
    after: (&RadioField, &SinrField),
    thresholds: &CoverageThresholds,
    mask: Option<&[bool]>,
) -> Result<CompareReport> {
    let b = coverage_ratios(grid, before.0, before.1, thresholds, mask)?;
    let a = coverage_ratios(grid, after.0, after.1, thresholds, mask)?;
    let t = thresholds;
    let spec: [RowSpec; 5] = [
        ("rsrp_basic", Some(t.rsrp_basic_dbm), |r| r.rsrp_basic),
        ("rsrp_strict", Some(t.rsrp_strict_dbm), |r| r.rsrp_strict),
        ("sinr_basic", Some(t.sinr_basic_db), |r| r.sinr_basic),
        ("sinr_strict", Some(t.sinr_strict_db), |r| r.sinr_strict),
        ("joint_basic", None, |r| r.joint_basic),
    ];
    let rows = spec
        .iter()
        .map(|&(metric, threshold, get)| CompareRow {
            metric: metric.to_string(),
            threshold,
            before: get(&b.ratios),
            after: get(&a.ratios),
            delta: get(&a.ratios) - get(&b.ratios),
        })
        .collect();
    Ok(CompareReport {
        rows,
        before: b,
        after: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_voxel_grid, CylinderSpec};
    use crate::spectrum::RadioField;
    use crate::optimizer::BeamAssignment;
    use crate::interference::{build_sinr_field, NoiseModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> VoxelGrid {
        build_voxel_grid(&CylinderSpec {
            center_m: [0.0, 0.0],
            radius_m: 50.0,
            z_min_m: 0.0,
            z_max_m: 30.0,
            voxel_m: 10.0,
        })
        .unwrap()
    }

    /// Single-cell fields: SINR is RSRP minus the noise floor (-87 dBm).
    fn single_cell(values: Vec<f64>) -> (RadioField, SinrField) {
        let field = RadioField::from_sub_beams(
            vec![("C".into(), vec![values])],
            BeamAssignment::default(),
            0.0,
        )
        .unwrap();
        let sinr = build_sinr_field(&field, &NoiseModel::default(), 1.0).unwrap();
        (field, sinr)
    }

    #[test]
    fn strong_field_meets_everything() {
        let g = grid();
        let (f, s) = single_cell(vec![-70.0; g.count()]);
        let r = coverage_ratios(&g, &f, &s, &CoverageThresholds::default(), None).unwrap();
        assert_eq!(r.ratios.rsrp_basic, 1.0);
        assert_eq!(r.ratios.rsrp_strict, 1.0);
        assert_eq!(r.ratios.sinr_basic, 1.0);
        assert_eq!(r.ratios.sinr_strict, 1.0);
    }

    #[test]
    fn half_and_half() {
        let g = grid();
        let n = g.count();
        assert_eq!(n % 2, 0);
        let v = (0..n).map(|i| if i % 2 == 0 { -90.0 } else { -80.0 }).collect();
        let (f, s) = single_cell(v);
        let r = coverage_ratios(&g, &f, &s, &CoverageThresholds::default(), None).unwrap();
        assert_eq!(r.ratios.rsrp_basic, 1.0);
        assert_eq!(r.ratios.rsrp_strict, 0.5);
    }

    #[test]
    fn random_fields_match_recount_and_orderings() {
        let g = grid();
        let t = CoverageThresholds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let v: Vec<f64> = (0..g.count()).map(|_| rng.random_range(-100.0..-75.0)).collect();
            let (f, s) = single_cell(v.clone());
            let r = coverage_ratios(&g, &f, &s, &t, None).unwrap();
            let n = v.len() as f64;
            let count = |p: &dyn Fn(f64) -> bool| v.iter().filter(|&&x| p(x)).count() as f64 / n;
            assert_eq!(r.ratios.rsrp_basic, count(&|x| x >= -95.0));
            assert_eq!(r.ratios.rsrp_strict, count(&|x| x >= -85.0));
            assert_eq!(r.ratios.sinr_basic, count(&|x| x + 87.0 >= -3.0));
            assert!(r.ratios.rsrp_strict <= r.ratios.rsrp_basic);
            assert!(r.ratios.sinr_strict <= r.ratios.sinr_basic);
            assert!(r.ratios.joint_basic <= r.ratios.rsrp_basic.min(r.ratios.sinr_basic));
            let weighted: f64 = r
                .layers
                .iter()
                .map(|l| l.ratios.rsrp_strict * l.counts.total as f64)
                .sum::<f64>()
                / n;
            assert!((weighted - r.ratios.rsrp_strict).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_and_dimension_errors() {
        let g = grid();
        let (f, s) = single_cell(vec![-90.0; g.count()]);
        let t = CoverageThresholds::default();
        let none = vec![false; g.count()];
        assert!(matches!(
            coverage_ratios(&g, &f, &s, &t, Some(&none)),
            Err(TwinError::EmptySet(_))
        ));
        assert!(matches!(
            coverage_ratios(&g, &f, &s, &t, Some(&[true])),
            Err(TwinError::DimensionMismatch(_))
        ));
        let mut first = none.clone();
        first[0] = true;
        let r = coverage_ratios(&g, &f, &s, &t, Some(&first)).unwrap();
        assert_eq!(r.counts.total, 1);
        assert!(r.masked);
    }

    #[test]
    fn heatmap_offsets_and_layers() {
        let g = grid();
        let before: Vec<f64> = (0..g.count()).map(|i| i as f64).collect();
        let same = difference_heatmap(&g, &before, &before, 15.0).unwrap();
        assert!(same.points.iter().all(|p| p.delta_db == 0.0));
        assert_eq!(same.layer, 1);
        let after: Vec<f64> = before.iter().map(|v| v + 3.0).collect();
        let h = difference_heatmap(&g, &before, &after, 15.0).unwrap();
        assert!(h.points.iter().all(|p| p.delta_db == 3.0));
        assert_eq!(h.points.len(), g.layer_voxels(1).len());
        assert!(matches!(
            difference_heatmap(&g, &before, &after, 450.0),
            Err(TwinError::UnknownLayer(_))
        ));
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("x_m,y_m,delta_db\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",3.0000"));
    }

    #[test]
    fn compare_identical_and_dominating() {
        let g = grid();
        let t = CoverageThresholds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..g.count()).map(|_| rng.random_range(-100.0..-75.0)).collect();
        let (f, s) = single_cell(v.clone());
        let same = compare_report(&g, (&f, &s), (&f, &s), &t, None).unwrap();
        assert!(same.rows.iter().all(|r| r.delta == 0.0));
        let (f2, s2) = single_cell(v.iter().map(|x| x + 4.0).collect());
        let up = compare_report(&g, (&f, &s), (&f2, &s2), &t, None).unwrap();
        assert!(up.rows.iter().all(|r| r.delta >= 0.0));
        let strict = up.row("rsrp_strict").unwrap();
        let recount = |xs: &[f64]| xs.iter().filter(|&&x| x >= -85.0).count() as f64 / xs.len() as f64;
        let shifted: Vec<f64> = v.iter().map(|x| x + 4.0).collect();
        assert_eq!(strict.before, recount(&v));
        assert_eq!(strict.after, recount(&shifted));
        assert_eq!(up.rows.len(), 5);
        assert!(same.to_json_string().contains("\"rsrp_strict\""));
    }
}
