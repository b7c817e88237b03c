use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::antenna::{normalize_azimuth, Orientation, Pattern, TablePattern};
use crate::error::{schema_error, Result, TwinError};
use crate::metrics::CoverageThresholds;
use crate::scene::grid::CylinderSpec;

/// Physical network description: sites, cells, sub-beams and the airspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub airspace: CylinderSpec,
    pub radio: RadioConstants,
    #[serde(default)]
    pub thresholds: CoverageThresholds,
    pub sites: Vec<Site>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConstants {
    pub frequency_hz: f64,
    #[serde(default = "default_bandwidth_hz")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_noise_figure_db")]
    pub noise_figure_db: f64,
    /// Fraction of full-load interference assumed from non-serving cells.
    #[serde(default = "default_activity_factor")]
    pub activity_factor: f64,
}

fn default_bandwidth_hz() -> f64 {
    100e6
}
fn default_noise_figure_db() -> f64 {
    7.0
}
fn default_activity_factor() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    pub id: String,
    /// Transmitter position in the local ENU frame (meters).
    pub position_m: [f64; 3],
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub id: String,
    /// Per-sub-beam EIRP reference power; pattern gain is added on top.
    pub tx_power_dbm: f64,
    /// Declared number of sub-beams, checked against `sub_beams` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_beam_count: Option<usize>,
    pub sub_beams: Vec<SubBeam>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubBeam {
    #[serde(default)]
    pub pattern: Pattern,
    pub bounds: SteeringBounds,
    pub baseline: Orientation,
    /// Candidate lattice spacing `[azimuth, tilt]` in degrees.
    #[serde(default = "default_candidate_step")]
    pub candidate_step: [f64; 2],
}

fn default_candidate_step() -> [f64; 2] {
    [5.0, 3.0]
}

/// Closed steering ranges. The azimuth range may cross north, e.g.
/// `[-30, 30]`, and spans at most 360 degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringBounds {
    pub azimuth_deg: [f64; 2],
    pub tilt_deg: [f64; 2],
}

const ANGLE_EPS: f64 = 1e-9;

impl SteeringBounds {
    pub fn contains(&self, o: Orientation) -> bool {
        let [az_min, az_max] = self.azimuth_deg;
        let [t_min, t_max] = self.tilt_deg;
        let tilt_ok = o.tilt_deg() >= t_min - ANGLE_EPS && o.tilt_deg() <= t_max + ANGLE_EPS;
        // unwrap the azimuth into [az_min, az_min + 360)
        let unwrapped = az_min + normalize_azimuth(o.azimuth_deg() - az_min);
        let az_ok = unwrapped <= az_max + ANGLE_EPS
            || (unwrapped - 360.0 >= az_min - ANGLE_EPS && unwrapped - 360.0 <= az_max);
        tilt_ok && az_ok
    }

    fn validate(&self, field: &str) -> Result<()> {
        let [az_min, az_max] = self.azimuth_deg;
        let [t_min, t_max] = self.tilt_deg;
        if !(az_min.is_finite() && az_max.is_finite() && az_min <= az_max) {
            return Err(TwinError::validation(
                format!("{field}.azimuth_deg"),
                format!("min {az_min} must not exceed max {az_max}"),
            ));
        }
        if az_max - az_min > 360.0 {
            return Err(TwinError::validation(
                format!("{field}.azimuth_deg"),
                "range spans more than 360 degrees",
            ));
        }
        if !(t_min.is_finite() && t_max.is_finite() && t_min <= t_max) {
            return Err(TwinError::validation(
                format!("{field}.tilt_deg"),
                format!("min {t_min} must not exceed max {t_max}"),
            ));
        }
        if t_min < -90.0 || t_max > 90.0 {
            return Err(TwinError::validation(
                format!("{field}.tilt_deg"),
                "must lie within [-90, 90]",
            ));
        }
        Ok(())
    }
}

impl SubBeam {
    /// Candidate steering lattice, azimuth-major, starting at the lower
    /// bounds. A full-circle azimuth range does not repeat its start point.
    pub fn candidate_lattice(&self) -> Vec<Orientation> {
        let [az_min, az_max] = self.bounds.azimuth_deg;
        let [t_min, t_max] = self.bounds.tilt_deg;
        let [az_step, t_step] = self.candidate_step;
        let full_circle = az_max - az_min >= 360.0 - ANGLE_EPS;
        let axis = |lo: f64, hi: f64, step: f64, exclusive_end: bool| {
            let mut values = Vec::new();
            let mut i = 0u32;
            loop {
                let v = lo + f64::from(i) * step;
                let past = if exclusive_end {
                    v >= hi - ANGLE_EPS
                } else {
                    v > hi + ANGLE_EPS
                };
                if past {
                    break;
                }
                values.push(v.min(hi));
                i += 1;
            }
            values
        };
        let azimuths = axis(az_min, az_max, az_step, full_circle);
        let tilts = axis(t_min, t_max, t_step, false);
        let mut out = Vec::with_capacity(azimuths.len() * tilts.len());
        for &az in &azimuths {
            for &t in &tilts {
                // both axes stay inside validated bounds
                out.push(Orientation::new(az, t).expect("lattice angle within bounds"));
            }
        }
        out
    }

    fn validate(&self, field: &str) -> Result<()> {
        match &self.pattern {
            Pattern::Parametric(p) => p.validate(&format!("{field}.pattern"))?,
            Pattern::Table { .. } => {
                if !self.pattern.is_loaded() {
                    return Err(TwinError::validation(
                        format!("{field}.pattern"),
                        "table pattern was not loaded",
                    ));
                }
            }
        }
        self.bounds.validate(&format!("{field}.bounds"))?;
        let [az_step, t_step] = self.candidate_step;
        if !(az_step > 0.0 && t_step > 0.0 && az_step.is_finite() && t_step.is_finite()) {
            return Err(TwinError::validation(
                format!("{field}.candidate_step"),
                "steps must be positive",
            ));
        }
        if !self.bounds.contains(self.baseline) {
            return Err(TwinError::validation(
                format!("{field}.baseline"),
                format!(
                    "({}, {}) lies outside the steering bounds",
                    self.baseline.azimuth_deg(),
                    self.baseline.tilt_deg()
                ),
            ));
        }
        Ok(())
    }
}

/// Position of one sub-beam inside a scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BeamRef {
    pub site: usize,
    pub cell: usize,
    pub beam: usize,
}

impl SceneConfig {
    /// Parses and validates a scene document. Table patterns are resolved
    /// relative to `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut scene: SceneConfig = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        scene.load_tables(base_dir)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    fn load_tables(&mut self, base_dir: &Path) -> Result<()> {
        for site in &mut self.sites {
            for cell in &mut site.cells {
                for beam in &mut cell.sub_beams {
                    if let Pattern::Table { path, table } = &mut beam.pattern {
                        let full = base_dir.join(&*path);
                        *table = Some(Arc::new(TablePattern::from_path(&full)?));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.airspace.validate("airspace")?;
        let r = &self.radio;
        if !(r.frequency_hz > 0.0 && r.frequency_hz.is_finite()) {
            return Err(TwinError::validation(
                "radio.frequency_hz",
                "must be positive",
            ));
        }
        if !(r.bandwidth_hz > 0.0 && r.bandwidth_hz.is_finite()) {
            return Err(TwinError::validation(
                "radio.bandwidth_hz",
                "must be positive",
            ));
        }
        if !(r.noise_figure_db >= 0.0 && r.noise_figure_db.is_finite()) {
            return Err(TwinError::validation(
                "radio.noise_figure_db",
                "must be non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&r.activity_factor) {
            return Err(TwinError::validation(
                "radio.activity_factor",
                "must lie in [0, 1]",
            ));
        }
        self.thresholds.validate()?;
        if self.sites.is_empty() {
            return Err(TwinError::validation("sites", "at least one site is required"));
        }

        let mut site_ids = HashSet::new();
        let mut cell_ids = HashSet::new();
        for (si, site) in self.sites.iter().enumerate() {
            let field = format!("sites[{si}]");
            if !site_ids.insert(site.id.as_str()) {
                return Err(TwinError::validation(
                    format!("{field}.id"),
                    format!("duplicate site id {}", site.id),
                ));
            }
            if !site.position_m.iter().all(|v| v.is_finite()) || site.position_m[2] < 0.0 {
                return Err(TwinError::validation(
                    format!("{field}.position_m"),
                    "must be finite with z >= 0",
                ));
            }
            if site.cells.is_empty() {
                return Err(TwinError::validation(
                    format!("{field}.cells"),
                    "site has no cells",
                ));
            }
            for (ci, cell) in site.cells.iter().enumerate() {
                let field = format!("{field}.cells[{ci}]");
                if !cell_ids.insert(cell.id.as_str()) {
                    return Err(TwinError::validation(
                        format!("{field}.id"),
                        format!("duplicate cell id {}", cell.id),
                    ));
                }
                if !cell.tx_power_dbm.is_finite() {
                    return Err(TwinError::validation(
                        format!("{field}.tx_power_dbm"),
                        "must be finite",
                    ));
                }
                if cell.sub_beams.is_empty() {
                    return Err(TwinError::validation(
                        format!("{field}.sub_beams"),
                        "cell has no sub-beams",
                    ));
                }
                if let Some(n) = cell.sub_beam_count {
                    if n != cell.sub_beams.len() {
                        return Err(TwinError::validation(
                            format!("{field}.sub_beams"),
                            format!("declared {n} sub-beams, found {}", cell.sub_beams.len()),
                        ));
                    }
                }
                for (bi, beam) in cell.sub_beams.iter().enumerate() {
                    beam.validate(&format!("{field}.sub_beams[{bi}]"))?;
                }
            }
        }
        Ok(())
    }

    /// All sub-beams in scene order.
    pub fn beams(&self) -> impl Iterator<Item = BeamRef> + '_ {
        self.sites.iter().enumerate().flat_map(|(si, site)| {
            site.cells.iter().enumerate().flat_map(move |(ci, cell)| {
                (0..cell.sub_beams.len()).map(move |bi| BeamRef {
                    site: si,
                    cell: ci,
                    beam: bi,
                })
            })
        })
    }

    pub fn sub_beam_total(&self) -> usize {
        self.sites
            .iter()
            .flat_map(|s| &s.cells)
            .map(|c| c.sub_beams.len())
            .sum()
    }

    pub fn site(&self, r: BeamRef) -> &Site {
        &self.sites[r.site]
    }

    pub fn cell(&self, r: BeamRef) -> &Cell {
        &self.sites[r.site].cells[r.cell]
    }

    pub fn sub_beam(&self, r: BeamRef) -> &SubBeam {
        &self.sites[r.site].cells[r.cell].sub_beams[r.beam]
    }

    /// Locates a cell by id as `(site index, cell index)`.
    pub fn find_cell(&self, cell_id: &str) -> Option<(usize, usize)> {
        self.sites.iter().enumerate().find_map(|(si, s)| {
            s.cells
                .iter()
                .position(|c| c.id == cell_id)
                .map(|ci| (si, ci))
        })
    }

    /// Cell ids in lexicographic order.
    pub fn sorted_cell_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .sites
            .iter()
            .flat_map(|s| s.cells.iter().map(|c| c.id.as_str()))
            .collect();
        ids.sort_unstable();
        ids
    }
}

/// Reads, parses and validates a scene file.
pub fn load_scene(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| TwinError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    SceneConfig::from_json_str(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beam_json(baseline: [f64; 2]) -> serde_json::Value {
        serde_json::json!({
            "bounds": {"azimuth_deg": [-30.0, 30.0], "tilt_deg": [0.0, 45.0]},
            "baseline": baseline,
        })
    }

    fn scene_json() -> serde_json::Value {
        serde_json::json!({
            "airspace": {"center_m": [0.0, 0.0], "radius_m": 500.0, "z_min_m": 0.0, "z_max_m": 300.0, "voxel_m": 25.0},
            "radio": {"frequency_hz": 3.5e9},
            "sites": [
                {"id": "A", "position_m": [0.0, -400.0, 30.0], "cells": [
                    {"id": "A1", "tx_power_dbm": 10.0, "sub_beams": [beam_json([0.0, 0.0]), beam_json([-20.0, 10.0])]}
                ]},
                {"id": "B", "position_m": [0.0, 400.0, 30.0], "cells": [
                    {"id": "B1", "tx_power_dbm": 10.0, "sub_beams": [beam_json([10.0, 0.0])]}
                ]}
            ]
        })
    }

    fn parse(v: &serde_json::Value) -> Result<SceneConfig> {
        SceneConfig::from_json_str(&v.to_string(), Path::new("."))
    }

    #[test]
    fn parses_with_defaults() {
        let s = parse(&scene_json()).unwrap();
        assert_eq!(s.sub_beam_total(), 3);
        assert_eq!(s.radio.bandwidth_hz, 100e6);
        assert_eq!(s.radio.noise_figure_db, 7.0);
        assert_eq!(s.thresholds, CoverageThresholds::default());
        let b = s.sub_beam(BeamRef { site: 0, cell: 0, beam: 1 });
        assert_eq!(b.baseline.azimuth_deg(), 340.0);
        assert_eq!(b.candidate_step, [5.0, 3.0]);
        assert_eq!(b.pattern, Pattern::default());
        assert_eq!(s.find_cell("B1"), Some((1, 0)));
        assert_eq!(s.sorted_cell_ids(), ["A1", "B1"]);
    }

    #[test]
    fn serialization_round_trips() {
        let s = parse(&scene_json()).unwrap();
        let again = SceneConfig::from_json_str(&s.to_json_string(), Path::new(".")).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn duplicate_cell_id_is_named() {
        let mut v = scene_json();
        v["sites"][1]["cells"][0]["id"] = "A1".into();
        match parse(&v) {
            Err(TwinError::Validation { field, message }) => {
                assert_eq!(field, "sites[1].cells[0].id");
                assert!(message.contains("A1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverted_tilt_bounds_rejected() {
        let mut v = scene_json();
        v["sites"][0]["cells"][0]["sub_beams"][0]["bounds"]["tilt_deg"] = serde_json::json!([40.0, 10.0]);
        match parse(&v) {
            Err(TwinError::Validation { field, .. }) => {
                assert_eq!(field, "sites[0].cells[0].sub_beams[0].bounds.tilt_deg")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn baseline_outside_bounds_rejected() {
        let mut v = scene_json();
        v["sites"][0]["cells"][0]["sub_beams"][0]["baseline"] = serde_json::json!([90.0, 0.0]);
        assert!(matches!(parse(&v), Err(TwinError::Validation { .. })));
    }

    #[test]
    fn schema_error_reports_field_and_line() {
        let mut v = scene_json();
        v["radio"]["frequency_hz"] = "fast".into();
        let text = serde_json::to_string_pretty(&v).unwrap();
        match SceneConfig::from_json_str(&text, Path::new(".")) {
            Err(TwinError::Schema { field, line, .. }) => {
                assert_eq!(field, "radio.frequency_hz");
                assert!(line > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn declared_sub_beam_count_checked() {
        let mut v = scene_json();
        v["sites"][0]["cells"][0]["sub_beam_count"] = 7.into();
        assert!(matches!(parse(&v), Err(TwinError::Validation { .. })));
        v["sites"][0]["cells"][0]["sub_beam_count"] = 2.into();
        assert!(parse(&v).is_ok());
    }

    #[test]
    fn invariant_violations() {
        let cases: Vec<(&str, serde_json::Value)> = vec![
            ("/radio/frequency_hz", 0.0.into()),
            ("/radio/bandwidth_hz", (-1.0).into()),
            ("/airspace/radius_m", 0.0.into()),
            ("/sites/0/position_m", serde_json::json!([0.0, 0.0, -1.0])),
            ("/sites/0/cells/0/sub_beams/0/candidate_step", serde_json::json!([0.0, 3.0])),
            ("/sites", serde_json::json!([])),
        ];
        for (ptr, value) in cases {
            let mut v = scene_json();
            let (parent, key) = ptr.rsplit_once('/').unwrap();
            v.pointer_mut(parent)
                .and_then(|p| p.as_object_mut())
                .unwrap()
                .insert(key.to_string(), value);
            assert!(
                matches!(parse(&v), Err(TwinError::Validation { .. })),
                "{ptr} accepted"
            );
        }
    }

    #[test]
    fn bounds_across_north() {
        let b = SteeringBounds {
            azimuth_deg: [-30.0, 30.0],
            tilt_deg: [0.0, 10.0],
        };
        let o = |a, t| Orientation::new(a, t).unwrap();
        assert!(b.contains(o(350.0, 5.0)));
        assert!(b.contains(o(30.0, 10.0)));
        assert!(b.contains(o(330.0, 0.0)));
        assert!(!b.contains(o(31.0, 5.0)));
        assert!(!b.contains(o(180.0, 5.0)));
        assert!(!b.contains(o(0.0, 11.0)));
        let b = SteeringBounds {
            azimuth_deg: [100.0, 120.0],
            tilt_deg: [0.0, 0.0],
        };
        assert!(b.contains(o(120.0, 0.0)));
        assert!(!b.contains(o(99.0, 0.0)));
    }

    #[test]
    fn candidate_lattice_shape() {
        let beam = SubBeam {
            pattern: Pattern::default(),
            bounds: SteeringBounds {
                azimuth_deg: [-10.0, 10.0],
                tilt_deg: [0.0, 7.0],
            },
            baseline: Orientation::new(0.0, 0.0).unwrap(),
            candidate_step: [5.0, 3.0],
        };
        let lattice = beam.candidate_lattice();
        // 5 azimuths x tilts {0, 3, 6}
        assert_eq!(lattice.len(), 15);
        assert_eq!(lattice[0], Orientation::new(350.0, 0.0).unwrap());
        assert_eq!(lattice[1], Orientation::new(350.0, 3.0).unwrap());
        assert!(lattice.iter().all(|&o| beam.bounds.contains(o)));

        let full = SubBeam {
            bounds: SteeringBounds {
                azimuth_deg: [0.0, 360.0],
                tilt_deg: [0.0, 0.0],
            },
            candidate_step: [90.0, 1.0],
            ..beam
        };
        assert_eq!(full.candidate_lattice().len(), 4);
    }
}
