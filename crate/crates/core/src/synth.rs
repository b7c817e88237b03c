//! Synthetic measurement generation along parameterized flight paths.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{schema_error, Result, TwinError};
use crate::optimizer::BeamAssignment;
use crate::scene::{CylinderSpec, SceneConfig};
use crate::spectrum::predict_at;
use crate::validation::{MeasurementSet, Sample};

/// Segments per helix turn when tracing the path.
const HELIX_SEGMENTS_PER_TURN: usize = 360;

/// Upper bound on both path vertices and emitted sample points.
pub const MAX_TRAJECTORY_POINTS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlightPattern {
    /// Circle around `center_m` while climbing linearly.
    Helix {
        center_m: [f64; 2],
        radius_m: f64,
        z_start_m: f64,
        z_end_m: f64,
        turns: f64,
    },
    /// Parallel east-west legs `spacing_m` apart covering a square of
    /// half-width `half_extent_m`. Without interleaving the full pattern is
    /// flown at each altitude in turn. With interleaving, pass `p` flies leg
    /// `i` at altitude `(i + p) % n`, so every altitude appears throughout
    /// the trajectory.
    Lawnmower {
        center_m: [f64; 2],
        half_extent_m: f64,
        spacing_m: f64,
        altitudes_m: Vec<f64>,
        #[serde(default)]
        interleave: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSelection {
    /// One sample per point, for the strongest cell.
    #[default]
    Serving,
    /// One sample per point and cell.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub pattern: FlightPattern,
    /// Number of points spread evenly along the path.
    #[serde(default)]
    pub n_points: Option<usize>,
    /// Spacing of points along the path; alternative to `n_points`.
    #[serde(default)]
    pub step_m: Option<f64>,
    #[serde(default)]
    pub cells: CellSelection,
}

impl TrajectorySpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: TrajectorySpec = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TwinError::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |field: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(TwinError::validation(field, "must be finite"))
            }
        };
        match &self.pattern {
            FlightPattern::Helix {
                center_m,
                radius_m,
                z_start_m,
                z_end_m,
                turns,
            } => {
                for (f, v) in [
                    ("pattern.center_m", center_m[0]),
                    ("pattern.center_m", center_m[1]),
                    ("pattern.z_start_m", *z_start_m),
                    ("pattern.z_end_m", *z_end_m),
                ] {
                    finite(f, v)?;
                }
                if !(*radius_m > 0.0 && radius_m.is_finite()) {
                    return Err(TwinError::validation("pattern.radius_m", "must be positive"));
                }
                if !(*turns > 0.0 && turns.is_finite()) {
                    return Err(TwinError::validation("pattern.turns", "must be positive"));
                }
                if turns * HELIX_SEGMENTS_PER_TURN as f64 > MAX_TRAJECTORY_POINTS as f64 {
                    return Err(TwinError::validation("pattern.turns", "path is too long"));
                }
            }
            FlightPattern::Lawnmower {
                center_m,
                half_extent_m,
                spacing_m,
                altitudes_m,
                ..
            } => {
                finite("pattern.center_m", center_m[0])?;
                finite("pattern.center_m", center_m[1])?;
                if !(*half_extent_m > 0.0 && half_extent_m.is_finite()) {
                    return Err(TwinError::validation("pattern.half_extent_m", "must be positive"));
                }
                if !(*spacing_m > 0.0 && spacing_m.is_finite()) {
                    return Err(TwinError::validation("pattern.spacing_m", "must be positive"));
                }
                if altitudes_m.is_empty() {
                    return Err(TwinError::validation("pattern.altitudes_m", "must not be empty"));
                }
                for v in altitudes_m {
                    finite("pattern.altitudes_m", *v)?;
                }
                let vertices = 2.0 * (2.0 * half_extent_m / spacing_m + 1.0) * altitudes_m.len() as f64;
                if vertices > MAX_TRAJECTORY_POINTS as f64 {
                    return Err(TwinError::validation("pattern.spacing_m", "too many legs"));
                }
            }
        }
        let count = match (self.n_points, self.step_m) {
            (Some(n), None) if n > 0 => n as f64,
            (None, Some(s)) if s > 0.0 && s.is_finite() => self.length_m() / s,
            _ => {
                return Err(TwinError::validation(
                    "n_points",
                    "exactly one of n_points (> 0) or step_m (> 0) is required",
                ))
            }
        };
        // also rejects a non-finite path length
        if !(count <= MAX_TRAJECTORY_POINTS as f64) {
            return Err(TwinError::validation(
                "n_points",
                format!("at most {MAX_TRAJECTORY_POINTS} points per trajectory"),
            ));
        }
        Ok(())
    }

    fn length_m(&self) -> f64 {
        segment_lengths(&self.waypoints()).iter().sum()
    }

    fn waypoints(&self) -> Vec<[f64; 3]> {
        match &self.pattern {
            FlightPattern::Helix {
                center_m,
                radius_m,
                z_start_m,
                z_end_m,
                turns,
            } => {
                let segments = ((turns * HELIX_SEGMENTS_PER_TURN as f64).ceil() as usize).max(1);
                (0..=segments)
                    .map(|k| {
                        let t = k as f64 / segments as f64;
                        let phi = std::f64::consts::TAU * turns * t;
                        [
                            center_m[0] + radius_m * phi.sin(),
                            center_m[1] + radius_m * phi.cos(),
                            z_start_m + (z_end_m - z_start_m) * t,
                        ]
                    })
                    .collect()
            }
            FlightPattern::Lawnmower {
                center_m,
                half_extent_m,
                spacing_m,
                altitudes_m,
                interleave,
            } => {
                let legs = (2.0 * half_extent_m / spacing_m + 1e-9).floor() as usize + 1;
                let n_alt = altitudes_m.len();
                let passes: Vec<Vec<f64>> = if *interleave {
                    (0..n_alt)
                        .map(|p| (0..legs).map(|i| altitudes_m[(i + p) % n_alt]).collect())
                        .collect()
                } else {
                    altitudes_m.iter().map(|&z| vec![z; legs]).collect()
                };
                let mut pts = Vec::new();
                let mut eastward = true;
                for pass in passes {
                    for (i, z) in pass.into_iter().enumerate() {
                        let y = center_m[1] - half_extent_m + i as f64 * spacing_m;
                        let (x0, x1) = if eastward {
                            (center_m[0] - half_extent_m, center_m[0] + half_extent_m)
                        } else {
                            (center_m[0] + half_extent_m, center_m[0] - half_extent_m)
                        };
                        pts.push([x0, y, z]);
                        pts.push([x1, y, z]);
                        eastward = !eastward;
                    }
                }
                pts
            }
        }
    }

    /// Sample positions along the path, in flight order.
    pub fn points(&self) -> Vec<[f64; 3]> {
        let wp = self.waypoints();
        let seg_len = segment_lengths(&wp);
        let total: f64 = seg_len.iter().sum();
        let stations: Vec<f64> = match (self.n_points, self.step_m) {
            (Some(1), _) => vec![0.0],
            (Some(n), _) => (0..n).map(|k| total * k as f64 / (n - 1) as f64).collect(),
            (None, Some(step)) => {
                let n = (total / step + 1e-9).floor() as usize;
                (0..=n).map(|k| k as f64 * step).collect()
            }
            (None, None) => unreachable!("validated"),
        };
        let mut out = Vec::with_capacity(stations.len());
        let mut seg = 0;
        let mut start = 0.0;
        for s in stations {
            while seg + 1 < seg_len.len() && s > start + seg_len[seg] {
                start += seg_len[seg];
                seg += 1;
            }
            if seg_len.is_empty() {
                out.push(wp[0]);
                continue;
            }
            let t = if seg_len[seg] > 0.0 {
                ((s - start) / seg_len[seg]).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (a, b) = (wp[seg], wp[seg + 1]);
            out.push([
                a[0] + t * (b[0] - a[0]),
                a[1] + t * (b[1] - a[1]),
                a[2] + t * (b[2] - a[2]),
            ]);
        }
        out
    }
}

fn segment_lengths(wp: &[[f64; 3]]) -> Vec<f64> {
    wp.windows(2)
        .map(|w| {
            let d = [w[1][0] - w[0][0], w[1][1] - w[0][1], w[1][2] - w[0][2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .collect()
}

/// Moves a point onto the cylinder if it lies outside. Returns whether it
/// was moved.
fn clip_to_airspace(p: &mut [f64; 3], spec: &CylinderSpec) -> bool {
    let mut moved = false;
    let dx = p[0] - spec.center_m[0];
    let dy = p[1] - spec.center_m[1];
    let r = (dx * dx + dy * dy).sqrt();
    if r > spec.radius_m {
        let k = spec.radius_m / r;
        p[0] = spec.center_m[0] + dx * k;
        p[1] = spec.center_m[1] + dy * k;
        // guard against rounding pushing the point back outside
        let (ex, ey) = (p[0] - spec.center_m[0], p[1] - spec.center_m[1]);
        if ex * ex + ey * ey > spec.radius_m * spec.radius_m {
            p[0] = spec.center_m[0] + dx * k * (1.0 - 1e-12);
            p[1] = spec.center_m[1] + dy * k * (1.0 - 1e-12);
        }
        moved = true;
    }
    if p[2] < spec.z_min_m || p[2] > spec.z_max_m {
        p[2] = p[2].clamp(spec.z_min_m, spec.z_max_m);
        moved = true;
    }
    moved
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub noise_sigma_db: f64,
    pub seed: u64,
    /// Added to every prediction before noise.
    pub offset_db: f64,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub set: MeasurementSet,
    /// Noise-free values matching `set` sample by sample.
    pub predicted_dbm: Vec<f64>,
    /// Path points moved onto the airspace boundary.
    pub clipped_points: usize,
}

/// Samples twin predictions along a trajectory and adds seeded Gaussian
/// noise.
pub fn synthesize(
    scene: &SceneConfig,
    assignment: &BeamAssignment,
    trajectory: &TrajectorySpec,
    config: &SynthConfig,
) -> Result<SynthOutput> {
    trajectory.validate()?;
    if !(config.noise_sigma_db >= 0.0 && config.noise_sigma_db.is_finite()) {
        return Err(TwinError::InvalidArgument(format!(
            "noise sigma {} must be finite and non-negative",
            config.noise_sigma_db
        )));
    }
    let mut points = trajectory.points();
    let clipped = points
        .iter_mut()
        .map(|p| clip_to_airspace(p, &scene.airspace))
        .filter(|&m| m)
        .count();
    if clipped > 0 {
        log::warn!("{clipped} trajectory points left the airspace and were clipped to its boundary");
    }

    let cells = scene.sorted_cell_ids();
    let queries: Vec<([f64; 3], &str)> = points
        .iter()
        .flat_map(|&p| cells.iter().map(move |&c| (p, c)))
        .collect();
    let values = predict_at(scene, assignment, config.offset_db, queries)?;

    let mut picked: Vec<([f64; 3], &str, f64)> = Vec::new();
    for (p, row) in points.iter().zip(values.chunks(cells.len())) {
        match trajectory.cells {
            CellSelection::All => {
                picked.extend(cells.iter().zip(row).map(|(&c, &v)| (*p, c, v)));
            }
            CellSelection::Serving => {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                picked.push((*p, cells[best], row[best]));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.noise_sigma_db)
        .map_err(|e| TwinError::InvalidArgument(e.to_string()))?;
    let mut samples = Vec::with_capacity(picked.len());
    let mut predicted = Vec::with_capacity(picked.len());
    for (i, (p, c, v)) in picked.into_iter().enumerate() {
        let noise = if config.noise_sigma_db > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        };
        predicted.push(v);
        samples.push(Sample {
            seq: i as u64,
            position_m: p,
            cell_id: c.to_string(),
            rsrp_dbm: v + noise,
        });
    }
    Ok(SynthOutput {
        set: MeasurementSet::new(samples, "synthetic")?,
        predicted_dbm: predicted,
        clipped_points: clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let t = TrajectorySpec::from_json_str(
            r#"{"pattern": {"kind": "helix", "center_m": [0, 0], "radius_m": 100,
                "z_start_m": 10, "z_end_m": 90, "turns": 2}, "n_points": 50}"#,
        )
        .unwrap();
        assert_eq!(t.points().len(), 50);
        assert_eq!(t.cells, CellSelection::Serving);
        assert!(TrajectorySpec::from_json_str(
            r#"{"pattern": {"kind": "helix", "center_m": [0, 0], "radius_m": 100,
                "z_start_m": 10, "z_end_m": 90, "turns": 2}, "n_points": 50, "step_m": 3}"#
        )
        .is_err());
        assert!(TrajectorySpec::from_json_str(r#"{"pattern": {"kind": "spiral"}, "n_points": 5}"#).is_err());
    }

    #[test]
    fn oversized_paths_rejected() {
        let helix = |turns: f64, tail: &str| {
            TrajectorySpec::from_json_str(&format!(
                r#"{{"pattern": {{"kind": "helix", "center_m": [0, 0], "radius_m": 100,
                    "z_start_m": 10, "z_end_m": 90, "turns": {turns}}}, {tail}}}"#
            ))
        };
        assert!(helix(1e9, r#""n_points": 5"#).is_err());
        assert!(helix(2.0, r#""n_points": 1000001"#).is_err());
        assert!(helix(2.0, r#""step_m": 1e-9"#).is_err());
        assert!(helix(2.0, r#""step_m": 1"#).is_ok());
        let mower = TrajectorySpec::from_json_str(
            r#"{"pattern": {"kind": "lawnmower", "center_m": [0, 0], "half_extent_m": 1e12,
                "spacing_m": 1, "altitudes_m": [10]}, "n_points": 5}"#,
        );
        assert!(mower.is_err());
    }

    #[test]
    fn helix_endpoints_and_radius() {
        let t = TrajectorySpec {
            pattern: FlightPattern::Helix {
                center_m: [10.0, -5.0],
                radius_m: 100.0,
                z_start_m: 20.0,
                z_end_m: 120.0,
                turns: 1.5,
            },
            n_points: Some(301),
            step_m: None,
            cells: CellSelection::Serving,
        };
        let pts = t.points();
        assert!((pts[0][2] - 20.0).abs() < 1e-9);
        assert!((pts[300][2] - 120.0).abs() < 1e-9);
        for p in &pts {
            let r = ((p[0] - 10.0).powi(2) + (p[1] + 5.0).powi(2)).sqrt();
            assert!((r - 100.0).abs() < 0.1, "{r}");
        }
    }

    #[test]
    fn lawnmower_interleaves_altitudes() {
        let t = TrajectorySpec {
            pattern: FlightPattern::Lawnmower {
                center_m: [0.0, 0.0],
                half_extent_m: 100.0,
                spacing_m: 50.0,
                altitudes_m: vec![10.0, 20.0, 30.0],
                interleave: true,
            },
            n_points: None,
            step_m: Some(10.0),
            cells: CellSelection::All,
        };
        let pts = t.points();
        // 5 legs per pass, 3 passes; each leg 200 m plus connectors
        assert!(pts.len() > 15 * 20);
        let third = pts.len() / 3;
        for chunk in [&pts[..third], &pts[third..2 * third], &pts[2 * third..]] {
            for z in [10.0, 20.0, 30.0] {
                assert!(chunk.iter().any(|p| (p[2] - z).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn clipping() {
        let spec = CylinderSpec {
            center_m: [0.0, 0.0],
            radius_m: 50.0,
            z_min_m: 0.0,
            z_max_m: 100.0,
            voxel_m: 10.0,
        };
        let mut p = [100.0, 0.0, 150.0];
        assert!(clip_to_airspace(&mut p, &spec));
        assert!((p[0] - 50.0).abs() < 1e-9 && p[2] == 100.0);
        let mut q = [10.0, 10.0, 10.0];
        assert!(!clip_to_airspace(&mut q, &spec));
    }
}
