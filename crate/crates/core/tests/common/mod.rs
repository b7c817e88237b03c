#![allow(dead_code)]

use std::path::PathBuf;

use lacn_twin::antenna::{Orientation, Pattern};
use lacn_twin::scene::{Cell, RadioConstants, Site, SteeringBounds, SubBeam};
use lacn_twin::{CoverageThresholds, CylinderSpec, SceneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Shape of a randomly generated scene. Every cell sits on its own site
/// outside the airspace, facing its center.
#[derive(Clone, Debug)]
pub struct RandomScene {
    pub cells: usize,
    pub beams_per_cell: usize,
    pub radius_m: f64,
    pub height_m: f64,
    pub voxel_m: f64,
    /// Azimuth candidates are `baseline + k * az_step` for `|k| <= az_steps`.
    pub az_steps: u32,
    pub az_step_deg: f64,
    /// Tilt candidates span `tilt_steps` lattice steps above the baseline.
    pub tilt_steps: u32,
    pub tilt_step_deg: f64,
    pub tx_power_dbm: [f64; 2],
}

impl RandomScene {
    /// ~10^3 voxels, six cells.
    pub fn thousand_voxels(cells: usize, beams_per_cell: usize) -> Self {
        RandomScene {
            cells,
            beams_per_cell,
            radius_m: 60.0,
            height_m: 90.0,
            voxel_m: 10.0,
            az_steps: 2,
            az_step_deg: 10.0,
            tilt_steps: 2,
            tilt_step_deg: 10.0,
            tx_power_dbm: [-30.0, -5.0],
        }
    }

    /// 2 cells x 2 sub-beams x 3 candidates over at most 300 voxels.
    pub fn oracle_sized() -> Self {
        RandomScene {
            cells: 2,
            beams_per_cell: 2,
            radius_m: 40.0,
            height_m: 50.0,
            voxel_m: 10.0,
            az_steps: 1,
            az_step_deg: 15.0,
            tilt_steps: 0,
            tilt_step_deg: 3.0,
            tx_power_dbm: [-30.0, -10.0],
        }
    }

    pub fn build(&self, seed: u64) -> SceneConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sites = (0..self.cells)
            .map(|c| {
                let bearing: f64 = rng.random_range(0.0..360.0);
                let dist = self.radius_m + rng.random_range(20.0..150.0);
                let (s, co) = bearing.to_radians().sin_cos();
                let position_m = [dist * s, dist * co, rng.random_range(15.0..35.0)];
                // face the airspace axis
                let facing = (bearing + 180.0) % 360.0;
                let sub_beams = (0..self.beams_per_cell)
                    .map(|_| {
                        let az = (facing + rng.random_range(-40.0..40.0)).round();
                        let tilt = rng.random_range(0..4) as f64 * 5.0;
                        let half = self.az_steps as f64 * self.az_step_deg;
                        SubBeam {
                            pattern: Pattern::default(),
                            bounds: SteeringBounds {
                                azimuth_deg: [az - half, az + half],
                                tilt_deg: [
                                    tilt,
                                    tilt + self.tilt_steps as f64 * self.tilt_step_deg,
                                ],
                            },
                            baseline: Orientation::new(az, tilt).unwrap(),
                            candidate_step: [self.az_step_deg, self.tilt_step_deg],
                        }
                    })
                    .collect();
                Site {
                    id: format!("S{c}"),
                    position_m,
                    cells: vec![Cell {
                        id: format!("C{c}"),
                        tx_power_dbm: rng
                            .random_range(self.tx_power_dbm[0]..self.tx_power_dbm[1]),
                        sub_beam_count: None,
                        sub_beams,
                    }],
                }
            })
            .collect();
        let scene = SceneConfig {
            airspace: CylinderSpec {
                center_m: [0.0, 0.0],
                radius_m: self.radius_m,
                z_min_m: 0.0,
                z_max_m: self.height_m,
                voxel_m: self.voxel_m,
            },
            radio: RadioConstants {
                frequency_hz: 3.5e9,
                bandwidth_hz: 100e6,
                noise_figure_db: 7.0,
                activity_factor: 1.0,
            },
            thresholds: CoverageThresholds::default(),
            sites,
        };
        scene.validate().expect("generated scene is valid");
        scene
    }
}
