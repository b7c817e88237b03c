//! Network and airspace geometry.

mod config;
mod grid;

pub use config::{
    load_scene, BeamRef, Cell, RadioConstants, SceneConfig, Site, SteeringBounds, SubBeam,
};
pub use grid::{build_voxel_grid, CylinderSpec, VoxelGrid};
