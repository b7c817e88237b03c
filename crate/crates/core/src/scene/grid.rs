use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};

/// Vertical cylinder of airspace to be voxelized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderSpec {
    /// Axis position in the local ENU frame (meters).
    pub center_m: [f64; 2],
    pub radius_m: f64,
    pub z_min_m: f64,
    pub z_max_m: f64,
    /// Voxel edge length (meters).
    pub voxel_m: f64,
}

impl CylinderSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        let finite = self.center_m.iter().all(|v| v.is_finite())
            && self.z_min_m.is_finite()
            && self.z_max_m.is_finite();
        if !finite {
            return Err(TwinError::validation(field, "non-finite coordinate"));
        }
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return Err(TwinError::validation(
                format!("{field}.radius_m"),
                format!("{} must be positive", self.radius_m),
            ));
        }
        if !(self.z_max_m > self.z_min_m) {
            return Err(TwinError::validation(
                format!("{field}.z_max_m"),
                format!("{} must exceed z_min_m {}", self.z_max_m, self.z_min_m),
            ));
        }
        if !(self.voxel_m > 0.0 && self.voxel_m.is_finite()) {
            return Err(TwinError::validation(
                format!("{field}.voxel_m"),
                format!("{} must be positive", self.voxel_m),
            ));
        }
        Ok(())
    }

    /// Lattice dimensions `(nx, ny, nz)` of the bounding box.
    pub fn lattice_dims(&self) -> (usize, usize, usize) {
        let cells = |extent: f64| ((extent / self.voxel_m - 1e-9).ceil() as usize).max(1);
        let n = cells(2.0 * self.radius_m);
        (n, n, cells(self.z_max_m - self.z_min_m))
    }

    fn min_corner(&self) -> [f64; 3] {
        [
            self.center_m[0] - self.radius_m,
            self.center_m[1] - self.radius_m,
            self.z_min_m,
        ]
    }
}

/// Voxelized airspace: the centers of all lattice cells whose center lies
/// inside the cylinder, in z-major, then y, then x order.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    spec: CylinderSpec,
    dims: (usize, usize, usize),
    centers: Vec<[f64; 3]>,
    /// Dense lattice -> voxel index map; `u32::MAX` marks lattice cells
    /// outside the cylinder.
    lookup: Vec<u32>,
}

const OUTSIDE: u32 = u32::MAX;

pub fn build_voxel_grid(spec: &CylinderSpec) -> Result<VoxelGrid> {
    spec.validate("airspace")?;
    let (nx, ny, nz) = spec.lattice_dims();
    let lattice_len = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .filter(|&v| v < OUTSIDE as usize)
        .ok_or_else(|| {
            TwinError::Configuration(format!("voxel lattice {nx}x{ny}x{nz} is too large"))
        })?;
    let [ox, oy, oz] = spec.min_corner();
    let v = spec.voxel_m;
    let r2 = spec.radius_m * spec.radius_m;

    let mut centers = Vec::new();
    let mut lookup = vec![OUTSIDE; lattice_len];
    for k in 0..nz {
        let z = oz + (k as f64 + 0.5) * v;
        if z > spec.z_max_m {
            continue;
        }
        for j in 0..ny {
            let dy = (j as f64 + 0.5) * v - spec.radius_m;
            for i in 0..nx {
                let dx = (i as f64 + 0.5) * v - spec.radius_m;
                if dx * dx + dy * dy <= r2 {
                    lookup[(k * ny + j) * nx + i] = centers.len() as u32;
                    centers.push([ox + (i as f64 + 0.5) * v, oy + (j as f64 + 0.5) * v, z]);
                }
            }
        }
    }
    if centers.is_empty() {
        return Err(TwinError::EmptyGrid(format!("{spec:?}")));
    }
    Ok(VoxelGrid {
        spec: *spec,
        dims: (nx, ny, nz),
        centers,
        lookup,
    })
}

impl VoxelGrid {
    pub fn spec(&self) -> &CylinderSpec {
        &self.spec
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[[f64; 3]] {
        &self.centers
    }

    pub fn voxel_center(&self, index: usize) -> Result<[f64; 3]> {
        self.centers
            .get(index)
            .copied()
            .ok_or(TwinError::IndexOutOfRange {
                index,
                count: self.count(),
            })
    }

    /// Index of the voxel containing `point`, if that lattice cell is part of
    /// the grid.
    pub fn nearest_voxel(&self, point: [f64; 3]) -> Option<usize> {
        let (nx, ny, nz) = self.dims;
        let corner = self.spec.min_corner();
        let mut ijk = [0usize; 3];
        for (axis, n) in [nx, ny, nz].into_iter().enumerate() {
            let f = ((point[axis] - corner[axis]) / self.spec.voxel_m).floor();
            if !(f >= 0.0 && f < n as f64) {
                return None;
            }
            ijk[axis] = f as usize;
        }
        let slot = self.lookup[(ijk[2] * ny + ijk[1]) * nx + ijk[0]];
        (slot != OUTSIDE).then_some(slot as usize)
    }

    pub fn layer_count(&self) -> usize {
        self.dims.2
    }

    /// Altitude layer (lattice z index) of a voxel.
    pub fn layer_of(&self, index: usize) -> usize {
        let z = self.centers[index][2];
        ((z - self.spec.z_min_m) / self.spec.voxel_m).floor() as usize
    }

    /// Lattice z index containing `altitude_m`, if any voxel lives there.
    pub fn layer_at_altitude(&self, altitude_m: f64) -> Option<usize> {
        let f = ((altitude_m - self.spec.z_min_m) / self.spec.voxel_m).floor();
        if !(f >= 0.0 && f < self.dims.2 as f64) {
            return None;
        }
        let k = f as usize;
        let center_z = self.spec.z_min_m + (k as f64 + 0.5) * self.spec.voxel_m;
        (center_z <= self.spec.z_max_m).then_some(k)
    }

    /// Voxel indices of one altitude layer, in grid order.
    pub fn layer_voxels(&self, layer: usize) -> Vec<usize> {
        (0..self.count()).filter(|&i| self.layer_of(i) == layer).collect()
    }

    pub fn contains(&self, point: [f64; 3]) -> bool {
        let dx = point[0] - self.spec.center_m[0];
        let dy = point[1] - self.spec.center_m[1];
        dx * dx + dy * dy <= self.spec.radius_m * self.spec.radius_m
            && point[2] >= self.spec.z_min_m
            && point[2] <= self.spec.z_max_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(radius_m: f64, z_max_m: f64, voxel_m: f64) -> CylinderSpec {
        CylinderSpec {
            center_m: [100.0, -50.0],
            radius_m,
            z_min_m: 0.0,
            z_max_m,
            voxel_m,
        }
    }

    /// Counts lattice centers inside the cylinder with integer arithmetic,
    /// for specs whose radius and height are multiples of half a voxel.
    fn brute_force_count(radius_half_voxels: i64, layers: i64) -> usize {
        // lattice offsets in half-voxel units are odd numbers 2i+1-2R/v
        let n = radius_half_voxels; // 2r/v cells per side
        let mut count = 0;
        for j in 0..n {
            for i in 0..n {
                let dx = 2 * i + 1 - n;
                let dy = 2 * j + 1 - n;
                if dx * dx + dy * dy <= n * n {
                    count += 1;
                }
            }
        }
        count * layers as usize
    }

    #[test]
    fn single_voxel_grid() {
        let g = build_voxel_grid(&spec(5.0, 10.0, 10.0)).unwrap();
        assert_eq!(g.count(), 1);
        assert_eq!(g.voxel_center(0).unwrap(), [100.0, -50.0, 5.0]);
        assert!(matches!(
            g.voxel_center(1),
            Err(TwinError::IndexOutOfRange { index: 1, count: 1 })
        ));
    }

    #[test]
    fn radius_fifteen_matches_lattice() {
        let g = build_voxel_grid(&spec(15.0, 10.0, 10.0)).unwrap();
        assert_eq!(g.count(), brute_force_count(3, 1));
        assert_eq!(g.count(), 9);
    }

    #[test]
    fn paper_scale_count_matches_enumeration() {
        let g = build_voxel_grid(&spec(2000.0, 500.0, 10.0)).unwrap();
        let expected = brute_force_count(400, 50);
        // frozen from an independent Python enumeration
        assert_eq!(expected, 6_283_800);
        assert_eq!(g.count(), expected);
    }

    #[test]
    fn grid_order_is_z_then_y_then_x() {
        let g = build_voxel_grid(&spec(30.0, 30.0, 10.0)).unwrap();
        for w in g.centers().windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!((a[2], a[1], a[0]) < (b[2], b[1], b[0]));
        }
    }

    #[test]
    fn nearest_voxel_round_trips() {
        let g = build_voxel_grid(&spec(47.0, 33.0, 7.0)).unwrap();
        for (i, &c) in g.centers().iter().enumerate() {
            assert!(g.contains(c));
            assert_eq!(g.nearest_voxel(c), Some(i));
        }
        assert_eq!(g.nearest_voxel([1e6, 0.0, 0.0]), None);
    }

    #[test]
    fn partial_top_layer_is_dropped() {
        // 25 m tall with 10 m voxels: the third layer center sits exactly on
        // the ceiling and is kept; a 24 m ceiling drops it
        let g = build_voxel_grid(&spec(5.0, 25.0, 10.0)).unwrap();
        assert_eq!(g.count(), 3);
        let g = build_voxel_grid(&spec(5.0, 24.0, 10.0)).unwrap();
        assert_eq!(g.count(), 2);
        assert_eq!(g.layer_at_altitude(23.0), None);
        assert_eq!(g.layer_at_altitude(15.0), Some(1));
    }

    #[test]
    fn empty_grid_is_an_error() {
        // 1 m tall airspace with 10 m voxels: the only center (5 m) is above the ceiling
        let err = build_voxel_grid(&spec(50.0, 1.0, 10.0)).unwrap_err();
        assert!(matches!(err, TwinError::EmptyGrid(_)));
    }

    #[test]
    fn halving_voxel_size_multiplies_count_by_about_eight() {
        let coarse = build_voxel_grid(&spec(400.0, 200.0, 20.0)).unwrap().count();
        let fine = build_voxel_grid(&spec(400.0, 200.0, 10.0)).unwrap().count();
        let ratio = fine as f64 / coarse as f64;
        assert!((7.0..=9.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn layers() {
        let g = build_voxel_grid(&spec(20.0, 30.0, 10.0)).unwrap();
        assert_eq!(g.layer_count(), 3);
        let total: usize = (0..3).map(|k| g.layer_voxels(k).len()).sum();
        assert_eq!(total, g.count());
        assert!(g.layer_voxels(1).iter().all(|&i| g.centers()[i][2] == 15.0));
    }
}
