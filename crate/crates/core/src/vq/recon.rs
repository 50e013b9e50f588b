use serde::Serialize;

use crate::exec::Exec;
use crate::spatial::KdTree;
use crate::voxel::{OccupancyGrid, VoxelError};

/// Reporting scale for reconstruction metrics.
pub const RECON_SCALE: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconMetrics {
    pub mse: f64,
    /// Symmetric mean nearest-neighbour distance between occupied cell
    /// centres, in units of the grid extent. Infinite when exactly one grid
    /// is empty.
    pub cd: f64,
    pub mse_scaled: f64,
    pub cd_scaled: f64,
}

pub fn recon_metrics(original: &OccupancyGrid, reconstructed: &OccupancyGrid) -> Result<ReconMetrics, VoxelError> {
    let inter = original.intersection_count(reconstructed)?;
    let union = original.union_count(reconstructed)?;
    let mse = (union - inter) as f64 / original.cell_count() as f64;
    let cd = chamfer(&original.occupied_centers(), &reconstructed.occupied_centers(), Exec::default());
    Ok(ReconMetrics { mse, cd, mse_scaled: mse * RECON_SCALE, cd_scaled: cd * RECON_SCALE })
}

/// Average of the two directed mean nearest-neighbour distances.
pub(crate) fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]], exec: Exec) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
        let tree = KdTree::new(to.to_vec());
        let d2 = tree.nearest_dist2_many(from, exec);
        d2.iter().map(|d| d.sqrt()).sum::<f64>() / from.len() as f64
    };
    0.5 * (directed(a, b) + directed(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_grids() {
        let mut g = OccupancyGrid::cubic(64);
        g.set(1, 2, 3, true);
        g.set(40, 2, 3, true);
        let m = recon_metrics(&g, &g).unwrap();
        assert_eq!((m.mse, m.cd), (0.0, 0.0));
    }

    #[test]
    fn single_cell_difference() {
        let mut a = OccupancyGrid::cubic(64);
        a.set(1, 2, 3, true);
        let mut b = a.clone();
        b.set(9, 9, 9, true);
        let m = recon_metrics(&a, &b).unwrap();
        assert_eq!(m.mse, 1.0 / 262144.0);
        assert!((m.mse - 3.815e-6).abs() < 1e-9);
        assert!((m.mse_scaled - 0.3814697265625).abs() < 1e-12);
    }

    #[test]
    fn neighbouring_voxels_are_one_cell_apart() {
        let mut a = OccupancyGrid::cubic(64);
        let mut b = OccupancyGrid::cubic(64);
        a.set(10, 10, 10, true);
        b.set(11, 10, 10, true);
        let m = recon_metrics(&a, &b).unwrap();
        assert!((m.cd - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn one_empty_grid_gives_infinite_cd() {
        let a = OccupancyGrid::cubic(8);
        let mut b = OccupancyGrid::cubic(8);
        b.set(0, 0, 0, true);
        assert_eq!(recon_metrics(&a, &b).unwrap().cd, f64::INFINITY);
        assert_eq!(recon_metrics(&a, &a).unwrap().cd, 0.0);
    }
}
