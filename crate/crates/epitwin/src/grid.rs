//! Regular control-volume grid and the region map of the test domain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Region ids of the cross-shaped test domain.
pub const REGION_BLOCKED: u8 = 1;
pub const REGION_HOMES: u8 = 2;
pub const REGION_TRAVEL: u8 = 3;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimensions must be at least 1 (got {nx}x{ny}x{nz})")]
    EmptyGrid { nx: usize, ny: usize, nz: usize },
    #[error("region map has {got} entries, expected {expected}")]
    RegionMapSize { got: usize, expected: usize },
    #[error("region id {id} at cell {cell} is not in {{1,2,3}}")]
    BadRegionId { id: u8, cell: usize },
}

/// Regular `nx x ny x nz` control-volume grid over a square domain of side
/// `domain_length` metres, with a per-cell region id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Domain side length in metres.
    pub domain_length: f64,
    /// Per-cell region id, x-fastest ordering (`idx = x + nx*(y + ny*z)`).
    pub region_map: Vec<u8>,
}

impl GridSpec {
    pub fn new(
        nx: usize,
        ny: usize,
        nz: usize,
        domain_length: f64,
        region_map: Vec<u8>,
    ) -> Result<Self, GridError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(GridError::EmptyGrid { nx, ny, nz });
        }
        let expected = nx * ny * nz;
        if region_map.len() != expected {
            return Err(GridError::RegionMapSize { got: region_map.len(), expected });
        }
        for (cell, &id) in region_map.iter().enumerate() {
            if !(REGION_BLOCKED..=REGION_TRAVEL).contains(&id) {
                return Err(GridError::BadRegionId { id, cell });
            }
        }
        Ok(Self { nx, ny, nz, domain_length, region_map })
    }

    /// The default 10x10x1 cross-shaped domain: 100 km square, 5x5 tiling of
    /// 2x2-cell blocks, blocked corner blocks (region 1) and a single central
    /// home block (region 2); everything else travel (region 3).
    pub fn default_cross() -> Self {
        Self::cross(10, 10, 1, 1e5).expect("default cross map is valid")
    }

    /// Cross-shaped map generated by proportional 5x5 tiling. Grids smaller
    /// than 5 cells per side get an all-travel map.
    pub fn cross(nx: usize, ny: usize, nz: usize, domain_length: f64) -> Result<Self, GridError> {
        let mut map = vec![REGION_TRAVEL; nx * ny * nz];
        if nx >= 5 && ny >= 5 {
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let (tx, ty) = (5 * x / nx, 5 * y / ny);
                        let id = if matches!((tx, ty), (0, 0) | (0, 4) | (4, 0) | (4, 4)) {
                            REGION_BLOCKED
                        } else if (tx, ty) == (2, 2) {
                            REGION_HOMES
                        } else {
                            REGION_TRAVEL
                        };
                        map[x + nx * (y + ny * z)] = id;
                    }
                }
            }
        }
        Self::new(nx, ny, nz, domain_length, map)
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn cell_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn cell_coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.nx;
        let y = (idx / self.nx) % self.ny;
        let z = idx / (self.nx * self.ny);
        (x, y, z)
    }

    #[inline]
    pub fn region(&self, idx: usize) -> u8 {
        self.region_map[idx]
    }

    #[inline]
    pub fn is_blocked(&self, idx: usize) -> bool {
        self.region_map[idx] == REGION_BLOCKED
    }

    /// Cell size (uniform spacing) in metres.
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.domain_length / self.nx as f64
    }

    /// Face-adjacent neighbours of a cell (up to 6 in 3-D).
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y, z) = self.cell_coords(idx);
        let mut out = [usize::MAX; 6];
        let mut n = 0;
        if x > 0 {
            out[n] = self.cell_index(x - 1, y, z);
            n += 1;
        }
        if x + 1 < self.nx {
            out[n] = self.cell_index(x + 1, y, z);
            n += 1;
        }
        if y > 0 {
            out[n] = self.cell_index(x, y - 1, z);
            n += 1;
        }
        if y + 1 < self.ny {
            out[n] = self.cell_index(x, y + 1, z);
            n += 1;
        }
        if z > 0 {
            out[n] = self.cell_index(x, y, z - 1);
            n += 1;
        }
        if z + 1 < self.nz {
            out[n] = self.cell_index(x, y, z + 1);
            n += 1;
        }
        out.into_iter().take(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cross_layout() {
        let g = GridSpec::default_cross();
        assert_eq!(g.n_cells(), 100);
        // corner blocks blocked
        for &(x, y) in &[(0, 0), (1, 1), (8, 0), (0, 9), (9, 9)] {
            assert_eq!(g.region(g.cell_index(x, y, 0)), REGION_BLOCKED, "({x},{y})");
        }
        // central 2x2 block is the home region
        for &(x, y) in &[(4, 4), (5, 4), (4, 5), (5, 5)] {
            assert_eq!(g.region(g.cell_index(x, y, 0)), REGION_HOMES, "({x},{y})");
        }
        assert_eq!(g.region(g.cell_index(0, 4, 0)), REGION_TRAVEL);
        assert_eq!(g.region_map.iter().filter(|&&r| r == REGION_BLOCKED).count(), 16);
        assert_eq!(g.region_map.iter().filter(|&&r| r == REGION_HOMES).count(), 4);
    }

    #[test]
    fn rejects_bad_maps() {
        assert!(matches!(
            GridSpec::new(2, 2, 1, 1.0, vec![3, 3, 3]),
            Err(GridError::RegionMapSize { got: 3, expected: 4 })
        ));
        assert!(matches!(
            GridSpec::new(1, 1, 1, 1.0, vec![7]),
            Err(GridError::BadRegionId { id: 7, cell: 0 })
        ));
        assert!(GridSpec::new(0, 1, 1, 1.0, vec![]).is_err());
    }

    #[test]
    fn neighbour_enumeration() {
        let g = GridSpec::cross(3, 1, 1, 3.0).unwrap();
        let mid: Vec<usize> = g.neighbours(1).collect();
        assert_eq!(mid, vec![0, 2]);
        let end: Vec<usize> = g.neighbours(0).collect();
        assert_eq!(end, vec![1]);
    }
}
