//! Topology-preserving curve thinning.
//!
//! Six directional subiterations (-z, +z, -y, +y, -x, +x). In each one the
//! border voxels facing that direction are collected, then deleted one at a
//! time in linear order after re-checking that they are still simple and not
//! curve endpoints. Fixed order makes the result reproducible.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::volume::{Volume3D, VoxelCoord, NEIGHBORS_26};

/// Unit-width curve skeleton of a binary volume.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonVoxels {
    pub source_dims: [usize; 3],
    pub voxels: BTreeSet<VoxelCoord>,
}

impl SkeletonVoxels {
    pub fn to_volume(&self) -> Volume3D {
        let mut v = Volume3D::new(self.source_dims);
        for &c in &self.voxels {
            v.set(c, true);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

/// Neighborhood position `(dz+1)*9 + (dy+1)*3 + (dx+1)`; 13 is the center.
fn cube_index(o: [i64; 3]) -> usize {
    ((o[0] + 1) * 9 + (o[1] + 1) * 3 + (o[2] + 1)) as usize
}

struct Topology {
    /// 26-adjacency among the 26 neighbor positions.
    adj26: Vec<Vec<usize>>,
    /// 6-adjacency among the 18-neighborhood positions.
    adj6: Vec<Vec<usize>>,
    is_n18: [bool; 27],
    is_face: [bool; 27],
}

impl Topology {
    fn new() -> Self {
        let coords: Vec<[i64; 3]> = (0..27)
            .map(|i| [i as i64 / 9 - 1, (i as i64 / 3) % 3 - 1, i as i64 % 3 - 1])
            .collect();
        let mut adj26 = vec![Vec::new(); 27];
        let mut adj6 = vec![Vec::new(); 27];
        let mut is_n18 = [false; 27];
        let mut is_face = [false; 27];
        for i in 0..27 {
            if i == 13 {
                continue;
            }
            let l1: i64 = coords[i].iter().map(|v| v.abs()).sum();
            is_n18[i] = l1 <= 2;
            is_face[i] = l1 == 1;
            for j in 0..27 {
                if j == 13 || j == i {
                    continue;
                }
                let d: Vec<i64> = (0..3).map(|a| (coords[i][a] - coords[j][a]).abs()).collect();
                if d.iter().all(|&v| v <= 1) {
                    adj26[i].push(j);
                    if d.iter().sum::<i64>() == 1 {
                        adj6[i].push(j);
                    }
                }
            }
        }
        Self {
            adj26,
            adj6,
            is_n18,
            is_face,
        }
    }

    /// Simple-point test for (26, 6) topology: exactly one 26-component of
    /// foreground in N26*, and exactly one 6-component of background in N18
    /// that touches a face neighbor.
    fn is_simple(&self, cube: &[bool; 27]) -> bool {
        let mut seen = [false; 27];
        let mut stack = Vec::with_capacity(26);

        let mut fg_components = 0;
        for s in 0..27 {
            if s == 13 || !cube[s] || seen[s] {
                continue;
            }
            fg_components += 1;
            if fg_components > 1 {
                return false;
            }
            seen[s] = true;
            stack.push(s);
            while let Some(i) = stack.pop() {
                for &j in &self.adj26[i] {
                    if cube[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if fg_components != 1 {
            return false;
        }

        let mut seen = [false; 27];
        let mut bg_components = 0;
        for s in 0..27 {
            if !self.is_face[s] || cube[s] || seen[s] {
                continue;
            }
            bg_components += 1;
            if bg_components > 1 {
                return false;
            }
            seen[s] = true;
            stack.push(s);
            while let Some(i) = stack.pop() {
                for &j in &self.adj6[i] {
                    if self.is_n18[j] && !cube[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        bg_components == 1
    }
}

/// Padded working grid: one layer of background on every side.
struct Grid {
    dims: [usize; 3],
    data: Vec<bool>,
    offsets: [isize; 27],
}

impl Grid {
    fn new(vol: &Volume3D) -> Self {
        let d = vol.dims();
        let dims = [d[0] + 2, d[1] + 2, d[2] + 2];
        let mut data = vec![false; dims[0] * dims[1] * dims[2]];
        for c in vol.foreground() {
            data[((c.z + 1) * dims[1] + c.y + 1) * dims[2] + c.x + 1] = true;
        }
        let mut offsets = [0isize; 27];
        for (i, o) in offsets.iter_mut().enumerate() {
            let dz = i as isize / 9 - 1;
            let dy = (i as isize / 3) % 3 - 1;
            let dx = i as isize % 3 - 1;
            *o = (dz * dims[1] as isize + dy) * dims[2] as isize + dx;
        }
        Self { dims, data, offsets }
    }

    fn cube(&self, i: usize) -> [bool; 27] {
        let mut c = [false; 27];
        for (k, o) in self.offsets.iter().enumerate() {
            c[k] = self.data[(i as isize + o) as usize];
        }
        c
    }

    fn unpad(&self, i: usize) -> VoxelCoord {
        let x = i % self.dims[2];
        let y = (i / self.dims[2]) % self.dims[1];
        let z = i / (self.dims[1] * self.dims[2]);
        VoxelCoord::new(z - 1, y - 1, x - 1)
    }
}

fn neighbor_count(cube: &[bool; 27]) -> usize {
    cube.iter().enumerate().filter(|&(k, &b)| k != 13 && b).count()
}

pub fn skeletonize(vol: &Volume3D) -> Result<SkeletonVoxels> {
    if vol.count() == 0 {
        return Err(Error::EmptyVolume);
    }
    let topo = Topology::new();
    let mut grid = Grid::new(vol);
    let mut active: Vec<usize> = (0..grid.data.len()).filter(|&i| grid.data[i]).collect();
    let directions = [
        cube_index([-1, 0, 0]),
        cube_index([1, 0, 0]),
        cube_index([0, -1, 0]),
        cube_index([0, 1, 0]),
        cube_index([0, 0, -1]),
        cube_index([0, 0, 1]),
    ];

    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for &dir in &directions {
            candidates.clear();
            let dir_off = grid.offsets[dir];
            for &i in &active {
                if !grid.data[i] || grid.data[(i as isize + dir_off) as usize] {
                    continue;
                }
                let cube = grid.cube(i);
                if neighbor_count(&cube) <= 1 || !topo.is_simple(&cube) {
                    continue;
                }
                candidates.push(i);
            }
            for &i in &candidates {
                let cube = grid.cube(i);
                if neighbor_count(&cube) <= 1 || !topo.is_simple(&cube) {
                    continue;
                }
                grid.data[i] = false;
                changed = true;
            }
        }
        active.retain(|&i| grid.data[i]);
        if !changed {
            break;
        }
    }

    let voxels = active.iter().map(|&i| grid.unpad(i)).collect();
    Ok(SkeletonVoxels {
        source_dims: vol.dims(),
        voxels,
    })
}

/// Number of skeleton 26-neighbors of `c`.
pub(crate) fn skeleton_degree(set: &BTreeSet<VoxelCoord>, dims: [usize; 3], c: VoxelCoord) -> usize {
    skeleton_neighbors(set, dims, c).count()
}

pub(crate) fn skeleton_neighbors<'a>(
    set: &'a BTreeSet<VoxelCoord>,
    dims: [usize; 3],
    c: VoxelCoord,
) -> impl Iterator<Item = VoxelCoord> + 'a {
    let ca = c.as_i64();
    NEIGHBORS_26.iter().filter_map(move |o| {
        let n = VoxelCoord::from_signed([ca[0] + o[0], ca[1] + o[1], ca[2] + o[2]], dims)?;
        set.contains(&n).then_some(n)
    })
}
