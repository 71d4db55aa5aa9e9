//! Dense 3D voxel grids and the basic operations every later stage builds on.
//!
//! All grids are stored in z-major, x-fastest order: the voxel `(z, y, x)` of
//! a grid with dims `(D, H, W)` lives at linear index `(z * H + y) * W + x`.

mod ccl;
mod edt;
mod io;
mod morphology;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ccl::{connected_components, Connectivity, LabelVolume};
pub use edt::{euclidean_distance_transform, DistanceField, squared_distance_to_sites};
pub use io::{read_btv, read_field, read_volume, write_field, write_volume, BtvData};
pub use morphology::{dilate_ball, erode_ball};

/// Integer voxel coordinate in volume frame, serialized as `[z, y, x]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct VoxelCoord {
    pub z: usize,
    pub y: usize,
    pub x: usize,
}

impl VoxelCoord {
    pub const fn new(z: usize, y: usize, x: usize) -> Self {
        Self { z, y, x }
    }

    pub fn as_array(self) -> [usize; 3] {
        [self.z, self.y, self.x]
    }

    pub fn as_i64(self) -> [i64; 3] {
        [self.z as i64, self.y as i64, self.x as i64]
    }

    pub fn as_f64(self) -> [f64; 3] {
        [self.z as f64, self.y as f64, self.x as f64]
    }

    pub fn from_linear(index: usize, dims: [usize; 3]) -> Self {
        let x = index % dims[2];
        let y = (index / dims[2]) % dims[1];
        let z = index / (dims[1] * dims[2]);
        Self { z, y, x }
    }

    pub fn linear(self, dims: [usize; 3]) -> usize {
        (self.z * dims[1] + self.y) * dims[2] + self.x
    }

    pub fn in_bounds(self, dims: [usize; 3]) -> bool {
        self.z < dims[0] && self.y < dims[1] && self.x < dims[2]
    }

    pub fn distance(self, other: VoxelCoord) -> f64 {
        let a = self.as_f64();
        let b = other.as_f64();
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    /// Converts a signed coordinate, returning `None` when it falls outside `dims`.
    pub fn from_signed(c: [i64; 3], dims: [usize; 3]) -> Option<Self> {
        if (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < dims[a]) {
            Some(Self::new(c[0] as usize, c[1] as usize, c[2] as usize))
        } else {
            None
        }
    }
}

impl From<[usize; 3]> for VoxelCoord {
    fn from(a: [usize; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<VoxelCoord> for [usize; 3] {
    fn from(c: VoxelCoord) -> Self {
        c.as_array()
    }
}

pub fn voxel_count(dims: [usize; 3]) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Dense binary occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<bool>,
}

impl Volume3D {
    pub fn new(dims: [usize; 3]) -> Self {
        Self {
            dims,
            spacing: [1.0; 3],
            data: vec![false; voxel_count(dims)],
        }
    }

    pub fn from_data(dims: [usize; 3], spacing: [f64; 3], data: Vec<bool>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if data.len() != voxel_count(dims) {
            return Err(Error::PayloadSizeMismatch {
                expected: voxel_count(dims),
                found: data.len(),
            });
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(VoxelCoord) -> bool) -> Self {
        let data = (0..voxel_count(dims))
            .map(|i| f(VoxelCoord::from_linear(i, dims)))
            .collect();
        Self {
            dims,
            spacing: [1.0; 3],
            data,
        }
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, c: VoxelCoord) -> bool {
        self.data[c.linear(self.dims)]
    }

    /// Out-of-bounds reads are background.
    pub fn get_signed(&self, c: [i64; 3]) -> bool {
        VoxelCoord::from_signed(c, self.dims).is_some_and(|v| self.get(v))
    }

    pub fn set(&mut self, c: VoxelCoord, value: bool) {
        let i = c.linear(self.dims);
        self.data[i] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn foreground(&self) -> impl Iterator<Item = VoxelCoord> + '_ {
        let dims = self.dims;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| VoxelCoord::from_linear(i, dims))
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Volume3D) -> bool {
        self.dims == other.dims && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

/// Dense scalar grid (distance maps, heatmap accumulators, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct FloatVolume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub data: Vec<f32>,
}

impl FloatVolume {
    pub fn get(&self, c: VoxelCoord) -> f32 {
        self.data[c.linear(self.dims)]
    }
}

/// A window cut from a parent grid; `origin` may be negative at the borders.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop3D<T> {
    pub origin: [i64; 3],
    pub extent: [usize; 3],
    pub data: Vec<T>,
}

impl<T: Copy> Crop3D<T> {
    pub fn get(&self, local: [usize; 3]) -> T {
        self.data[(local[0] * self.extent[1] + local[1]) * self.extent[2] + local[2]]
    }

    pub fn to_parent(&self, local: [usize; 3]) -> [i64; 3] {
        [
            self.origin[0] + local[0] as i64,
            self.origin[1] + local[1] as i64,
            self.origin[2] + local[2] as i64,
        ]
    }

    /// Maps a parent coordinate into this crop, or `None` when outside the window.
    pub fn to_local(&self, parent: [i64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let l = parent[a] - self.origin[a];
            if l < 0 || l as usize >= self.extent[a] {
                return None;
            }
            out[a] = l as usize;
        }
        Some(out)
    }
}

/// Origin of a window of `extent` centered on `center`: `center - floor(extent / 2)`.
pub fn centered_origin(center: VoxelCoord, extent: [usize; 3]) -> [i64; 3] {
    let c = center.as_i64();
    [
        c[0] - (extent[0] / 2) as i64,
        c[1] - (extent[1] / 2) as i64,
        c[2] - (extent[2] / 2) as i64,
    ]
}

/// Cuts a window out of any grid of `dims`, filling out-of-bounds voxels with `fill`.
pub fn crop_with<T: Copy>(
    dims: [usize; 3],
    origin: [i64; 3],
    extent: [usize; 3],
    fill: T,
    mut sample: impl FnMut(usize) -> T,
) -> Crop3D<T> {
    let mut data = vec![fill; voxel_count(extent)];
    for lz in 0..extent[0] {
        let z = origin[0] + lz as i64;
        if z < 0 || z as usize >= dims[0] {
            continue;
        }
        for ly in 0..extent[1] {
            let y = origin[1] + ly as i64;
            if y < 0 || y as usize >= dims[1] {
                continue;
            }
            let row = (lz * extent[1] + ly) * extent[2];
            let prow = (z as usize * dims[1] + y as usize) * dims[2];
            for lx in 0..extent[2] {
                let x = origin[2] + lx as i64;
                if x < 0 || x as usize >= dims[2] {
                    continue;
                }
                data[row + lx] = sample(prow + x as usize);
            }
        }
    }
    Crop3D {
        origin,
        extent,
        data,
    }
}

pub fn crop_centered(vol: &Volume3D, center: VoxelCoord, extent: [usize; 3]) -> Result<Crop3D<bool>> {
    if !center.in_bounds(vol.dims) {
        return Err(Error::OutOfBounds(center.as_i64(), vol.dims));
    }
    let origin = centered_origin(center, extent);
    Ok(crop_with(vol.dims, origin, extent, false, |i| vol.data[i]))
}

/// Offsets of the 26-neighborhood, in z-major scan order.
pub(crate) const NEIGHBORS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dz == 0 && dy == 0 && dx == 0) {
                    out[n] = [dz, dy, dx];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_round_trip() {
        let dims = [3, 4, 5];
        for i in 0..voxel_count(dims) {
            assert_eq!(VoxelCoord::from_linear(i, dims).linear(dims), i);
        }
        assert_eq!(VoxelCoord::new(1, 2, 3).linear(dims), (4 + 2) * 5 + 3);
    }

    #[test]
    fn crop_origin_arithmetic() {
        let vol = Volume3D::new([100, 100, 100]);
        let crop = crop_centered(&vol, VoxelCoord::new(50, 50, 50), [80, 80, 80]).unwrap();
        assert_eq!(crop.origin, [10, 10, 10]);
    }

    #[test]
    fn crop_at_corner_zero_fills() {
        let vol = Volume3D::from_fn([10, 10, 10], |_| true);
        let crop = crop_centered(&vol, VoxelCoord::new(0, 0, 0), [8, 8, 8]).unwrap();
        assert_eq!(crop.origin, [-4, -4, -4]);
        for lz in 0..8 {
            for ly in 0..8 {
                for lx in 0..8 {
                    let inside = lz >= 4 && ly >= 4 && lx >= 4;
                    assert_eq!(crop.get([lz, ly, lx]), inside);
                }
            }
        }
    }

    #[test]
    fn crop_full_extent_is_identity() {
        let vol = Volume3D::from_fn([7, 5, 9], |c| (c.z * 31 + c.y * 7 + c.x) % 3 == 0);
        let crop = crop_centered(&vol, VoxelCoord::new(3, 2, 4), [7, 5, 9]).unwrap();
        assert_eq!(crop.origin, [0, 0, 0]);
        assert_eq!(crop.data, vol.data());
    }

    #[test]
    fn crop_center_outside_is_error() {
        let vol = Volume3D::new([4, 4, 4]);
        assert!(matches!(
            crop_centered(&vol, VoxelCoord::new(4, 0, 0), [2, 2, 2]),
            Err(Error::OutOfBounds(..))
        ));
    }

    #[test]
    fn invalid_construction() {
        assert!(Volume3D::from_data([2, 2, 2], [1.0; 3], vec![false; 7]).is_err());
        assert!(Volume3D::from_data([2, 2, 2], [1.0, 0.0, 1.0], vec![false; 8]).is_err());
    }
}
