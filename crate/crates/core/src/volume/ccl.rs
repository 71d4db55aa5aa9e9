use super::{voxel_count, Volume3D, VoxelCoord, NEIGHBORS_26};
use crate::error::{Error, Result};

/// Foreground adjacency used for labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// Face neighbors.
    Six,
    /// Face and edge neighbors.
    Eighteen,
    /// Face, edge and corner neighbors.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Self::Six),
            18 => Ok(Self::Eighteen),
            26 => Ok(Self::TwentySix),
            _ => Err(Error::InvalidArgument(format!("connectivity must be 6, 18 or 26, got {n}"))),
        }
    }

    pub fn offsets(self) -> Vec<[i64; 3]> {
        let max_l1 = match self {
            Self::Six => 1,
            Self::Eighteen => 2,
            Self::TwentySix => 3,
        };
        NEIGHBORS_26
            .iter()
            .copied()
            .filter(|o| o.iter().map(|v| v.abs()).sum::<i64>() <= max_l1)
            .collect()
    }
}

/// Component labeling. Label 0 is background; labels `1..=M` are ordered by
/// descending size, ties broken by the smallest linear index in the component.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    labels: Vec<u32>,
    sizes: Vec<usize>,
    first_index: Vec<usize>,
}

impl LabelVolume {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, c: VoxelCoord) -> u32 {
        self.labels[c.linear(self.dims)]
    }

    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    /// Voxel count of `label` (1-based); 0 for background or unknown labels.
    pub fn size(&self, label: u32) -> usize {
        if label == 0 {
            return 0;
        }
        self.sizes.get(label as usize - 1).copied().unwrap_or(0)
    }

    /// Sizes indexed by `label - 1`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn mask(&self, label: u32) -> Volume3D {
        let mut vol = Volume3D::new(self.dims);
        for (dst, &l) in vol.data_mut().iter_mut().zip(&self.labels) {
            *dst = l == label && label != 0;
        }
        vol
    }

    pub fn voxels(&self, label: u32) -> Vec<VoxelCoord> {
        let dims = self.dims;
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| VoxelCoord::from_linear(i, dims))
            .collect()
    }

    /// Keeps components satisfying `keep` (by old label), recompacting labels
    /// in their existing order.
    fn retain(&self, mut keep: impl FnMut(u32) -> bool) -> LabelVolume {
        let mut remap = vec![0u32; self.sizes.len() + 1];
        let mut sizes = Vec::new();
        let mut first_index = Vec::new();
        for old in 1..=self.sizes.len() as u32 {
            if keep(old) {
                sizes.push(self.sizes[old as usize - 1]);
                first_index.push(self.first_index[old as usize - 1]);
                remap[old as usize] = sizes.len() as u32;
            }
        }
        LabelVolume {
            dims: self.dims,
            labels: self.labels.iter().map(|&l| remap[l as usize]).collect(),
            sizes,
            first_index,
        }
    }

    /// Drops components smaller than `min_voxels`.
    pub fn filter_small_components(&self, min_voxels: usize) -> LabelVolume {
        self.retain(|l| self.size(l) >= min_voxels)
    }

    /// Drops label 1 (the largest component).
    pub fn remove_largest_component(&self) -> Result<LabelVolume> {
        if self.sizes.is_empty() {
            return Err(Error::NoComponents);
        }
        Ok(self.retain(|l| l != 1))
    }
}

pub fn connected_components(vol: &Volume3D, connectivity: Connectivity) -> LabelVolume {
    let dims = vol.dims();
    let n = voxel_count(dims);
    let data = vol.data();
    let offsets = connectivity.offsets();
    let plane = (dims[1] * dims[2]) as i64;
    let row = dims[2] as i64;

    let mut raw = vec![0u32; n];
    let mut sizes: Vec<usize> = Vec::new();
    let mut first_index: Vec<usize> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    for start in 0..n {
        if !data[start] || raw[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        raw[start] = label;
        stack.push(start);
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let c = VoxelCoord::from_linear(i, dims);
            for o in &offsets {
                let z = c.z as i64 + o[0];
                let y = c.y as i64 + o[1];
                let x = c.x as i64 + o[2];
                if z < 0 || y < 0 || x < 0 {
                    continue;
                }
                if z as usize >= dims[0] || y as usize >= dims[1] || x as usize >= dims[2] {
                    continue;
                }
                let j = (z * plane + y * row + x) as usize;
                if data[j] && raw[j] == 0 {
                    raw[j] = label;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
        // Scan order visits each component first at its minimum linear index.
        first_index.push(start);
    }

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(first_index[a].cmp(&first_index[b])));
    let mut remap = vec![0u32; sizes.len() + 1];
    for (new, &old) in order.iter().enumerate() {
        remap[old + 1] = new as u32 + 1;
    }
    LabelVolume {
        dims,
        labels: raw.into_iter().map(|l| remap[l as usize]).collect(),
        sizes: order.iter().map(|&o| sizes[o]).collect(),
        first_index: order.iter().map(|&o| first_index[o]).collect(),
    }
}
