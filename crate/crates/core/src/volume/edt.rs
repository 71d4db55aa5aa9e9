//! Exact Euclidean distance transform by separable lower envelopes of
//! parabolas (one pass per axis).

use super::{voxel_count, Volume3D, VoxelCoord};

/// Per-voxel distances produced by [`euclidean_distance_transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, c: VoxelCoord) -> f64 {
        self.data[c.linear(self.dims)]
    }
}

/// 1D squared distance transform of sampled function `f` with grid step
/// weight `w2` (squared spacing). Infinite entries are not sites.
fn transform_line(f: &[f64], w2: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let pf = p as f64;
            let s = ((f[q] + w2 * qf * qf) - (f[p] + w2 * pf * pf)) / (2.0 * w2 * (qf - pf));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < v.len() && z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = w2 * d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every voxel to the nearest site, with
/// per-axis `spacing`. Voxels are at infinite distance when no site exists.
pub fn squared_distance_to_sites(dims: [usize; 3], sites: &[bool], spacing: [f64; 3]) -> Vec<f64> {
    let n = voxel_count(dims);
    assert_eq!(sites.len(), n);
    let mut g: Vec<f64> = sites
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();

    let strides = [dims[1] * dims[2], dims[2], 1];
    let longest = *dims.iter().max().unwrap();
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = Vec::with_capacity(longest);
    let mut z = Vec::with_capacity(longest + 1);

    for axis in (0..3).rev() {
        let len = dims[axis];
        let stride = strides[axis];
        let w2 = spacing[axis] * spacing[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for a in 0..dims[o1] {
            for b in 0..dims[o2] {
                let base = a * strides[o1] + b * strides[o2];
                for i in 0..len {
                    line[i] = g[base + i * stride];
                }
                transform_line(&line[..len], w2, &mut out[..len], &mut v, &mut z);
                for i in 0..len {
                    g[base + i * stride] = out[i];
                }
            }
        }
    }
    g
}

/// Distance from each foreground voxel to the nearest background voxel,
/// honoring the volume spacing. Background maps to 0. A volume without any
/// background voxel yields infinity on its foreground.
pub fn euclidean_distance_transform(vol: &Volume3D) -> DistanceField {
    let background: Vec<bool> = vol.data().iter().map(|b| !b).collect();
    let sq = squared_distance_to_sites(vol.dims(), &background, vol.spacing());
    DistanceField {
        dims: vol.dims(),
        data: sq.into_iter().map(f64::sqrt).collect(),
    }
}
