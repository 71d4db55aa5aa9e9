//! Gaussian keypoint heatmaps, the visibility-gated KMSE loss and argmax decoding.

use crate::error::{Error, Result};
use crate::volume::VoxelCoord;

/// Number of keypoints (KP1, KP2).
pub const NUM_KEYPOINTS: usize = 2;
pub const DEFAULT_SIGMA: f64 = 2.5;

/// `channels` dense grids, channel-major, x fastest within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapTensor {
    pub channels: usize,
    pub extent: [usize; 3],
    pub data: Vec<f32>,
}

impl HeatmapTensor {
    pub fn zeros(channels: usize, extent: [usize; 3]) -> Self {
        Self {
            channels,
            extent,
            data: vec![0.0; channels * extent.iter().product::<usize>()],
        }
    }

    pub fn from_data(channels: usize, extent: [usize; 3], data: Vec<f32>) -> Result<Self> {
        let n = channels * extent.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "heatmap {channels}x{extent:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { channels, extent, data })
    }

    pub fn channel_len(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        let n = self.channel_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f32] {
        let n = self.channel_len();
        &mut self.data[k * n..(k + 1) * n]
    }
}

/// Keypoints in a crop's local frame. Coordinates may fall outside the crop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointTarget {
    pub coords: Vec<[i64; 3]>,
    pub visibility: Vec<bool>,
}

impl KeypointTarget {
    /// Visibility is set from whether each coordinate lies inside `extent`.
    pub fn new(coords: Vec<[i64; 3]>, extent: [usize; 3]) -> Self {
        let visibility = coords
            .iter()
            .map(|c| (0..3).all(|k| c[k] >= 0 && (c[k] as usize) < extent[k]))
            .collect();
        Self { coords, visibility }
    }
}

/// One peak-normalized Gaussian channel per keypoint, evaluated on the whole grid.
/// Invisible keypoints give an all-zero channel.
pub fn render_gaussian(target: &KeypointTarget, extent: [usize; 3], sigma: f64) -> Result<HeatmapTensor> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let k = target.coords.len();
    let mut hm = HeatmapTensor::zeros(k, extent);
    let inv = 1.0 / (2.0 * sigma * sigma);
    // exp is separable: precompute per-axis factors.
    for ch in 0..k {
        if !target.visibility[ch] {
            continue;
        }
        let c = target.coords[ch];
        let axis = |a: usize| -> Vec<f64> {
            (0..extent[a])
                .map(|i| {
                    let d = i as f64 - c[a] as f64;
                    d * d
                })
                .collect()
        };
        let (az, ay, ax) = (axis(0), axis(1), axis(2));
        let out = hm.channel_mut(ch);
        let mut i = 0;
        for dz in &az {
            for dy in &ay {
                for dx in &ax {
                    out[i] = (-(dz + dy + dx) * inv).exp() as f32;
                    i += 1;
                }
            }
        }
    }
    Ok(hm)
}

fn check_shapes(pred: &HeatmapTensor, gt: &HeatmapTensor, visibility: &[bool]) -> Result<()> {
    if pred.channels != gt.channels || pred.extent != gt.extent || pred.data.len() != gt.data.len() {
        return Err(Error::ShapeMismatch(format!(
            "pred {}x{:?} vs target {}x{:?}",
            pred.channels, pred.extent, gt.channels, gt.extent
        )));
    }
    if visibility.len() != pred.channels {
        return Err(Error::ShapeMismatch(format!(
            "{} visibility flags for {} channels",
            visibility.len(),
            pred.channels
        )));
    }
    Ok(())
}

/// Mean over keypoints of the summed squared error of each visible channel.
pub fn kmse_loss(pred: &HeatmapTensor, gt: &HeatmapTensor, visibility: &[bool]) -> Result<f64> {
    check_shapes(pred, gt, visibility)?;
    let k = pred.channels;
    let mut total = 0.0f64;
    for ch in 0..k {
        if visibility[ch] {
            total += pred
                .channel(ch)
                .iter()
                .zip(gt.channel(ch))
                .map(|(&p, &g)| {
                    let d = p as f64 - g as f64;
                    d * d
                })
                .sum::<f64>();
        }
    }
    Ok(total / k as f64)
}

/// Gradient of [`kmse_loss`] with respect to `pred`.
pub fn kmse_grad(pred: &HeatmapTensor, gt: &HeatmapTensor, visibility: &[bool]) -> Result<HeatmapTensor> {
    check_shapes(pred, gt, visibility)?;
    let k = pred.channels;
    let scale = 2.0 / k as f64;
    let mut g = HeatmapTensor::zeros(k, pred.extent);
    for ch in 0..k {
        if visibility[ch] {
            for ((o, &p), &t) in g.channel_mut(ch).iter_mut().zip(pred.channel(ch)).zip(gt.channel(ch)) {
                *o = (scale * (p as f64 - t as f64)) as f32;
            }
        }
    }
    Ok(g)
}

/// Per-channel argmax; ties go to the smallest linear index.
pub fn decode_argmax(hm: &HeatmapTensor) -> Vec<VoxelCoord> {
    (0..hm.channels)
        .map(|ch| {
            let mut best = 0;
            let data = hm.channel(ch);
            for (i, &v) in data.iter().enumerate() {
                if v > data[best] {
                    best = i;
                }
            }
            VoxelCoord::from_linear(best, hm.extent)
        })
        .collect()
}
