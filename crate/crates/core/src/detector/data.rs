use bitvec::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::heatmap::KeypointTarget;
use crate::synth::DisconnectionSample;
use crate::volume::{centered_origin, connected_components, crop_with, Connectivity, VoxelCoord};

/// Input layout: one channel with both components, or one channel per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    One,
    Two,
}

impl Variant {
    pub fn in_channels(self) -> usize {
        match self {
            Variant::One => 1,
            Variant::Two => 2,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" | "1" => Ok(Variant::One),
            "two" | "2" => Ok(Variant::Two),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

/// Component masks of a sample, packed for cheap repeated cropping.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub sample_id: String,
    pub dims: [usize; 3],
    pub kp1: VoxelCoord,
    pub kp2: VoxelCoord,
    pub fixed_crop_centers: Vec<VoxelCoord>,
    main: BitVec<u64>,
    detached: BitVec<u64>,
    detached_count: usize,
}

impl PreparedSample {
    /// The largest component becomes the main mask, the component holding
    /// KP2 the detached mask; anything else is dropped.
    pub fn new(sample: &DisconnectionSample) -> Result<Self> {
        let vol = &sample.disconnected;
        let dims = vol.dims();
        if !sample.kp2.in_bounds(dims) || !vol.get(sample.kp2) {
            return Err(Error::InvalidArgument(format!("{}: kp2 is not foreground", sample.sample_id)));
        }
        let labels = connected_components(vol, Connectivity::TwentySix);
        let l2 = labels.label_at(sample.kp2);
        let main: BitVec<u64> = labels.labels().iter().map(|&l| l == 1).collect();
        let detached: BitVec<u64> = labels.labels().iter().map(|&l| l == l2 && l2 != 1).collect();
        Ok(Self {
            sample_id: sample.sample_id.clone(),
            dims,
            kp1: sample.kp1,
            kp2: sample.kp2,
            fixed_crop_centers: sample.fixed_crop_centers.clone(),
            detached_count: detached.count_ones(),
            main,
            detached,
        })
    }

    /// Uniform voxel of the detached component (KP2 itself if it is empty).
    pub fn random_center<R: Rng>(&self, rng: &mut R) -> VoxelCoord {
        if self.detached_count == 0 {
            return self.kp2;
        }
        let k = rng.gen_range(0..self.detached_count);
        let i = self.detached.iter_ones().nth(k).expect("k below count");
        VoxelCoord::from_linear(i, self.dims)
    }

    /// Input crop `[channels, e, e, e]` centered on `center` and the keypoints
    /// in the crop frame.
    pub fn crop(&self, center: VoxelCoord, extent: [usize; 3], variant: Variant) -> Result<(Vec<f32>, KeypointTarget)> {
        if !center.in_bounds(self.dims) {
            return Err(Error::OutOfBounds(center.as_i64(), self.dims));
        }
        let origin = centered_origin(center, extent);
        let main = crop_with(self.dims, origin, extent, 0.0f32, |i| if self.main[i] { 1.0 } else { 0.0 });
        let det = crop_with(self.dims, origin, extent, 0.0f32, |i| if self.detached[i] { 1.0 } else { 0.0 });
        let data = match variant {
            Variant::Two => [main.data, det.data].concat(),
            Variant::One => main.data.iter().zip(&det.data).map(|(a, b)| a.max(*b)).collect(),
        };
        let local = |c: VoxelCoord| {
            let c = c.as_i64();
            [c[0] - origin[0], c[1] - origin[1], c[2] - origin[2]]
        };
        Ok((data, KeypointTarget::new(vec![local(self.kp1), local(self.kp2)], extent)))
    }
}

/// Network input and keypoint target for one crop of a sample.
pub fn make_training_input(
    sample: &DisconnectionSample,
    crop_center: VoxelCoord,
    extent: [usize; 3],
    variant: Variant,
) -> Result<(Tensor<f32>, KeypointTarget)> {
    let (data, target) = PreparedSample::new(sample)?.crop(crop_center, extent, variant)?;
    let t = Tensor::from_vec(&[1, variant.in_channels(), extent[0], extent[1], extent[2]], data)?;
    Ok((t, target))
}
