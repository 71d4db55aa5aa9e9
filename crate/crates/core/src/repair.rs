//! Bridging a detected break with a solid capsule between the two keypoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{capsule_bounds_clipped, point_segment_distance_sq, Vec3};
use crate::inference::KeypointPair;
use crate::volume::{connected_components, euclidean_distance_transform, Connectivity, Volume3D, VoxelCoord};

pub const MIN_RADIUS: f64 = 0.5;

/// Sets every voxel within `radius` of the segment `[kp1, kp2]`.
pub fn link_keypoints(vol: &Volume3D, kp1: VoxelCoord, kp2: VoxelCoord, radius: f64) -> Result<Volume3D> {
    if !(radius >= MIN_RADIUS) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("bridge radius must be at least {MIN_RADIUS}, got {radius}")));
    }
    let mut out = vol.clone();
    let (a, b) = (Vec3::from_array(kp1.as_f64()), Vec3::from_array(kp2.as_f64()));
    let Some((lo, hi)) = capsule_bounds_clipped(a, b, radius, vol.dims()) else {
        return Ok(out);
    };
    let r2 = radius * radius;
    for z in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for x in lo[2]..=hi[2] {
                let p = Vec3::new(z as f64, y as f64, x as f64);
                if point_segment_distance_sq(p, a, b) <= r2 {
                    out.set(VoxelCoord::new(z, y, x), true);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSource {
    Metadata,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairLogEntry {
    pub kp1: VoxelCoord,
    pub kp2: VoxelCoord,
    #[serde(rename = "R")]
    pub radius: f64,
    pub radius_source: RadiusSource,
    pub pre_components: usize,
    pub post_components: usize,
}

fn components(vol: &Volume3D) -> usize {
    connected_components(vol, Connectivity::TwentySix).num_components()
}

/// Bridges every pair in order. `radii[i]` is the known branch radius of pair
/// `i`; when absent the distance to background at KP1 is used instead,
/// raised to [`MIN_RADIUS`].
pub fn repair_volume(
    vol: &Volume3D,
    pairs: &[KeypointPair],
    radii: &[Option<f64>],
) -> Result<(Volume3D, Vec<RepairLogEntry>)> {
    if radii.len() != pairs.len() && !radii.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} radii for {} pairs", radii.len(), pairs.len())));
    }
    let mut out = vol.clone();
    let mut log = Vec::new();
    if pairs.is_empty() {
        return Ok((out, log));
    }
    let needs_edt = (0..pairs.len()).any(|i| radii.get(i).copied().flatten().is_none());
    let edt = needs_edt.then(|| euclidean_distance_transform(vol));
    for (i, p) in pairs.iter().enumerate() {
        let (radius, source) = match radii.get(i).copied().flatten() {
            Some(r) => (r.max(MIN_RADIUS), RadiusSource::Metadata),
            None => {
                let d = edt.as_ref().expect("computed when a radius is missing").get(p.kp1);
                (d.max(MIN_RADIUS), RadiusSource::Distance)
            }
        };
        let pre = components(&out);
        out = link_keypoints(&out, p.kp1, p.kp2, radius)?;
        log.push(RepairLogEntry {
            kp1: p.kp1,
            kp2: p.kp2,
            radius,
            radius_source: source,
            pre_components: pre,
            post_components: components(&out),
        });
    }
    Ok((out, log))
}
