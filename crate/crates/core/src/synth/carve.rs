use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::skeleton::BranchEdge;
use crate::volume::{connected_components, Connectivity, LabelVolume, Volume3D, VoxelCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One synthesized break.
#[derive(Debug, Clone, PartialEq)]
pub struct DisconnectionSample {
    pub sample_id: String,
    pub source_volume_id: String,
    pub edge_id: usize,
    pub kp1: VoxelCoord,
    pub kp2: VoxelCoord,
    pub kp1_index: usize,
    pub kp2_index: usize,
    pub gap_radius: f64,
    pub disconnected: Volume3D,
    pub branch_mean_radius: f64,
    pub branch_volume_s: u64,
    pub kp1_component_label: u32,
    pub kp2_component_label: u32,
    pub split: Split,
    pub fixed_crop_centers: Vec<VoxelCoord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarveParams {
    pub margin: f64,
    pub min_sep: usize,
}

impl Default for CarveParams {
    fn default() -> Self {
        Self { margin: 1.5, min_sep: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct Carve {
    pub disconnected: Volume3D,
    pub gap_radius: f64,
    pub labels: LabelVolume,
}

/// Centerline polyline between two edge indices with per-vertex radii.
struct Polyline {
    pts: Vec<Vec3>,
    radii: Vec<f64>,
    /// Arc length at each vertex.
    arc: Vec<f64>,
}

impl Polyline {
    fn new(edge: &BranchEdge, lo: usize, hi: usize) -> Self {
        let pts: Vec<Vec3> = edge.points[lo..=hi]
            .iter()
            .map(|p| Vec3::from_array(p.as_f64()))
            .collect();
        let mut arc = vec![0.0];
        for w in pts.windows(2) {
            arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self {
            pts,
            radii: edge.radii[lo..=hi].to_vec(),
            arc,
        }
    }

    fn total(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Closest point on the polyline: `(distance, arc position, interpolated radius)`.
    fn closest(&self, p: Vec3) -> (f64, f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for k in 0..self.pts.len().saturating_sub(1) {
            let (a, b) = (self.pts[k], self.pts[k + 1]);
            let ab = b - a;
            let len2 = ab.dot(ab);
            let u = if len2 == 0.0 { 0.0 } else { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) };
            let d = (p - (a + ab * u)).norm();
            if d < best.0 {
                let r = self.radii[k] + u * (self.radii[k + 1] - self.radii[k]);
                best = (d, self.arc[k] + u * (self.arc[k + 1] - self.arc[k]), r);
            }
        }
        best
    }
}

/// Removes the tube section between two centerline points of `edge`.
///
/// A foreground voxel is deleted when its closest point on the inter-keypoint
/// polyline lies strictly inside the polyline and it is within the local radius
/// plus `margin` of it. The result must split the tree into exactly two
/// components with `kp1` in the larger one.
pub fn carve_gap(
    vol: &Volume3D,
    edge: &BranchEdge,
    kp1_idx: usize,
    kp2_idx: usize,
    params: CarveParams,
) -> Result<Carve> {
    let n = edge.points.len();
    if kp1_idx >= n || kp2_idx >= n {
        return Err(Error::InvalidArgument(format!(
            "keypoint index out of range for edge {} with {n} points",
            edge.id
        )));
    }
    if kp1_idx.abs_diff(kp2_idx) < params.min_sep.max(1) {
        return Err(Error::InvalidArgument(format!(
            "keypoint separation {} below {}",
            kp1_idx.abs_diff(kp2_idx),
            params.min_sep
        )));
    }
    if edge.radii.len() != n {
        return Err(Error::Schema(format!("edges[{}].radii", edge.id)));
    }
    let (lo, hi) = (kp1_idx.min(kp2_idx), kp1_idx.max(kp2_idx));
    let line = Polyline::new(edge, lo, hi);
    let gap_radius = line.radii.iter().cloned().fold(0.0, f64::max) + params.margin;
    let total = line.total();
    let eps = 1e-9;

    let dims = vol.dims();
    let reach = gap_radius.ceil() as i64 + 1;
    let mut bmin = [i64::MAX; 3];
    let mut bmax = [i64::MIN; 3];
    for p in &edge.points[lo..=hi] {
        let c = p.as_i64();
        for k in 0..3 {
            bmin[k] = bmin[k].min(c[k] - reach).max(0);
            bmax[k] = bmax[k].max(c[k] + reach).min(dims[k] as i64 - 1);
        }
    }

    let mut out = vol.clone();
    let mut removed = 0usize;
    for z in bmin[0]..=bmax[0] {
        for y in bmin[1]..=bmax[1] {
            for x in bmin[2]..=bmax[2] {
                let c = VoxelCoord::new(z as usize, y as usize, x as usize);
                if !vol.get(c) {
                    continue;
                }
                let (d, t, r) = line.closest(Vec3::new(z as f64, y as f64, x as f64));
                if t > eps && t < total - eps && d <= r + params.margin {
                    out.set(c, false);
                    removed += 1;
                }
            }
        }
    }

    let kp1 = edge.points[kp1_idx];
    let kp2 = edge.points[kp2_idx];
    let invalid = |why: &str| Err(Error::InvalidTopology(why.to_string()));
    if removed == 0 {
        return invalid("nothing removed");
    }
    if !out.get(kp1) || !out.get(kp2) {
        return invalid("keypoint removed");
    }
    let labels = connected_components(&out, Connectivity::TwentySix);
    if labels.num_components() != 2 {
        return invalid(&format!("{} components", labels.num_components()));
    }
    if labels.label_at(kp1) != 1 || labels.label_at(kp2) != 2 {
        return invalid("keypoints not split between the two components");
    }
    Ok(Carve {
        disconnected: out,
        gap_radius,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimsMismatch,
    Kp1NotForeground,
    Kp2NotForeground,
    Kp1OffCenterline,
    Kp2OffCenterline,
    Kp1NotInLargest,
    Kp2InLargest,
    ExtraComponents(Vec<u32>),
    Kp2ComponentTooLarge { kp1_size: usize, kp2_size: usize },
    LabelMismatch,
    NothingCarved,
    ForegroundAdded,
    RemovedOutsideGap(VoxelCoord),
    CropCenters(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimsMismatch => write!(f, "dims mismatch"),
            Violation::Kp1NotForeground => write!(f, "kp1 not foreground"),
            Violation::Kp2NotForeground => write!(f, "kp2 not foreground"),
            Violation::Kp1OffCenterline => write!(f, "kp1 off centerline"),
            Violation::Kp2OffCenterline => write!(f, "kp2 off centerline"),
            Violation::Kp1NotInLargest => write!(f, "kp1 not in largest"),
            Violation::Kp2InLargest => write!(f, "kp2 in largest"),
            Violation::ExtraComponents(l) => write!(f, "extra components {l:?}"),
            Violation::Kp2ComponentTooLarge { kp1_size, kp2_size } => {
                write!(f, "kp2 component too large ({kp2_size} vs {kp1_size})")
            }
            Violation::LabelMismatch => write!(f, "component labels mismatch"),
            Violation::NothingCarved => write!(f, "nothing carved"),
            Violation::ForegroundAdded => write!(f, "foreground added"),
            Violation::RemovedOutsideGap(c) => write!(f, "voxel {:?} removed outside gap", c.as_array()),
            Violation::CropCenters(m) => write!(f, "crop centers: {m}"),
        }
    }
}

/// Checks a sample against the tree it was carved from. An empty list means ok.
pub fn validate_sample(sample: &DisconnectionSample, source: &Volume3D, edge: &BranchEdge) -> Vec<Violation> {
    let mut v = Vec::new();
    let vol = &sample.disconnected;
    if vol.dims() != source.dims() {
        return vec![Violation::DimsMismatch];
    }
    let dims = vol.dims();
    let fg = |c: VoxelCoord| c.in_bounds(dims) && vol.get(c);
    if !fg(sample.kp1) {
        v.push(Violation::Kp1NotForeground);
    }
    if !fg(sample.kp2) {
        v.push(Violation::Kp2NotForeground);
    }
    if edge.points.get(sample.kp1_index) != Some(&sample.kp1) {
        v.push(Violation::Kp1OffCenterline);
    }
    if edge.points.get(sample.kp2_index) != Some(&sample.kp2) {
        v.push(Violation::Kp2OffCenterline);
    }

    let labels = connected_components(vol, Connectivity::TwentySix);
    let l1 = if fg(sample.kp1) { labels.label_at(sample.kp1) } else { 0 };
    let l2 = if fg(sample.kp2) { labels.label_at(sample.kp2) } else { 0 };
    if l1 != 1 {
        v.push(Violation::Kp1NotInLargest);
    }
    if l2 == 1 {
        v.push(Violation::Kp2InLargest);
    }
    let extra: Vec<u32> = (1..=labels.num_components() as u32)
        .filter(|&l| l != l1 && l != l2)
        .collect();
    if !extra.is_empty() {
        v.push(Violation::ExtraComponents(extra));
    }
    if l1 != 0 && l2 != 0 && l1 != l2 && 2 * labels.size(l2) >= labels.size(l1) {
        v.push(Violation::Kp2ComponentTooLarge {
            kp1_size: labels.size(l1),
            kp2_size: labels.size(l2),
        });
    }
    if (sample.kp1_component_label, sample.kp2_component_label) != (l1, l2) {
        v.push(Violation::LabelMismatch);
    }

    if !vol.is_subset_of(source) {
        v.push(Violation::ForegroundAdded);
    }
    let removed: Vec<VoxelCoord> = source.foreground().filter(|&c| !vol.get(c)).collect();
    if removed.is_empty() {
        v.push(Violation::NothingCarved);
    }
    let (lo, hi) = (sample.kp1_index.min(sample.kp2_index), sample.kp1_index.max(sample.kp2_index));
    if hi < edge.points.len() && edge.radii.len() == edge.points.len() && lo < hi {
        let line = Polyline::new(edge, lo, hi);
        if let Some(&c) = removed
            .iter()
            .find(|c| line.closest(Vec3::from_array(c.as_f64())).0 > sample.gap_radius + 1e-9)
        {
            v.push(Violation::RemovedOutsideGap(c));
        }
    }

    let expected = match sample.split {
        Split::Train => 0,
        Split::Val | Split::Test => 3,
    };
    if sample.fixed_crop_centers.len() != expected {
        v.push(Violation::CropCenters(format!(
            "{} centers for {} sample",
            sample.fixed_crop_centers.len(),
            sample.split
        )));
    } else if let Some(c) = sample
        .fixed_crop_centers
        .iter()
        .find(|&&c| !fg(c) || labels.label_at(c) != l2)
    {
        v.push(Violation::CropCenters(format!("{:?} outside kp2 component", c.as_array())));
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight tube along x at (y, z) = (8, 8) with radius 3, plus a thin
    /// side branch near one end so the two sides differ in size.
    fn tube() -> (Volume3D, BranchEdge) {
        let dims = [17, 17, 40];
        let vol = Volume3D::from_fn(dims, |c| {
            let dz = c.z as f64 - 8.0;
            let dy = c.y as f64 - 8.0;
            let in_tube = dz * dz + dy * dy <= 9.0 && (2..38).contains(&c.x);
            let in_side = c.x >= 4 && c.x <= 6 && c.z == 8 && c.y >= 8;
            in_tube || in_side
        });
        let pts: Vec<VoxelCoord> = (3..37).map(|x| VoxelCoord::new(8, 8, x)).collect();
        let n = pts.len();
        (vol, BranchEdge::new(0, 0, 1, pts, vec![3.0; n]))
    }

    fn sample_from(vol: &Volume3D, edge: &BranchEdge, k1: usize, k2: usize) -> DisconnectionSample {
        let c = carve_gap(vol, edge, k1, k2, CarveParams::default()).unwrap();
        DisconnectionSample {
            sample_id: "s".into(),
            source_volume_id: "v".into(),
            edge_id: edge.id,
            kp1: edge.points[k1],
            kp2: edge.points[k2],
            kp1_index: k1,
            kp2_index: k2,
            gap_radius: c.gap_radius,
            disconnected: c.disconnected,
            branch_mean_radius: edge.mean_radius,
            branch_volume_s: 0,
            kp1_component_label: 1,
            kp2_component_label: 2,
            split: Split::Train,
            fixed_crop_centers: vec![],
        }
    }

    #[test]
    fn straight_tube_splits_in_two() {
        let (vol, edge) = tube();
        let c = carve_gap(&vol, &edge, 24, 30, CarveParams::default()).unwrap();
        // Independent check: flood fill from kp1 must not reach kp2.
        let l = connected_components(&c.disconnected, Connectivity::TwentySix);
        assert_eq!(l.num_components(), 2);
        assert_ne!(l.label_at(edge.points[24]), l.label_at(edge.points[30]));
        assert_eq!(c.gap_radius, 4.5);
        assert!(c.disconnected.get(edge.points[24]) && c.disconnected.get(edge.points[30]));
    }

    #[test]
    fn partition_of_original_foreground() {
        let (vol, edge) = tube();
        let c = carve_gap(&vol, &edge, 20, 12, CarveParams::default()).unwrap();
        assert!(c.disconnected.is_subset_of(&vol));
        let removed = vol.count() - c.disconnected.count();
        assert!(removed > 0);
        // The removed slab spans x in (15, 23) exclusive: 7 full disks of 29 voxels.
        assert_eq!(removed, 7 * 29);
    }

    #[test]
    fn separation_precondition() {
        let (vol, edge) = tube();
        assert!(matches!(
            carve_gap(&vol, &edge, 10, 11, CarveParams::default()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(carve_gap(&vol, &edge, 10, 99, CarveParams::default()).is_err());
    }

    #[test]
    fn wrong_roles_are_invalid_topology() {
        let (vol, edge) = tube();
        // The side branch sits near x = 5, so that end is larger; kp1 at the far end is wrong.
        assert!(matches!(
            carve_gap(&vol, &edge, 28, 20, CarveParams::default()),
            Err(Error::InvalidTopology(_))
        ));
    }

    #[test]
    fn well_formed_sample_validates() {
        let (vol, edge) = tube();
        let s = sample_from(&vol, &edge, 24, 30);
        assert_eq!(validate_sample(&s, &vol, &edge), vec![]);
    }

    #[test]
    fn swapped_roles_report_kp2_in_largest() {
        let (vol, edge) = tube();
        let mut s = sample_from(&vol, &edge, 24, 30);
        std::mem::swap(&mut s.kp1, &mut s.kp2);
        std::mem::swap(&mut s.kp1_index, &mut s.kp2_index);
        let v = validate_sample(&s, &vol, &edge);
        assert!(v.contains(&Violation::Kp2InLargest));
        assert!(v.iter().any(|x| x.to_string() == "kp2 in largest"));
    }

    #[test]
    fn third_component_is_listed() {
        let (vol, edge) = tube();
        let mut s = sample_from(&vol, &edge, 24, 30);
        // Cut a second slab off the far end by hand.
        for c in vol.foreground() {
            if c.x == 15 {
                s.disconnected.set(c, false);
            }
        }
        let labels = connected_components(&s.disconnected, Connectivity::TwentySix);
        assert_eq!(labels.num_components(), 3);
        let l1 = labels.label_at(s.kp1);
        let l2 = labels.label_at(s.kp2);
        let expected: Vec<u32> = (1..=3).filter(|&l| l != l1 && l != l2).collect();
        let v = validate_sample(&s, &vol, &edge);
        assert!(v.contains(&Violation::ExtraComponents(expected)), "{v:?}");
    }

    #[test]
    fn crop_centers_must_match_split() {
        let (vol, edge) = tube();
        let mut s = sample_from(&vol, &edge, 24, 30);
        s.split = Split::Test;
        assert!(matches!(validate_sample(&s, &vol, &edge)[..], [Violation::CropCenters(_)]));
        s.fixed_crop_centers = vec![s.kp2; 3];
        assert_eq!(validate_sample(&s, &vol, &edge), vec![]);
        s.fixed_crop_centers[1] = s.kp1;
        assert!(matches!(validate_sample(&s, &vol, &edge)[..], [Violation::CropCenters(_)]));
    }
}
