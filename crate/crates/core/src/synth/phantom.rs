//! Procedural tube trees: recursive binary trees of voxelized capsules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{capsule_bounds, point_segment_distance_sq, Vec3};
use crate::skeleton::{BranchEdge, BranchGraph, BranchNode, NodeKind};
use crate::volume::{euclidean_distance_transform, Volume3D, VoxelCoord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub dims: [usize; 3],
    /// Number of branch generations; 1 is a single capsule.
    pub depth: u32,
    pub root_radius: f64,
    /// Child radius = parent radius × decay.
    pub radius_decay: f64,
    /// Root branch length range in voxels; generation `g` is scaled by `0.8^g`.
    pub branch_length_range: (f64, f64),
    /// Angle between a child and its parent direction, degrees.
    pub branching_angle_range: (f64, f64),
    pub seed: u64,
}

impl PhantomParams {
    /// Parameters sized to `dims`. Beyond depth 3 branch lengths shrink so the
    /// summed child generations reach no further sideways than a depth-3 tree.
    pub fn for_dims(dims: [usize; 3], depth: u32, seed: u64) -> Self {
        let d = dims[0] as f64;
        let reach = |n: u32| (1..n).map(|g| 0.8f64.powi(g as i32)).sum::<f64>();
        let scale = if depth > 3 { reach(3) / reach(depth) } else { 1.0 };
        Self {
            dims,
            depth,
            root_radius: 4.0,
            radius_decay: 0.7,
            branch_length_range: (0.24 * d * scale, 0.30 * d * scale),
            branching_angle_range: (25.0, 40.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        if !(self.root_radius >= 1.5) {
            return Err(Error::InvalidArgument("root_radius must be at least 1.5".into()));
        }
        if !(self.radius_decay > 0.0 && self.radius_decay < 1.0) {
            return Err(Error::InvalidArgument("radius_decay must lie in (0, 1)".into()));
        }
        let (l0, l1) = self.branch_length_range;
        if !(l0 > 0.0 && l1 >= l0) {
            return Err(Error::InvalidArgument("invalid branch_length_range".into()));
        }
        let (a0, a1) = self.branching_angle_range;
        if !(a0 >= 0.0 && a1 >= a0 && a1 < 90.0) {
            return Err(Error::InvalidArgument("invalid branching_angle_range".into()));
        }
        if self.dims.iter().any(|&d| d < 3) {
            return Err(Error::InvalidArgument("dims must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Segment {
    start: Vec3,
    end: Vec3,
    radius: f64,
    parent_node: usize,
    end_node: usize,
}

/// Builds the tree, returning the voxelized volume and its constructive graph.
///
/// The graph is the generator's ground truth: node coordinates are the rounded
/// branch junctions, edge points the rasterized segment between them.
pub fn generate_phantom_tree(params: &PhantomParams) -> Result<(Volume3D, BranchGraph)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let dims = params.dims;

    let margin = params.root_radius + 2.0;
    let root_start = Vec3::new(margin, dims[1] as f64 / 2.0, dims[2] as f64 / 2.0);
    let tilt = rng.gen_range(0.0..10f64).to_radians();
    let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
    let root_dir = Vec3::new(1.0, 0.0, 0.0).rotate_towards(azimuth, tilt);

    let mut segments: Vec<Segment> = Vec::new();
    let mut node_pos: Vec<Vec3> = vec![root_start];
    // (start, direction, radius, generation, parent node)
    let mut queue = vec![(root_start, root_dir, params.root_radius, 0u32, 0usize)];
    while !queue.is_empty() {
        let mut next = Vec::new();
        for (start, dir, radius, generation, parent_node) in queue {
            let (l0, l1) = params.branch_length_range;
            let len = rng.gen_range(l0..=l1) * 0.8f64.powi(generation as i32);
            let end = start + dir * len;
            node_pos.push(end);
            let end_node = node_pos.len() - 1;
            segments.push(Segment {
                start,
                end,
                radius,
                parent_node,
                end_node,
            });
            if generation + 1 < params.depth {
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let (a0, a1) = params.branching_angle_range;
                for side in [0.0, std::f64::consts::PI] {
                    let theta = rng.gen_range(a0..=a1).to_radians();
                    let child_dir = dir.rotate_towards(phi + side, theta);
                    next.push((end, child_dir, radius * params.radius_decay, generation + 1, end_node));
                }
            }
        }
        queue = next;
    }

    let mut vol = Volume3D::new(dims);
    for s in &segments {
        let Some((lo, hi)) = capsule_bounds(s.start, s.end, s.radius, dims, 1) else {
            return Err(Error::PhantomOutOfBounds);
        };
        let r2 = s.radius * s.radius;
        for z in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for x in lo[2]..=hi[2] {
                    let p = Vec3::new(z as f64, y as f64, x as f64);
                    if point_segment_distance_sq(p, s.start, s.end) <= r2 {
                        vol.set(VoxelCoord::new(z, y, x), true);
                    }
                }
            }
        }
    }

    let round = |p: Vec3| VoxelCoord::new(p.z.round() as usize, p.y.round() as usize, p.x.round() as usize);
    let child_count = |node: usize| segments.iter().filter(|s| s.parent_node == node).count();
    let nodes = node_pos
        .iter()
        .enumerate()
        .map(|(id, &p)| BranchNode {
            id,
            coord: round(p),
            kind: if child_count(id) == 0 || id == 0 {
                NodeKind::Endpoint
            } else {
                NodeKind::Bifurcation
            },
        })
        .collect::<Vec<_>>();

    let edges: Vec<BranchEdge> = segments
        .iter()
        .enumerate()
        .map(|(id, s)| {
            let line = rasterize_line(round(s.start), round(s.end));
            let interior = line[1..line.len().saturating_sub(1).max(1)].to_vec();
            let radii = vec![s.radius; interior.len()];
            let mut e = BranchEdge::new(id, s.parent_node, s.end_node, interior, radii);
            e.length = (s.end - s.start).norm();
            e
        })
        .collect();

    let mut graph = BranchGraph {
        version: 1,
        dims,
        nodes,
        edges,
        contains_cycles: false,
    };
    let edt = euclidean_distance_transform(&vol);
    crate::skeleton::assign_branch_volumes(&mut graph.edges, &edt);
    Ok((vol, graph))
}

/// 26-connected digital segment from `a` to `b`, both included.
pub fn rasterize_line(a: VoxelCoord, b: VoxelCoord) -> Vec<VoxelCoord> {
    let pa = a.as_i64();
    let pb = b.as_i64();
    let n = (0..3).map(|k| (pb[k] - pa[k]).abs()).max().unwrap();
    if n == 0 {
        return vec![a];
    }
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let c: Vec<usize> = (0..3)
                .map(|k| (pa[k] as f64 + (pb[k] - pa[k]) as f64 * t).round() as usize)
                .collect();
            VoxelCoord::new(c[0], c[1], c[2])
        })
        .collect()
}
