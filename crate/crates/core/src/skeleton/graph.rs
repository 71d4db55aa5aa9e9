use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::thinning::{skeleton_degree, skeleton_neighbors, SkeletonVoxels};
use crate::spatial::NearestPoints;
use crate::volume::{DistanceField, VoxelCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Endpoint,
    Bifurcation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchNode {
    pub id: usize,
    pub coord: VoxelCoord,
    pub kind: NodeKind,
}

/// A branch between two nodes. `points` are the interior centerline voxels
/// ordered from `node_a` to `node_b`; radii are in voxel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEdge {
    pub id: usize,
    pub node_a: usize,
    pub node_b: usize,
    pub points: Vec<VoxelCoord>,
    pub radii: Vec<f64>,
    pub mean_radius: f64,
    pub length: f64,
    #[serde(rename = "branch_volume_S")]
    pub branch_volume_s: u64,
}

impl BranchEdge {
    pub fn new(id: usize, node_a: usize, node_b: usize, points: Vec<VoxelCoord>, radii: Vec<f64>) -> Self {
        let mean_radius = mean(&radii);
        let length = points.windows(2).map(|w| w[0].distance(w[1])).sum();
        Self {
            id,
            node_a,
            node_b,
            points,
            radii,
            mean_radius,
            length,
            branch_volume_s: 0,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchGraph {
    pub version: u32,
    pub dims: [usize; 3],
    pub nodes: Vec<BranchNode>,
    pub edges: Vec<BranchEdge>,
    pub contains_cycles: bool,
}

impl BranchGraph {
    pub fn edge(&self, id: usize) -> Option<&BranchEdge> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn node(&self, id: usize) -> Option<&BranchNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Total branch volume reachable from `start` without crossing `skip_edge`.
    pub fn subtree_volume(&self, start: usize, skip_edge: usize) -> u64 {
        let mut seen_nodes = HashSet::from([start]);
        let mut seen_edges = HashSet::new();
        let mut stack = vec![start];
        let mut total = 0u64;
        while let Some(n) = stack.pop() {
            for e in &self.edges {
                if e.id == skip_edge || (e.node_a != n && e.node_b != n) {
                    continue;
                }
                if seen_edges.insert(e.id) {
                    total += e.branch_volume_s;
                }
                for m in [e.node_a, e.node_b] {
                    if seen_nodes.insert(m) {
                        stack.push(m);
                    }
                }
            }
        }
        total
    }

    /// True when the edge set has more edges than a forest on the same nodes.
    pub fn has_cycles(&self) -> bool {
        let index: BTreeMap<usize, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (index.get(&e.node_a), index.get(&e.node_b)) else {
                continue;
            };
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return true;
            }
            parent[ra] = rb;
        }
        false
    }
}

/// Builds the branch graph of a curve skeleton. Foreground of the source
/// volume is taken as the voxels with positive distance in `edt`.
///
/// Voxels with one skeleton neighbor become endpoints; 26-adjacent voxels with
/// three or more neighbors are merged into one bifurcation node located at the
/// cluster voxel nearest their rounded centroid. Runs of two-neighbor voxels
/// become edges.
pub fn build_graph(skel: &SkeletonVoxels, edt: &DistanceField) -> BranchGraph {
    let dims = skel.source_dims;
    let set = &skel.voxels;
    let degree: BTreeMap<VoxelCoord, usize> = set.iter().map(|&c| (c, skeleton_degree(set, dims, c))).collect();

    // Node clusters in order of their smallest voxel.
    let mut clusters: Vec<(Vec<VoxelCoord>, NodeKind)> = Vec::new();
    let mut clustered: BTreeSet<VoxelCoord> = BTreeSet::new();
    for (&c, &d) in &degree {
        if d == 2 || clustered.contains(&c) {
            continue;
        }
        if d <= 1 {
            clustered.insert(c);
            clusters.push((vec![c], NodeKind::Endpoint));
            continue;
        }
        let mut members = vec![c];
        clustered.insert(c);
        let mut i = 0;
        while i < members.len() {
            let m = members[i];
            for n in skeleton_neighbors(set, dims, m) {
                if degree[&n] >= 3 && clustered.insert(n) {
                    members.push(n);
                }
            }
            i += 1;
        }
        members.sort();
        clusters.push((members, NodeKind::Bifurcation));
    }

    let mut node_of: BTreeMap<VoxelCoord, usize> = BTreeMap::new();
    let mut nodes = Vec::new();
    for (id, (members, kind)) in clusters.iter().enumerate() {
        for &m in members {
            node_of.insert(m, id);
        }
        nodes.push(BranchNode {
            id,
            coord: representative(members),
            kind: *kind,
        });
    }

    let mut edges: Vec<BranchEdge> = Vec::new();
    let mut visited: BTreeSet<VoxelCoord> = BTreeSet::new();
    let mut direct_pairs: HashSet<(VoxelCoord, VoxelCoord)> = HashSet::new();
    let radius_at = |c: VoxelCoord| edt.get(c);

    for (id, (members, _)) in clusters.iter().enumerate() {
        for &start in members {
            for n in skeleton_neighbors(set, dims, start).collect::<Vec<_>>() {
                if let Some(&other) = node_of.get(&n) {
                    if other != id && direct_pairs.insert((start.min(n), start.max(n))) {
                        let mut e = BranchEdge::new(edges.len(), id, other, Vec::new(), Vec::new());
                        e.length = start.distance(n);
                        edges.push(e);
                    }
                    continue;
                }
                if visited.contains(&n) {
                    continue;
                }
                let (points, end) = trace(set, dims, &node_of, &mut visited, start, n);
                let end_node = node_of[&end];
                let radii = points.iter().map(|&p| radius_at(p)).collect();
                let mut e = BranchEdge::new(edges.len(), id, end_node, points, radii);
                e.length += start.distance(e.points[0]) + e.points.last().unwrap().distance(end);
                edges.push(e);
            }
        }
    }

    // Closed loops with no node: promote their smallest voxel to a node.
    let leftovers: Vec<VoxelCoord> = set
        .iter()
        .copied()
        .filter(|c| !node_of.contains_key(c) && !visited.contains(c))
        .collect();
    for c in leftovers {
        if visited.contains(&c) {
            continue;
        }
        let id = nodes.len();
        node_of.insert(c, id);
        nodes.push(BranchNode {
            id,
            coord: c,
            kind: NodeKind::Bifurcation,
        });
        if let Some(n) = skeleton_neighbors(set, dims, c).find(|n| !visited.contains(n)) {
            let (points, end) = trace(set, dims, &node_of, &mut visited, c, n);
            let radii = points.iter().map(|&p| radius_at(p)).collect();
            let mut e = BranchEdge::new(edges.len(), id, node_of[&end], points, radii);
            e.length += c.distance(e.points[0]) + e.points.last().unwrap().distance(end);
            edges.push(e);
        }
    }

    assign_branch_volumes(&mut edges, edt);

    let mut graph = BranchGraph {
        version: 1,
        dims,
        nodes,
        edges,
        contains_cycles: false,
    };
    graph.contains_cycles = graph.has_cycles();
    graph
}

fn representative(members: &[VoxelCoord]) -> VoxelCoord {
    let n = members.len() as f64;
    let mut sum = [0.0f64; 3];
    for m in members {
        let a = m.as_f64();
        for k in 0..3 {
            sum[k] += a[k];
        }
    }
    let centroid = VoxelCoord::new(
        (sum[0] / n).round() as usize,
        (sum[1] / n).round() as usize,
        (sum[2] / n).round() as usize,
    );
    *members
        .iter()
        .min_by(|a, b| {
            a.distance(centroid)
                .partial_cmp(&b.distance(centroid))
                .unwrap()
                .then(a.cmp(b))
        })
        .unwrap()
}

/// Walks two-neighbor voxels from `first` (a neighbor of node voxel `from`)
/// until a node voxel is reached. Returns the interior points and that voxel.
fn trace(
    set: &BTreeSet<VoxelCoord>,
    dims: [usize; 3],
    node_of: &BTreeMap<VoxelCoord, usize>,
    visited: &mut BTreeSet<VoxelCoord>,
    from: VoxelCoord,
    first: VoxelCoord,
) -> (Vec<VoxelCoord>, VoxelCoord) {
    let mut points = Vec::new();
    let mut prev = from;
    let mut cur = first;
    loop {
        if node_of.contains_key(&cur) {
            return (points, cur);
        }
        visited.insert(cur);
        points.push(cur);
        let next = skeleton_neighbors(set, dims, cur)
            .find(|&n| n != prev && (node_of.contains_key(&n) || !visited.contains(&n)));
        match next {
            Some(n) => {
                prev = cur;
                cur = n;
            }
            // Both neighbors consumed: the walk closed on itself at `from`.
            None => return (points, from),
        }
    }
}

/// Each foreground voxel is owned by the edge holding its nearest interior
/// centerline point (ties to the smaller linear index).
pub fn assign_branch_volumes(edges: &mut [BranchEdge], edt: &DistanceField) {
    let dims = edt.dims;
    let mut pts = Vec::new();
    let mut keys = Vec::new();
    let mut owner = Vec::new();
    for (ei, e) in edges.iter().enumerate() {
        for &p in &e.points {
            pts.push(p);
            keys.push(p.linear(dims));
            owner.push(ei);
        }
    }
    let index = NearestPoints::new(dims, pts, keys);
    if index.is_empty() {
        return;
    }
    for (i, &d) in edt.data.iter().enumerate() {
        if d > 0.0 {
            let (idx, _) = index.nearest(VoxelCoord::from_linear(i, dims)).unwrap();
            edges[owner[idx]].branch_volume_s += 1;
        }
    }
}
