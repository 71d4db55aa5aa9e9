use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{BranchEdge, BranchGraph};

/// Branch eligibility rules for break synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCriteria {
    pub min_interior_points: usize,
    pub min_mean_radius: f64,
    /// Skip the single widest edge (the trunk).
    pub exclude_trunk: bool,
}

impl Default for BranchCriteria {
    fn default() -> Self {
        Self {
            min_interior_points: 8,
            min_mean_radius: 1.0,
            exclude_trunk: true,
        }
    }
}

/// Ids of edges passing `criteria`, in graph order.
pub fn eligible_edges(graph: &BranchGraph, criteria: &BranchCriteria) -> Vec<usize> {
    let trunk = if criteria.exclude_trunk {
        graph
            .edges
            .iter()
            .max_by(|a, b| a.mean_radius.total_cmp(&b.mean_radius).then(b.id.cmp(&a.id)))
            .map(|e| e.id)
    } else {
        None
    };
    graph
        .edges
        .iter()
        .filter(|e| {
            e.points.len() >= criteria.min_interior_points
                && e.mean_radius >= criteria.min_mean_radius
                && Some(e.id) != trunk
        })
        .map(|e| e.id)
        .collect()
}

/// Uniform choice among eligible edges not listed in `exclude`.
pub fn select_branch<R: Rng>(
    graph: &BranchGraph,
    rng: &mut R,
    criteria: &BranchCriteria,
    exclude: &[usize],
) -> Result<usize> {
    if graph.edges.is_empty() {
        return Err(Error::NoEligibleBranch);
    }
    let pool: Vec<usize> = eligible_edges(graph, criteria)
        .into_iter()
        .filter(|id| !exclude.contains(id))
        .collect();
    if pool.is_empty() {
        return Err(Error::NoEligibleBranch);
    }
    Ok(pool[rng.gen_range(0..pool.len())])
}

/// Keypoint separation bounds, in centerline points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub min: usize,
    pub max: usize,
}

impl Default for Separation {
    fn default() -> Self {
        Self { min: 4, max: 12 }
    }
}

/// Points closer than this to either end of an edge are never keypoints.
const END_CLEARANCE: usize = 2;

/// Draws two centerline indices uniformly among all pairs with separation in
/// `[sep.min, sep.max]` that keep clear of the edge ends. Returns
/// `(kp1_idx, kp2_idx)` where KP1 is on the side carrying more of the tree.
pub fn sample_keypoints<R: Rng>(
    graph: &BranchGraph,
    edge: &BranchEdge,
    rng: &mut R,
    sep: Separation,
) -> Result<(usize, usize)> {
    if sep.min == 0 || sep.max < sep.min {
        return Err(Error::InfeasibleSeparation(format!("invalid bounds {sep:?}")));
    }
    let n = edge.points.len();
    if n < 2 * END_CLEARANCE + 1 + sep.min {
        return Err(Error::InfeasibleSeparation(format!(
            "edge {} has {n} points, needs {}",
            edge.id,
            2 * END_CLEARANCE + 1 + sep.min
        )));
    }
    let lo = END_CLEARANCE;
    let hi = n - 1 - END_CLEARANCE;
    let mut pairs = Vec::new();
    for i in lo..=hi {
        for j in (i + sep.min)..=(i + sep.max).min(hi) {
            pairs.push((i, j));
        }
    }
    let (i, j) = pairs[rng.gen_range(0..pairs.len())];

    let (side_a, side_b) = side_volumes(graph, edge, i, j);
    Ok(if side_a >= side_b { (i, j) } else { (j, i) })
}

/// Foreground volume attached to each side of a break between points `i < j`:
/// the subtree beyond each node plus the part of the edge on that side.
fn side_volumes(graph: &BranchGraph, edge: &BranchEdge, i: usize, j: usize) -> (f64, f64) {
    let n = edge.points.len() as f64;
    let s = edge.branch_volume_s as f64;
    let a = graph.subtree_volume(edge.node_a, edge.id) as f64 + s * i as f64 / n;
    let b = if edge.node_b == edge.node_a {
        0.0
    } else {
        graph.subtree_volume(edge.node_b, edge.id) as f64
    } + s * (n - 1.0 - j as f64) / n;
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{BranchNode, NodeKind};
    use crate::volume::VoxelCoord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn straight_edge(id: usize, a: usize, b: usize, n: usize, radius: f64, s: u64) -> BranchEdge {
        let pts = (0..n).map(|k| VoxelCoord::new(k + 1, id, 0)).collect();
        let mut e = BranchEdge::new(id, a, b, pts, vec![radius; n]);
        e.branch_volume_s = s;
        e
    }

    fn star(edges: Vec<BranchEdge>) -> BranchGraph {
        let n_nodes = edges.iter().map(|e| e.node_a.max(e.node_b)).max().unwrap() + 1;
        BranchGraph {
            version: 1,
            dims: [64, 64, 64],
            nodes: (0..n_nodes)
                .map(|id| BranchNode { id, coord: VoxelCoord::new(0, 0, id), kind: NodeKind::Endpoint })
                .collect(),
            edges,
            contains_cycles: false,
        }
    }

    #[test]
    fn single_eligible_edge() {
        let g = star(vec![straight_edge(0, 0, 1, 20, 4.0, 100), straight_edge(1, 1, 2, 12, 2.0, 50)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(select_branch(&g, &mut rng, &BranchCriteria::default(), &[]).unwrap(), 1);
        }
    }

    #[test]
    fn short_edges_are_ineligible() {
        let g = star(vec![straight_edge(0, 0, 1, 5, 4.0, 10), straight_edge(1, 1, 2, 7, 2.0, 10)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = BranchCriteria { exclude_trunk: false, ..Default::default() };
        assert!(matches!(select_branch(&g, &mut rng, &c, &[]), Err(Error::NoEligibleBranch)));
    }

    #[test]
    fn uniform_over_eligible_edges() {
        // Edge 0 is the trunk; edges 1..=10 are eligible.
        let mut edges = vec![straight_edge(0, 0, 1, 30, 6.0, 500)];
        for k in 1..=10 {
            edges.push(straight_edge(k, 1, k + 1, 10, 2.0, 40));
        }
        let g = star(edges);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 11];
        for _ in 0..10_000 {
            counts[select_branch(&g, &mut rng, &BranchCriteria::default(), &[]).unwrap()] += 1;
        }
        assert_eq!(counts[0], 0);
        for &c in &counts[1..] {
            let f = c as f64 / 10_000.0;
            assert!((f - 0.1).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn separation_bounds() {
        let g = star(vec![straight_edge(0, 0, 1, 40, 2.0, 100)]);
        let e = &g.edges[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (a, b) = sample_keypoints(&g, e, &mut rng, Separation::default()).unwrap();
            let d = a.abs_diff(b);
            assert!((4..=12).contains(&d));
            assert!(a.min(b) >= 2 && a.max(b) <= 37);
        }
        for _ in 0..50 {
            let (a, b) = sample_keypoints(&g, e, &mut rng, Separation { min: 4, max: 4 }).unwrap();
            assert_eq!(a.abs_diff(b), 4);
        }
    }

    #[test]
    fn feasibility_edge_cases() {
        let sep = Separation::default();
        let g = star(vec![straight_edge(0, 0, 1, sep.min + 6, 2.0, 10), straight_edge(1, 1, 2, sep.min + 4, 2.0, 10)]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(sample_keypoints(&g, &g.edges[0], &mut rng, sep).is_ok());
        assert!(matches!(
            sample_keypoints(&g, &g.edges[1], &mut rng, sep),
            Err(Error::InfeasibleSeparation(_))
        ));
    }

    #[test]
    fn kp1_on_heavier_side() {
        // node 0 -- e0 -- node 1 -- e1 -- node 2, with a big subtree hanging off node 2.
        let g = star(vec![
            straight_edge(0, 0, 1, 30, 2.0, 60),
            straight_edge(1, 1, 2, 10, 3.0, 40),
            straight_edge(2, 2, 3, 10, 3.0, 4000),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (k1, k2) = sample_keypoints(&g, &g.edges[0], &mut rng, Separation::default()).unwrap();
            assert!(k1 > k2, "kp1 must be nearer node 1");
        }
    }

    #[test]
    fn seeded_golden_pair() {
        let g = star(vec![straight_edge(0, 0, 1, 30, 2.0, 60)]);
        let a = sample_keypoints(&g, &g.edges[0], &mut ChaCha8Rng::seed_from_u64(2024), Separation::default()).unwrap();
        let b = sample_keypoints(&g, &g.edges[0], &mut ChaCha8Rng::seed_from_u64(2024), Separation::default()).unwrap();
        assert_eq!(a, b);
    }
}
