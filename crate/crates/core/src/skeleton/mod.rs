//! Centerline extraction and branch graphs.

mod graph;
mod json;
mod thinning;

pub use graph::{assign_branch_volumes, build_graph, BranchEdge, BranchGraph, BranchNode, NodeKind};
pub use json::{export_graph_json, import_graph_json, read_graph, write_graph};
pub use thinning::{skeletonize, SkeletonVoxels};

use crate::error::Result;
use crate::volume::{euclidean_distance_transform, Volume3D};

/// Skeletonize and build the branch graph with radii from the volume's EDT.
pub fn extract_graph(vol: &Volume3D) -> Result<BranchGraph> {
    let skel = skeletonize(vol)?;
    let edt = euclidean_distance_transform(vol);
    Ok(build_graph(&skel, &edt))
}
