use std::path::Path;

use serde_json::Value;

use super::graph::BranchGraph;
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

const TOP_KEYS: [&str; 5] = ["version", "dims", "nodes", "edges", "contains_cycles"];
const NODE_KEYS: [&str; 3] = ["id", "coord", "kind"];
const EDGE_KEYS: [&str; 8] = [
    "id",
    "node_a",
    "node_b",
    "points",
    "radii",
    "mean_radius",
    "length",
    "branch_volume_S",
];

/// Floats are written in shortest round-trip form, so import reproduces them bit for bit.
pub fn export_graph_json(graph: &BranchGraph) -> Vec<u8> {
    serde_json::to_vec(graph).expect("graph serialization is infallible")
}

fn require<'a>(obj: &'a Value, keys: &[&str], prefix: &str) -> Result<()> {
    let map = obj
        .as_object()
        .ok_or_else(|| Error::Schema(if prefix.is_empty() { "<root>".into() } else { prefix.into() }))?;
    for k in keys {
        if !map.contains_key(*k) {
            return Err(Error::Schema(format!("{prefix}{k}")));
        }
    }
    Ok(())
}

pub fn import_graph_json(bytes: &[u8]) -> Result<BranchGraph> {
    let value: Value = serde_json::from_slice(bytes)?;
    require(&value, &TOP_KEYS, "")?;
    let check_list = |key: &str, keys: &[&str]| -> Result<()> {
        let list = value[key].as_array().ok_or_else(|| Error::Schema(key.to_string()))?;
        for (i, item) in list.iter().enumerate() {
            require(item, keys, &format!("{key}[{i}]."))?;
        }
        Ok(())
    };
    check_list("nodes", &NODE_KEYS)?;
    check_list("edges", &EDGE_KEYS)?;
    let version = value["version"].as_u64();
    if version != Some(1) {
        return Err(Error::UnsupportedVersion(version.unwrap_or(0) as u32));
    }
    let graph: BranchGraph = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    let node_ids: std::collections::HashSet<usize> = graph.nodes.iter().map(|n| n.id).collect();
    for (i, e) in graph.edges.iter().enumerate() {
        if !node_ids.contains(&e.node_a) {
            return Err(Error::Schema(format!("edges[{i}].node_a")));
        }
        if !node_ids.contains(&e.node_b) {
            return Err(Error::Schema(format!("edges[{i}].node_b")));
        }
        if e.radii.len() != e.points.len() {
            return Err(Error::Schema(format!("edges[{i}].radii")));
        }
    }
    Ok(graph)
}

pub fn write_graph(graph: &BranchGraph, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), &export_graph_json(graph))
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<BranchGraph> {
    import_graph_json(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{BranchEdge, BranchNode, NodeKind};
    use crate::volume::VoxelCoord;

    const MINIMAL: &str = r#"{
        "version": 1,
        "dims": [10, 10, 10],
        "nodes": [
            {"id": 0, "coord": [1, 2, 3], "kind": "endpoint"},
            {"id": 1, "coord": [1, 2, 6], "kind": "endpoint"}
        ],
        "edges": [
            {"id": 0, "node_a": 0, "node_b": 1, "points": [[1, 2, 4], [1, 2, 5]],
             "radii": [1.5, 2.0], "mean_radius": 1.75, "length": 3.0, "branch_volume_S": 12}
        ],
        "contains_cycles": false
    }"#;

    #[test]
    fn minimal_fixture() {
        let g = import_graph_json(MINIMAL.as_bytes()).unwrap();
        assert_eq!(g.nodes[0].coord, VoxelCoord::new(1, 2, 3));
        assert_eq!(g.nodes[1].coord, VoxelCoord::new(1, 2, 6));
        assert_eq!(g.edges[0].points, vec![VoxelCoord::new(1, 2, 4), VoxelCoord::new(1, 2, 5)]);
        assert_eq!(g.edges[0].branch_volume_s, 12);
        assert_eq!(g.nodes[0].kind, NodeKind::Endpoint);
    }

    #[test]
    fn missing_key_is_named() {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        v.as_object_mut().unwrap().remove("edges");
        let err = import_graph_json(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(&err, Error::Schema(k) if k == "edges"), "{err}");

        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        v["edges"][0].as_object_mut().unwrap().remove("radii");
        let err = import_graph_json(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(&err, Error::Schema(k) if k == "edges[0].radii"), "{err}");
    }

    #[test]
    fn floats_round_trip_exactly() {
        let mut e = BranchEdge::new(
            0,
            0,
            1,
            vec![VoxelCoord::new(0, 0, 1)],
            vec![std::f64::consts::PI / 7.0],
        );
        e.length = 0.1 + 0.2;
        let g = BranchGraph {
            version: 1,
            dims: [3, 3, 3],
            nodes: vec![
                BranchNode { id: 0, coord: VoxelCoord::new(0, 0, 0), kind: NodeKind::Endpoint },
                BranchNode { id: 1, coord: VoxelCoord::new(0, 0, 2), kind: NodeKind::Bifurcation },
            ],
            edges: vec![e],
            contains_cycles: false,
        };
        let back = import_graph_json(&export_graph_json(&g)).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.edges[0].radii[0].to_bits(), g.edges[0].radii[0].to_bits());
    }
}
