use tuberepair::geometry::{point_segment_distance_sq, Vec3};
use tuberepair::skeleton::{extract_graph, skeletonize, NodeKind};
use tuberepair::synth::{generate_phantom_tree, PhantomParams};
use tuberepair::volume::{connected_components, euclidean_distance_transform, Connectivity, Volume3D};

fn cylinder(dims: [usize; 3], a: Vec3, b: Vec3, r: f64) -> Volume3D {
    Volume3D::from_fn(dims, |c| {
        let p = Vec3::from_array(c.as_f64());
        let u = (p - a).dot(b - a) / (b - a).dot(b - a);
        (0.0..=1.0).contains(&u) && point_segment_distance_sq(p, a, b) <= r * r
    })
}

#[test]
fn cylinder_radius_is_recovered() {
    for r in [2.0, 3.0, 4.0, 5.0] {
        for (a, b) in [
            (Vec3::new(20.0, 20.0, 6.0), Vec3::new(20.0, 20.0, 50.0)),
            (Vec3::new(10.0, 14.0, 8.0), Vec3::new(30.0, 26.0, 48.0)),
        ] {
            let vol = cylinder([40, 40, 56], a, b, r);
            let g = extract_graph(&vol).unwrap();
            assert_eq!(g.edges.len(), 1, "r = {r}");
            assert_eq!(g.count_kind(NodeKind::Endpoint), 2);
            assert!((g.edges[0].mean_radius - r).abs() <= 0.7, "r = {r}: {}", g.edges[0].mean_radius);
        }
    }
}

#[test]
fn y_shaped_tube() {
    let dims = [48, 48, 48];
    let j = Vec3::new(24.0, 24.0, 24.0);
    let arms = [Vec3::new(4.0, 24.0, 24.0), Vec3::new(42.0, 10.0, 24.0), Vec3::new(42.0, 38.0, 24.0)];
    let vol = Volume3D::from_fn(dims, |c| {
        let p = Vec3::from_array(c.as_f64());
        arms.iter().any(|&e| point_segment_distance_sq(p, j, e) <= 9.0)
    });
    let g = extract_graph(&vol).unwrap();
    assert_eq!(g.count_kind(NodeKind::Endpoint), 3);
    assert_eq!(g.count_kind(NodeKind::Bifurcation), 1);
    assert_eq!(g.edges.len(), 3);
    assert!(!g.contains_cycles);
}

#[test]
fn phantom_topology_survives_extraction() {
    for depth in 1..=3 {
        for seed in 0..6 {
            let (vol, truth) = generate_phantom_tree(&PhantomParams::for_dims([96, 96, 96], depth, seed)).unwrap();
            let g = extract_graph(&vol).unwrap();
            assert_eq!(g.count_kind(NodeKind::Endpoint), truth.count_kind(NodeKind::Endpoint), "depth {depth} seed {seed}");
            assert_eq!(
                g.count_kind(NodeKind::Bifurcation),
                truth.count_kind(NodeKind::Bifurcation),
                "depth {depth} seed {seed}"
            );
        }
    }
}

#[test]
fn skeleton_invariants_on_phantoms() {
    for seed in 0..4 {
        let (vol, _) = generate_phantom_tree(&PhantomParams::for_dims([80, 80, 80], 3, seed)).unwrap();
        let skel = skeletonize(&vol).unwrap();
        let sv = skel.to_volume();
        assert!(sv.is_subset_of(&vol));
        let before = connected_components(&vol, Connectivity::TwentySix).num_components();
        assert_eq!(connected_components(&sv, Connectivity::TwentySix).num_components(), before);

        // Unit width: no 2x2x2 block is fully set.
        let d = sv.dims();
        for z in 0..d[0] - 1 {
            for y in 0..d[1] - 1 {
                for x in 0..d[2] - 1 {
                    let full = (0..8).all(|k| {
                        sv.get(tuberepair::volume::VoxelCoord::new(z + (k >> 2), y + ((k >> 1) & 1), x + (k & 1)))
                    });
                    assert!(!full);
                }
            }
        }

        let g = extract_graph(&vol).unwrap();
        let s: u64 = g.edges.iter().map(|e| e.branch_volume_s).sum();
        assert_eq!(s as usize, vol.count());
        let edt = euclidean_distance_transform(&vol);
        for e in &g.edges {
            assert_eq!(e.points.len(), e.radii.len());
            for (p, r) in e.points.iter().zip(&e.radii) {
                assert!(vol.get(*p));
                assert_eq!(*r, edt.get(*p));
            }
        }
    }
}
