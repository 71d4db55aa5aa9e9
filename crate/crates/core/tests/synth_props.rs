use std::collections::HashSet;

use tuberepair::skeleton::{extract_graph, read_graph};
use tuberepair::synth::*;
use tuberepair::volume::{connected_components, read_volume, Connectivity};

fn sources(n: u64, dims: usize, depth: u32, extract: bool) -> Vec<SourceVolume> {
    (0..n)
        .map(|seed| {
            let (volume, truth) = generate_phantom_tree(&PhantomParams::for_dims([dims; 3], depth, seed)).unwrap();
            let graph = if extract { extract_graph(&volume).unwrap() } else { truth };
            SourceVolume { id: format!("phantom_{seed:03}"), volume, graph }
        })
        .collect()
}

#[test]
fn dataset_on_disk_is_valid_and_deterministic() {
    let src = sources(10, 64, 3, true);
    let cfg = DatasetConfig { branches_per_volume: 4, seed: 11, ..Default::default() };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate_dataset(&src, &cfg, a.path(), 1).unwrap();
    let mb = generate_dataset(&src, &cfg, b.path(), 3).unwrap();
    assert_eq!(
        std::fs::read(a.path().join("manifest.json")).unwrap(),
        std::fs::read(b.path().join("manifest.json")).unwrap()
    );
    assert_eq!(ma, mb);
    assert_eq!(Manifest::read(a.path().join("manifest.json")).unwrap(), ma);

    assert_eq!((ma.splits.train.len(), ma.splits.val.len(), ma.splits.test.len()), (7, 1, 2));
    let mut seen = HashSet::new();
    for id in ma.splits.train.iter().chain(&ma.splits.val).chain(&ma.splits.test) {
        assert!(seen.insert(id.clone()), "volume {id} in two splits");
    }
    assert_eq!(seen.len(), 10);

    for v in &ma.volumes {
        assert_eq!(v.emitted + v.shortfall, 4);
        let samples: Vec<_> = ma.samples.iter().filter(|s| s.source_volume_id == v.volume_id).collect();
        assert_eq!(samples.len(), v.emitted);
        let edges: HashSet<usize> = samples.iter().map(|s| s.edge_id).collect();
        assert_eq!(edges.len(), samples.len());
        assert!(samples.iter().all(|s| s.split == v.split));
    }
    assert!(!ma.samples.is_empty());

    for rec in &ma.samples {
        let source = read_volume(a.path().join(&ma.volume(&rec.source_volume_id).unwrap().volume_path)).unwrap();
        let graph = read_graph(a.path().join(&ma.volume(&rec.source_volume_id).unwrap().graph_path)).unwrap();
        let s = load_sample(a.path(), rec).unwrap();
        let edge = graph.edge(s.edge_id).unwrap();
        assert_eq!(validate_sample(&s, &source, edge), vec![], "{}", s.sample_id);
        let meta: SampleRecord =
            serde_json::from_slice(&std::fs::read(a.path().join(&rec.meta_path)).unwrap()).unwrap();
        assert_eq!(&meta, rec);
    }
}

#[test]
fn shortfall_is_recorded() {
    // Depth 2 trees have two eligible edges at most.
    let src = sources(2, 64, 2, false);
    let cfg = DatasetConfig { branches_per_volume: 30, split_ratio: [1, 0, 0], ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&src, &cfg, dir.path(), 1).unwrap();
    for v in &m.volumes {
        assert!(v.emitted <= 2);
        assert_eq!(v.shortfall, 30 - v.emitted);
    }
}

#[test]
fn removed_voxels_stay_near_the_gap() {
    for s in sources(6, 96, 4, false) {
        let cfg = DatasetConfig { branches_per_volume: 6, seed: 3, ..Default::default() };
        synthesize_volume(&s, 0, Split::Val, &cfg, |sample| {
            let edge = s.graph.edge(sample.edge_id).unwrap();
            assert!(validate_sample(&sample, &s.volume, edge).is_empty());
            let l = connected_components(&sample.disconnected, Connectivity::TwentySix);
            assert_eq!(l.num_components(), 2);
            assert_eq!(l.label_at(sample.kp1), 1);
            assert_eq!(l.label_at(sample.kp2), 2);
            assert_eq!(sample.fixed_crop_centers.len(), 3);
            for c in &sample.fixed_crop_centers {
                assert_eq!(l.label_at(*c), 2);
            }
            Ok(())
        })
        .unwrap();
    }
}
