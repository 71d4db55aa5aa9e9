use tuberepair::detector::{NetConfig, UNet};
use tuberepair::error::Result;
use tuberepair::heatmap::{render_gaussian, HeatmapTensor, KeypointTarget};
use tuberepair::inference::*;
use tuberepair::repair::repair_volume;
use tuberepair::volume::{connected_components, Connectivity, Volume3D, VoxelCoord};

/// Straight bar along x with a two-voxel gap at x = 28, 29.
fn broken_bar() -> (Volume3D, VoxelCoord, VoxelCoord) {
    let vol = Volume3D::from_fn([8, 8, 40], |c| (3..=4).contains(&c.z) && (3..=4).contains(&c.y) && c.x != 28 && c.x != 29);
    (vol, VoxelCoord::new(3, 3, 27), VoxelCoord::new(3, 3, 30))
}

fn cfg(mode: InferenceMode, t: usize) -> InferenceConfig {
    InferenceConfig {
        crops_per_component: t,
        mode,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn oracle_recovers_keypoints() {
    let (vol, kp1, kp2) = broken_bar();
    for mode in [InferenceMode::Pooled, InferenceMode::PerComponent] {
        let mut oracle = OracleModel::new(vec![kp1, kp2]);
        let r = detect_whole_volume(&vol, &mut oracle, &cfg(mode, 3)).unwrap();
        assert_eq!(r.keypoints, vec![kp1, kp2]);
        assert_eq!(r.candidate_components(), vec![2]);
        let pairing = pair_components(&r);
        assert_eq!(pairing.pairs.len(), 1);
        let p = &pairing.pairs[0];
        assert_eq!((p.kp1, p.kp2, p.snap_distances), (kp1, kp2, [0.0, 0.0]));
        if mode == InferenceMode::PerComponent {
            assert_eq!(r.components[0].keypoints, vec![kp1, kp2]);
        }
    }
}

#[test]
fn crop_count_does_not_move_oracle_peaks() {
    let (vol, kp1, kp2) = broken_bar();
    let one = detect_whole_volume(&vol, &mut OracleModel::new(vec![kp1, kp2]), &cfg(InferenceMode::Pooled, 1)).unwrap();
    let three = detect_whole_volume(&vol, &mut OracleModel::new(vec![kp1, kp2]), &cfg(InferenceMode::Pooled, 3)).unwrap();
    assert_eq!(one.keypoints, three.keypoints);
}

#[test]
fn single_component_has_no_candidates() {
    let vol = Volume3D::from_fn([8, 8, 20], |c| c.z == 3 && c.y == 3);
    let r = detect_whole_volume(&vol, &mut OracleModel::new(vec![VoxelCoord::new(3, 3, 0); 2]), &cfg(InferenceMode::Pooled, 3))
        .unwrap();
    assert!(r.components.is_empty() && r.keypoints.is_empty() && r.accumulator.is_none());
    assert!(pair_components(&r).pairs.is_empty());
    assert!(detect_whole_volume(&Volume3D::new([4, 4, 4]), &mut OracleModel::new(vec![]), &cfg(InferenceMode::Pooled, 1)).is_err());
}

#[test]
fn noise_specks_are_not_candidates() {
    let (mut vol, kp1, kp2) = broken_bar();
    vol.set(VoxelCoord::new(0, 0, 0), true);
    vol.set(VoxelCoord::new(0, 0, 1), true);
    let r = detect_whole_volume(&vol, &mut OracleModel::new(vec![kp1, kp2]), &cfg(InferenceMode::Pooled, 2)).unwrap();
    assert_eq!(r.components.len(), 1);
    assert_eq!(r.components[0].size, 40);
}

#[test]
fn snapping_reports_distance() {
    let (vol, kp1, _) = broken_bar();
    let off = VoxelCoord::new(3, 3, 29);
    let r = detect_whole_volume(&vol, &mut OracleModel::new(vec![kp1, off]), &cfg(InferenceMode::Pooled, 3)).unwrap();
    assert_eq!(r.keypoints[1], off);
    let p = &pair_components(&r).pairs[0];
    assert_eq!(p.kp2, VoxelCoord::new(3, 3, 30));
    assert_eq!(p.snap_distances, [0.0, 1.0]);
}

/// Emits a fixed pseudo-random field that depends on the crop origin.
struct Noise;

impl KeypointModel for Noise {
    fn input_channels(&self) -> usize {
        2
    }
    fn predict(&mut self, _: &[f32], extent: [usize; 3], origin: [i64; 3]) -> Result<HeatmapTensor> {
        let n = 2 * extent.iter().product::<usize>();
        let s = (origin[0] * 31 + origin[1] * 17 + origin[2] * 7) as u64;
        let data = (0..n as u64).map(|i| ((i * 2654435761 + s * 97) % 1000) as f32 / 1000.0).collect();
        HeatmapTensor::from_data(2, extent, data)
    }
}

#[test]
fn accumulator_is_sum_of_covering_crops() {
    let dims = [10, 12, 14];
    let vol = Volume3D::from_fn(dims, |c| {
        (c.z == 5 && c.y == 5 && c.x < 6) || (c.z == 1 && c.y == 9 && c.x > 8) || (c.z == 8 && c.y == 1 && c.x > 7)
    });
    let c = InferenceConfig {
        crops_per_component: 4,
        crop_extent: 8,
        seed: 2,
        ..Default::default()
    };
    let r = detect_whole_volume(&vol, &mut Noise, &c).unwrap();
    assert_eq!(r.components.len(), 2);
    let acc = r.accumulator.as_ref().unwrap();
    let mut naive = vec![0.0f64; acc.data.len()];
    let plane = dims.iter().product::<usize>();
    for comp in &r.components {
        for &center in &comp.crop_centers {
            let o = tuberepair::volume::centered_origin(center, [8; 3]);
            let hm = Noise.predict(&[], [8; 3], o).unwrap();
            for ch in 0..2 {
                for lz in 0..8 {
                    for ly in 0..8 {
                        for lx in 0..8 {
                            let g = [o[0] + lz, o[1] + ly, o[2] + lx];
                            if (0..3).all(|k| g[k] >= 0 && (g[k] as usize) < dims[k]) {
                                let gi = (g[0] as usize * dims[1] + g[1] as usize) * dims[2] + g[2] as usize;
                                naive[ch * plane + gi] +=
                                    hm.data[ch * 512 + (lz as usize * 8 + ly as usize) * 8 + lx as usize] as f64;
                            }
                        }
                    }
                }
            }
        }
    }
    for (a, b) in acc.data.iter().zip(&naive) {
        assert!((*a as f64 - b).abs() < 1e-4);
    }
}

#[test]
fn fixed_seed_is_deterministic() {
    let (vol, _, _) = broken_bar();
    let mut net = UNet::<f32>::new(NetConfig::new(2, 2), 1).unwrap();
    let a = detect_whole_volume(&vol, &mut net, &cfg(InferenceMode::PerComponent, 3)).unwrap();
    let b = detect_whole_volume(&vol, &mut net, &cfg(InferenceMode::PerComponent, 3)).unwrap();
    assert_eq!(a.components, b.components);
    assert_eq!(a.accumulator, b.accumulator);
    assert!(a.keypoints.iter().all(|k| k.in_bounds(vol.dims())));
    let json = ResultJson::new(&a, &pair_components(&a));
    let v: serde_json::Value = serde_json::from_slice(&serde_json::to_vec(&json).unwrap()).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["mode"], "per_component");
    assert_eq!(v["config_echo"]["seed"], 5);
}

/// Main bar along x with two side branches cut off just above it.
fn comb() -> (Volume3D, [(VoxelCoord, VoxelCoord); 2]) {
    let vol = Volume3D::from_fn([24, 8, 40], |c| {
        let bar = (3..=4).contains(&c.z) && (3..=4).contains(&c.y);
        let side = (3..=4).contains(&c.y) && (8..20).contains(&c.z) && ((8..=9).contains(&c.x) || (28..=29).contains(&c.x));
        bar || side
    });
    let breaks = [
        (VoxelCoord::new(4, 3, 8), VoxelCoord::new(8, 3, 8)),
        (VoxelCoord::new(4, 3, 28), VoxelCoord::new(8, 3, 28)),
    ];
    (vol, breaks)
}

/// Renders the break whose KP2 is closest to the crop center.
struct NearestBreak([(VoxelCoord, VoxelCoord); 2]);

impl KeypointModel for NearestBreak {
    fn input_channels(&self) -> usize {
        2
    }
    fn predict(&mut self, _: &[f32], extent: [usize; 3], o: [i64; 3]) -> Result<HeatmapTensor> {
        let center = [o[0] + 16, o[1] + 16, o[2] + 16];
        let dist = |k: VoxelCoord| {
            let a = k.as_i64();
            (0..3).map(|i| (a[i] - center[i]).pow(2)).sum::<i64>()
        };
        let (k1, k2) = *self.0.iter().min_by_key(|b| dist(b.1)).unwrap();
        let local = |k: VoxelCoord| {
            let a = k.as_i64();
            [a[0] - o[0], a[1] - o[1], a[2] - o[2]]
        };
        render_gaussian(&KeypointTarget::new(vec![local(k1), local(k2)], extent), extent, 2.5)
    }
}

#[test]
fn two_breaks_are_paired_and_bridged() {
    let (vol, breaks) = comb();
    assert_eq!(connected_components(&vol, Connectivity::TwentySix).num_components(), 3);
    let r = detect_whole_volume(&vol, &mut NearestBreak(breaks), &cfg(InferenceMode::PerComponent, 3)).unwrap();
    let pairing = pair_components(&r);
    assert_eq!(pairing.pairs.len(), 2);
    let mut got: Vec<_> = pairing.pairs.iter().map(|p| (p.kp1, p.kp2)).collect();
    got.sort();
    assert_eq!(got, breaks.to_vec());
    let (fixed, log) = repair_volume(&vol, &pairing.pairs, &[Some(1.0), Some(1.0)]).unwrap();
    assert_eq!(connected_components(&fixed, Connectivity::TwentySix).num_components(), 1);
    assert_eq!((log[0].pre_components, log[1].post_components), (3, 1));
}
