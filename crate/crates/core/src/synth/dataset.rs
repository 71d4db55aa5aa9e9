use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::carve::{carve_gap, validate_sample, CarveParams, DisconnectionSample, Split};
use super::sampling::{eligible_edges, sample_keypoints, select_branch, BranchCriteria, Separation};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::skeleton::{write_graph, BranchGraph};
use crate::volume::{read_volume, write_volume, Volume3D, VoxelCoord};

pub const MANIFEST_VERSION: u32 = 1;
const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub branches_per_volume: usize,
    pub split_ratio: [u32; 3],
    pub seed: u64,
    pub criteria: BranchCriteria,
    pub separation: Separation,
    pub carve: CarveParams,
    pub max_retries: usize,
    pub crops_per_sample: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            branches_per_volume: 30,
            split_ratio: [7, 1, 2],
            seed: 0,
            criteria: BranchCriteria::default(),
            separation: Separation::default(),
            carve: CarveParams::default(),
            max_retries: 10,
            crops_per_sample: 3,
        }
    }
}

/// An intact tree and its centerline graph.
#[derive(Debug, Clone)]
pub struct SourceVolume {
    pub id: String,
    pub volume: Volume3D,
    pub graph: BranchGraph,
}

/// Split sizes by largest remainder, ties going to the earlier split.
pub fn split_counts(n: usize, ratio: [u32; 3]) -> Result<[usize; 3]> {
    let total: u64 = ratio.iter().map(|&r| r as u64).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("split ratio sums to zero".into()));
    }
    let mut counts = [0usize; 3];
    let mut rems = [0u64; 3];
    for k in 0..3 {
        let q = n as u64 * ratio[k] as u64;
        counts[k] = (q / total) as usize;
        rems[k] = q % total;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    Ok(counts)
}

/// Seeded assignment of source volumes to splits; returns one split per volume.
pub fn assign_splits(n: usize, ratio: [u32; 3], seed: u64) -> Result<Vec<Split>> {
    let counts = split_counts(n, ratio)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    order.shuffle(&mut rng);
    let mut out = vec![Split::Train; n];
    for (pos, &vol) in order.iter().enumerate() {
        out[vol] = if pos < counts[0] {
            Split::Train
        } else if pos < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

fn volume_rng(seed: u64, volume_index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ volume_index as u64);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeYield {
    pub eligible: usize,
    pub emitted: usize,
    pub shortfall: usize,
    pub failed_attempts: usize,
}

/// Carves up to `branches_per_volume` breaks on distinct edges of one source
/// volume, handing each validated sample to `emit` in slot order.
pub fn synthesize_volume(
    source: &SourceVolume,
    volume_index: usize,
    split: Split,
    cfg: &DatasetConfig,
    mut emit: impl FnMut(DisconnectionSample) -> Result<()>,
) -> Result<VolumeYield> {
    let graph = &source.graph;
    if graph.dims != source.volume.dims() {
        return Err(Error::ShapeMismatch(format!(
            "graph dims {:?} vs volume dims {:?}",
            graph.dims,
            source.volume.dims()
        )));
    }
    let eligible = eligible_edges(graph, &cfg.criteria).len();
    let mut rng = volume_rng(cfg.seed, volume_index, 0);
    let mut used: Vec<usize> = Vec::new();
    // Edges already carved or too short for any keypoint pair.
    let mut excluded: Vec<usize> = Vec::new();
    let mut failed = 0;
    for slot in 0..cfg.branches_per_volume {
        if excluded.len() >= eligible {
            break;
        }
        for _ in 0..cfg.max_retries.max(1) {
            if excluded.len() >= eligible {
                break;
            }
            let edge_id = select_branch(graph, &mut rng, &cfg.criteria, &excluded)?;
            let edge = graph.edge(edge_id).ok_or_else(|| Error::Schema(format!("edge {edge_id}")))?;
            let attempt = sample_keypoints(graph, edge, &mut rng, cfg.separation)
                .and_then(|(k1, k2)| Ok((k1, k2, carve_gap(&source.volume, edge, k1, k2, cfg.carve)?)));
            let (k1, k2, carve) = match attempt {
                Ok(a) => a,
                Err(Error::InfeasibleSeparation(_)) => {
                    excluded.push(edge_id);
                    failed += 1;
                    continue;
                }
                Err(Error::InvalidTopology(_)) => {
                    failed += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let kp2 = edge.points[k2];
            let fixed_crop_centers = match split {
                Split::Train => Vec::new(),
                Split::Val | Split::Test => {
                    let comp = carve.labels.voxels(carve.labels.label_at(kp2));
                    let mut crng = volume_rng(cfg.seed, volume_index, 1 + slot as u64);
                    (0..cfg.crops_per_sample)
                        .map(|_| comp[crng.gen_range(0..comp.len())])
                        .collect()
                }
            };
            let sample = DisconnectionSample {
                sample_id: format!("{}_b{slot:02}", source.id),
                source_volume_id: source.id.clone(),
                edge_id,
                kp1: edge.points[k1],
                kp2,
                kp1_index: k1,
                kp2_index: k2,
                gap_radius: carve.gap_radius,
                disconnected: carve.disconnected,
                branch_mean_radius: edge.mean_radius,
                branch_volume_s: edge.branch_volume_s,
                kp1_component_label: 1,
                kp2_component_label: 2,
                split,
                fixed_crop_centers,
            };
            if !validate_sample(&sample, &source.volume, edge).is_empty() {
                failed += 1;
                continue;
            }
            used.push(edge_id);
            excluded.push(edge_id);
            emit(sample)?;
            break;
        }
    }
    Ok(VolumeYield {
        eligible,
        emitted: used.len(),
        shortfall: cfg.branches_per_volume - used.len(),
        failed_attempts: failed,
    })
}

/// Scalar fields of a sample plus paths relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub source_volume_id: String,
    pub edge_id: usize,
    pub kp1: VoxelCoord,
    pub kp2: VoxelCoord,
    pub kp1_index: usize,
    pub kp2_index: usize,
    pub gap_radius: f64,
    pub branch_mean_radius: f64,
    #[serde(rename = "branch_volume_S")]
    pub branch_volume_s: u64,
    pub kp1_component_label: u32,
    pub kp2_component_label: u32,
    pub split: Split,
    pub fixed_crop_centers: Vec<VoxelCoord>,
    pub disconnected_path: String,
    pub meta_path: String,
}

impl SampleRecord {
    fn new(s: &DisconnectionSample, dir: &str) -> Self {
        Self {
            sample_id: s.sample_id.clone(),
            source_volume_id: s.source_volume_id.clone(),
            edge_id: s.edge_id,
            kp1: s.kp1,
            kp2: s.kp2,
            kp1_index: s.kp1_index,
            kp2_index: s.kp2_index,
            gap_radius: s.gap_radius,
            branch_mean_radius: s.branch_mean_radius,
            branch_volume_s: s.branch_volume_s,
            kp1_component_label: s.kp1_component_label,
            kp2_component_label: s.kp2_component_label,
            split: s.split,
            fixed_crop_centers: s.fixed_crop_centers.clone(),
            disconnected_path: format!("{dir}/disconnected.btv"),
            meta_path: format!("{dir}/meta.json"),
        }
    }

    pub fn into_sample(self, disconnected: Volume3D) -> DisconnectionSample {
        DisconnectionSample {
            sample_id: self.sample_id,
            source_volume_id: self.source_volume_id,
            edge_id: self.edge_id,
            kp1: self.kp1,
            kp2: self.kp2,
            kp1_index: self.kp1_index,
            kp2_index: self.kp2_index,
            gap_radius: self.gap_radius,
            disconnected,
            branch_mean_radius: self.branch_mean_radius,
            branch_volume_s: self.branch_volume_s,
            kp1_component_label: self.kp1_component_label,
            kp2_component_label: self.kp2_component_label,
            split: self.split,
            fixed_crop_centers: self.fixed_crop_centers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub volume_id: String,
    pub split: Split,
    pub volume_path: String,
    pub graph_path: String,
    pub eligible_edges: usize,
    pub emitted: usize,
    pub shortfall: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub branches_per_volume: usize,
    pub split_ratio: [u32; 3],
    pub splits: SplitLists,
    pub volumes: Vec<VolumeRecord>,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(&std::fs::read(path)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion(m.version));
        }
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("manifest serialization is infallible")
    }

    pub fn samples_in(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn volume(&self, id: &str) -> Option<&VolumeRecord> {
        self.volumes.iter().find(|v| v.volume_id == id)
    }
}

/// Loads the carved volume of a manifest record.
pub fn load_sample(root: &Path, record: &SampleRecord) -> Result<DisconnectionSample> {
    let vol = read_volume(root.join(&record.disconnected_path))?;
    Ok(record.clone().into_sample(vol))
}

/// Builds a dataset under `root`: source trees once per volume, one directory
/// per sample and `manifest.json`. Volumes are processed on up to `jobs`
/// threads; output does not depend on `jobs`.
pub fn generate_dataset(sources: &[SourceVolume], cfg: &DatasetConfig, root: &Path, jobs: usize) -> Result<Manifest> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument("no source volumes".into()));
    }
    let splits = assign_splits(sources.len(), cfg.split_ratio, cfg.seed)?;

    type Outcome = Result<(VolumeRecord, Vec<SampleRecord>)>;
    let results: Vec<Mutex<Option<Outcome>>> = sources.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= sources.len() {
            break;
        }
        let out = process_volume(&sources[i], i, splits[i], cfg, root);
        *results[i].lock().unwrap() = Some(out);
    };
    let jobs = jobs.clamp(1, sources.len());
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }

    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        branches_per_volume: cfg.branches_per_volume,
        split_ratio: cfg.split_ratio,
        splits: SplitLists::default(),
        volumes: Vec::new(),
        samples: Vec::new(),
    };
    for r in results {
        let (vrec, srecs) = r.into_inner().unwrap().expect("every volume processed")?;
        match vrec.split {
            Split::Train => manifest.splits.train.push(vrec.volume_id.clone()),
            Split::Val => manifest.splits.val.push(vrec.volume_id.clone()),
            Split::Test => manifest.splits.test.push(vrec.volume_id.clone()),
        }
        manifest.volumes.push(vrec);
        manifest.samples.extend(srecs);
    }
    atomic_write(&root.join("manifest.json"), &manifest.to_bytes())?;
    Ok(manifest)
}

fn process_volume(
    source: &SourceVolume,
    index: usize,
    split: Split,
    cfg: &DatasetConfig,
    root: &Path,
) -> Result<(VolumeRecord, Vec<SampleRecord>)> {
    let vdir = format!("sources/{}", source.id);
    write_volume(&source.volume, root.join(&vdir).join("volume.btv"))?;
    write_graph(&source.graph, root.join(&vdir).join("graph.json"))?;
    let mut records = Vec::new();
    let y = synthesize_volume(source, index, split, cfg, |s| {
        let dir = format!("samples/{}", s.sample_id);
        let rec = SampleRecord::new(&s, &dir);
        let base: PathBuf = root.join(&dir);
        write_volume(&s.disconnected, base.join("disconnected.btv"))?;
        atomic_write(
            &base.join("meta.json"),
            &serde_json::to_vec_pretty(&rec).expect("record serialization is infallible"),
        )?;
        records.push(rec);
        Ok(())
    })?;
    Ok((
        VolumeRecord {
            volume_id: source.id.clone(),
            split,
            volume_path: format!("{vdir}/volume.btv"),
            graph_path: format!("{vdir}/graph.json"),
            eligible_edges: y.eligible,
            emitted: y.emitted,
            shortfall: y.shortfall,
        },
        records,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_volumes_split_seven_one_two() {
        assert_eq!(split_counts(10, [7, 1, 2]).unwrap(), [7, 1, 2]);
        assert_eq!(split_counts(60, [7, 1, 2]).unwrap(), [42, 6, 12]);
        assert_eq!(split_counts(3, [7, 1, 2]).unwrap(), [2, 0, 1]);
        assert_eq!(split_counts(1, [7, 1, 2]).unwrap(), [1, 0, 0]);
        let s = assign_splits(10, [7, 1, 2], 3).unwrap();
        let count = |k| s.iter().filter(|&&x| x == k).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (7, 1, 2));
    }

    #[test]
    fn eight_hundred_volume_split() {
        // 800 volumes at 30 branches each.
        let counts = split_counts(800, [7, 1, 2]).unwrap();
        assert_eq!(counts.iter().sum::<usize>() * 30, 800 * 30);
        assert_eq!(counts, [560, 80, 160]);
    }

    #[test]
    fn split_assignment_is_seeded() {
        assert_eq!(assign_splits(20, [7, 1, 2], 5).unwrap(), assign_splits(20, [7, 1, 2], 5).unwrap());
        assert_ne!(assign_splits(20, [7, 1, 2], 5).unwrap(), assign_splits(20, [7, 1, 2], 6).unwrap());
    }
}
