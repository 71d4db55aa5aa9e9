//! Whole-volume keypoint detection: crop around each small component, run the
//! detector and add the crop heatmaps into a volume-sized accumulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{PreparedSample, Tensor, UNet, Variant};
use crate::error::{Error, Result};
use crate::heatmap::{render_gaussian, HeatmapTensor, KeypointTarget, DEFAULT_SIGMA, NUM_KEYPOINTS};
use crate::metrics::EvalRecord;
use crate::spatial::NearestPoints;
use crate::synth::DisconnectionSample;
use crate::volume::{centered_origin, connected_components, crop_with, Connectivity, LabelVolume, Volume3D, VoxelCoord};

pub const RESULT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    Pooled,
    PerComponent,
}

impl std::str::FromStr for InferenceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Self::Pooled),
            "per_component" | "per-component" => Ok(Self::PerComponent),
            other => Err(Error::InvalidArgument(format!("unknown inference mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Crops drawn per candidate component.
    pub crops_per_component: usize,
    /// Components smaller than this are treated as noise.
    pub noise_min_voxels: usize,
    pub crop_extent: usize,
    pub mode: InferenceMode,
    pub seed: u64,
    /// Feed the unseparated volume crop to every input channel.
    pub raw_input: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            crops_per_component: 3,
            noise_min_voxels: 5,
            crop_extent: 32,
            mode: InferenceMode::Pooled,
            seed: 0,
            raw_input: false,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crops_per_component == 0 {
            return Err(Error::InvalidArgument("crops per component must be at least 1".into()));
        }
        if self.crop_extent == 0 {
            return Err(Error::InvalidArgument("crop extent must be positive".into()));
        }
        Ok(())
    }
}

/// Anything that maps a crop to keypoint heatmaps of the same extent.
pub trait KeypointModel {
    fn input_channels(&self) -> usize;

    /// `input` is `[channels, e0, e1, e2]`; `origin` is the crop's position
    /// in the volume and may be negative near the borders.
    fn predict(&mut self, input: &[f32], extent: [usize; 3], origin: [i64; 3]) -> Result<HeatmapTensor>;
}

impl KeypointModel for UNet<f32> {
    fn input_channels(&self) -> usize {
        self.config().in_channels
    }

    fn predict(&mut self, input: &[f32], extent: [usize; 3], _origin: [i64; 3]) -> Result<HeatmapTensor> {
        let c = self.config();
        let x = Tensor::from_vec(&[1, c.in_channels, extent[0], extent[1], extent[2]], input.to_vec())?;
        let out = self.forward(&x, false)?;
        HeatmapTensor::from_data(c.out_channels, extent, out.data)
    }
}

/// Returns the ground-truth Gaussians of known keypoints for every crop.
#[derive(Debug, Clone)]
pub struct OracleModel {
    pub keypoints: Vec<VoxelCoord>,
    pub sigma: f64,
    pub channels: usize,
}

impl OracleModel {
    pub fn new(keypoints: Vec<VoxelCoord>) -> Self {
        Self {
            keypoints,
            sigma: DEFAULT_SIGMA,
            channels: 2,
        }
    }
}

impl KeypointModel for OracleModel {
    fn input_channels(&self) -> usize {
        self.channels
    }

    fn predict(&mut self, _input: &[f32], extent: [usize; 3], origin: [i64; 3]) -> Result<HeatmapTensor> {
        let coords = self
            .keypoints
            .iter()
            .map(|k| {
                let c = k.as_i64();
                [c[0] - origin[0], c[1] - origin[1], c[2] - origin[2]]
            })
            .collect();
        render_gaussian(&KeypointTarget::new(coords, extent), extent, self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDetection {
    pub label: u32,
    pub size: usize,
    pub crop_centers: Vec<VoxelCoord>,
    /// Argmax over this component's crops only.
    pub keypoints: Vec<VoxelCoord>,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub config: InferenceConfig,
    /// Pooled argmax per channel; empty without candidates.
    pub keypoints: Vec<VoxelCoord>,
    pub components: Vec<ComponentDetection>,
    pub accumulator: Option<HeatmapTensor>,
    /// Labels refer to the noise-filtered component labelling of the input.
    pub labels: LabelVolume,
}

impl InferenceResult {
    pub fn candidate_components(&self) -> Vec<u32> {
        self.components.iter().map(|c| c.label).collect()
    }
}

/// Adds `hm` into `acc` with `hm`'s voxel (0,0,0) at `offset` of `acc`, dropping
/// whatever falls outside.
pub fn accumulate(acc: &mut HeatmapTensor, hm: &HeatmapTensor, offset: [i64; 3]) -> Result<()> {
    if acc.channels != hm.channels {
        return Err(Error::ShapeMismatch(format!(
            "accumulating {} channels into {}",
            hm.channels, acc.channels
        )));
    }
    let (a, e) = (acc.extent, hm.extent);
    let lo = |k: usize| (-offset[k]).max(0) as usize;
    let hi = |k: usize| (a[k] as i64 - offset[k]).clamp(0, e[k] as i64) as usize;
    let (z0, y0, x0) = (lo(0), lo(1), lo(2));
    let (z1, y1, x1) = (hi(0), hi(1), hi(2));
    if z0 >= z1 || y0 >= y1 || x0 >= x1 {
        return Ok(());
    }
    for ch in 0..hm.channels {
        let src = hm.channel(ch);
        let dst = acc.channel_mut(ch);
        for z in z0..z1 {
            for y in y0..y1 {
                let s = (z * e[1] + y) * e[2];
                let gz = (z as i64 + offset[0]) as usize;
                let gy = (y as i64 + offset[1]) as usize;
                let d = (gz * a[1] + gy) * a[2];
                let gx0 = (x0 as i64 + offset[2]) as usize;
                for (o, v) in dst[d + gx0..d + gx0 + (x1 - x0)].iter_mut().zip(&src[s + x0..s + x1]) {
                    *o += v;
                }
            }
        }
    }
    Ok(())
}

fn argmax(hm: &HeatmapTensor, origin: [usize; 3]) -> Vec<VoxelCoord> {
    crate::heatmap::decode_argmax(hm)
        .into_iter()
        .map(|c| VoxelCoord::new(c.z + origin[0], c.y + origin[1], c.x + origin[2]))
        .collect()
}

fn model_input(
    vol: &Volume3D,
    labels: &LabelVolume,
    candidate: u32,
    origin: [i64; 3],
    extent: [usize; 3],
    channels: usize,
    raw: bool,
) -> Result<Vec<f32>> {
    let dims = vol.dims();
    let lab = labels.labels();
    let one = |b: bool| if b { 1.0f32 } else { 0.0 };
    if raw {
        let c = crop_with(dims, origin, extent, 0.0, |i| one(vol.data()[i]));
        return Ok(c.data.repeat(channels));
    }
    match channels {
        1 => Ok(crop_with(dims, origin, extent, 0.0, |i| one(lab[i] == 1 || lab[i] == candidate)).data),
        2 => {
            let main = crop_with(dims, origin, extent, 0.0, |i| one(lab[i] == 1));
            let cand = crop_with(dims, origin, extent, 0.0, |i| one(lab[i] == candidate));
            Ok([main.data, cand.data].concat())
        }
        n => Err(Error::InvalidArgument(format!("model expects {n} input channels"))),
    }
}

/// Detects the break keypoints of a whole volume.
///
/// Every component other than the largest (after dropping components below
/// the noise threshold) is a candidate. Each candidate gets
/// `crops_per_component` crops centered on seeded uniform voxels of the
/// component; crop heatmaps are summed into a volume-sized accumulator. The
/// pooled keypoints are the per-channel argmax of that accumulator; in
/// per-component mode each candidate also gets the argmax over its own crops.
pub fn detect_whole_volume<M: KeypointModel + ?Sized>(
    vol: &Volume3D,
    model: &mut M,
    cfg: &InferenceConfig,
) -> Result<InferenceResult> {
    cfg.validate()?;
    if vol.count() == 0 {
        return Err(Error::EmptyVolume);
    }
    let dims = vol.dims();
    let labels = connected_components(vol, Connectivity::TwentySix).filter_small_components(cfg.noise_min_voxels);
    let extent = [cfg.crop_extent; 3];
    let channels = model.input_channels();
    if channels == 0 || channels > 2 {
        return Err(Error::InvalidArgument(format!("model expects {channels} input channels")));
    }

    let mut acc: Option<HeatmapTensor> = None;
    let mut components = Vec::new();
    for label in 2..=labels.num_components() as u32 {
        let voxels = labels.voxels(label);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(label as u64);
        let centers: Vec<VoxelCoord> = (0..cfg.crops_per_component)
            .map(|_| voxels[rng.gen_range(0..voxels.len())])
            .collect();

        let origins: Vec<[i64; 3]> = centers.iter().map(|&c| centered_origin(c, extent)).collect();
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for o in &origins {
            for k in 0..3 {
                lo[k] = lo[k].min(o[k].max(0) as usize);
                hi[k] = hi[k].max((o[k] + extent[k] as i64).min(dims[k] as i64) as usize);
            }
        }
        let box_extent = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let mut local: Option<HeatmapTensor> = None;
        for &origin in &origins {
            let input = model_input(vol, &labels, label, origin, extent, channels, cfg.raw_input)?;
            let hm = model.predict(&input, extent, origin)?;
            if hm.extent != extent {
                return Err(Error::ShapeMismatch(format!("model returned extent {:?}", hm.extent)));
            }
            let local = local.get_or_insert_with(|| HeatmapTensor::zeros(hm.channels, box_extent));
            let shift = [origin[0] - lo[0] as i64, origin[1] - lo[1] as i64, origin[2] - lo[2] as i64];
            accumulate(local, &hm, shift)?;
        }
        let local = local.expect("at least one crop");
        let acc = acc.get_or_insert_with(|| HeatmapTensor::zeros(local.channels, dims));
        accumulate(acc, &local, [lo[0] as i64, lo[1] as i64, lo[2] as i64])?;
        components.push(ComponentDetection {
            label,
            size: voxels.len(),
            crop_centers: centers,
            keypoints: match cfg.mode {
                InferenceMode::PerComponent => argmax(&local, lo),
                InferenceMode::Pooled => Vec::new(),
            },
        });
    }
    let keypoints = acc.as_ref().map(|a| argmax(a, [0; 3])).unwrap_or_default();
    Ok(InferenceResult {
        config: *cfg,
        keypoints,
        components,
        accumulator: acc,
        labels,
    })
}

/// Keypoints snapped onto their components, ready for bridging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointPair {
    pub label: u32,
    pub kp1: VoxelCoord,
    pub kp2: VoxelCoord,
    pub snap_distances: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Pairing {
    pub pairs: Vec<KeypointPair>,
    pub warnings: Vec<String>,
}

fn snap(index: &NearestPoints, q: VoxelCoord) -> Option<(VoxelCoord, f64)> {
    index.nearest(q).map(|(i, d2)| (index.point(i), (d2 as f64).sqrt()))
}

fn component_index(labels: &LabelVolume, label: u32) -> NearestPoints {
    let pts = labels.voxels(label);
    let keys = pts.iter().map(|p| p.linear(labels.dims())).collect();
    NearestPoints::new(labels.dims(), pts, keys)
}

/// Snaps KP1 onto the largest component and KP2 onto its candidate. In pooled
/// mode the candidate is the one closest to the pooled KP2.
pub fn pair_components(result: &InferenceResult) -> Pairing {
    let mut out = Pairing::default();
    if result.components.is_empty() {
        return out;
    }
    let labels = &result.labels;
    let main = component_index(labels, 1);
    let one = |label: u32, kps: &[VoxelCoord], cand: &NearestPoints, out: &mut Pairing| {
        if kps.len() < NUM_KEYPOINTS {
            out.warnings.push(format!("component {label}: no keypoints"));
            return;
        }
        match (snap(&main, kps[0]), snap(cand, kps[1])) {
            (Some((kp1, d1)), Some((kp2, d2))) => out.pairs.push(KeypointPair {
                label,
                kp1,
                kp2,
                snap_distances: [d1, d2],
            }),
            _ => out.warnings.push(format!("component {label}: empty component, skipped")),
        }
    };
    match result.config.mode {
        InferenceMode::PerComponent => {
            for c in &result.components {
                let cand = component_index(labels, c.label);
                one(c.label, &c.keypoints, &cand, &mut out);
            }
        }
        InferenceMode::Pooled => {
            if result.keypoints.len() < NUM_KEYPOINTS {
                out.warnings.push("no pooled keypoints".into());
                return out;
            }
            let pts: Vec<VoxelCoord> = result
                .components
                .iter()
                .flat_map(|c| labels.voxels(c.label))
                .collect();
            let keys = pts.iter().map(|p| p.linear(labels.dims())).collect();
            let all = NearestPoints::new(labels.dims(), pts, keys);
            let Some((near, _)) = snap(&all, result.keypoints[1]) else {
                out.warnings.push("no candidate voxels".into());
                return out;
            };
            let label = labels.label_at(near);
            let cand = component_index(labels, label);
            one(label, &result.keypoints, &cand, &mut out);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentJson {
    pub label: u32,
    pub kp1: [usize; 3],
    pub kp2: [usize; 3],
    pub snap_distances: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub version: u32,
    pub mode: InferenceMode,
    pub keypoints: Vec<[usize; 3]>,
    pub per_component: Vec<ComponentJson>,
    pub candidate_components: Vec<u32>,
    pub warnings: Vec<String>,
    pub config_echo: InferenceConfig,
}

impl ResultJson {
    pub fn new(result: &InferenceResult, pairing: &Pairing) -> Self {
        Self {
            version: RESULT_VERSION,
            mode: result.config.mode,
            keypoints: result.keypoints.iter().map(|c| c.as_array()).collect(),
            per_component: pairing
                .pairs
                .iter()
                .map(|p| ComponentJson {
                    label: p.label,
                    kp1: p.kp1.as_array(),
                    kp2: p.kp2.as_array(),
                    snap_distances: p.snap_distances,
                })
                .collect(),
            candidate_components: result.candidate_components(),
            warnings: pairing.warnings.clone(),
            config_echo: result.config,
        }
    }

    pub fn pairs(&self) -> Vec<KeypointPair> {
        self.per_component
            .iter()
            .map(|c| KeypointPair {
                label: c.label,
                kp1: VoxelCoord::new(c.kp1[0], c.kp1[1], c.kp1[2]),
                kp2: VoxelCoord::new(c.kp2[0], c.kp2[1], c.kp2[2]),
                snap_distances: c.snap_distances,
            })
            .collect()
    }
}

/// Scores a model on the stored fixed crops of one sample: one record per
/// crop, with distances between the decoded and true keypoints in the crop.
pub fn eval_records<M: KeypointModel + ?Sized>(
    sample: &DisconnectionSample,
    model: &mut M,
    crop_extent: usize,
) -> Result<Vec<EvalRecord>> {
    let variant = match model.input_channels() {
        1 => Variant::One,
        2 => Variant::Two,
        n => return Err(Error::InvalidArgument(format!("model expects {n} input channels"))),
    };
    let prepared = PreparedSample::new(sample)?;
    let extent = [crop_extent; 3];
    let mut out = Vec::new();
    for (i, &center) in sample.fixed_crop_centers.iter().enumerate() {
        let (input, target) = prepared.crop(center, extent, variant)?;
        let hm = model.predict(&input, extent, centered_origin(center, extent))?;
        let decoded = crate::heatmap::decode_argmax(&hm);
        let distances = target
            .coords
            .iter()
            .zip(&decoded)
            .map(|(t, d)| {
                let d = d.as_i64();
                (0..3).map(|k| ((t[k] - d[k]) as f64).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        out.push(EvalRecord {
            sample_id: format!("{}#{i}", sample.sample_id),
            distances,
            visibility: target.visibility,
            branch_volume_s: sample.branch_volume_s as f64,
            branch_mean_radius: sample.branch_mean_radius,
        });
    }
    Ok(out)
}
