use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, load_weights};
use super::data::{PreparedSample, Variant};
use super::optim::{AdamWConfig, OptimState};
use super::tensor::Tensor;
use super::unet::{NetConfig, UNet};
use crate::error::{Error, Result};
use crate::heatmap::{kmse_grad, kmse_loss, render_gaussian, HeatmapTensor, KeypointTarget, DEFAULT_SIGMA};
use crate::volume::VoxelCoord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub base_width: usize,
    pub crop_extent: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub init_from: Option<PathBuf>,
    pub optim: AdamWConfig,
    pub sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Two,
            base_width: 16,
            crop_extent: 32,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            max_steps: None,
            seed: 0,
            init_from: None,
            optim: AdamWConfig::default(),
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.crop_extent == 0 || self.crop_extent % 8 != 0 {
            return Err(Error::InvalidArgument(format!(
                "crop extent {} is not a positive multiple of 8",
                self.crop_extent
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn extent(&self) -> [usize; 3] {
        [self.crop_extent; 3]
    }
}

/// One crop ready for the network.
#[derive(Debug, Clone)]
pub struct CropItem {
    pub input: Vec<f32>,
    pub target: HeatmapTensor,
    pub visibility: Vec<bool>,
}

impl CropItem {
    pub fn new(input: Vec<f32>, kp: &KeypointTarget, extent: [usize; 3], sigma: f64) -> Result<Self> {
        Ok(Self {
            input,
            target: render_gaussian(kp, extent, sigma)?,
            visibility: kp.visibility.clone(),
        })
    }
}

/// A network with its optimizer.
pub struct Trainer {
    pub net: UNet<f32>,
    pub optim: OptimState,
}

fn stack(items: &[&CropItem], channels: usize, extent: [usize; 3]) -> Result<Tensor<f32>> {
    let data: Vec<f32> = items.iter().flat_map(|c| c.input.iter().copied()).collect();
    Tensor::from_vec(&[items.len(), channels, extent[0], extent[1], extent[2]], data)
}

fn batch_loss(out: &Tensor<f32>, items: &[&CropItem], grad: bool) -> Result<(f64, Option<Tensor<f32>>)> {
    let (n, k, e) = (out.shape[0], out.shape[1], [out.shape[2], out.shape[3], out.shape[4]]);
    let per = k * e.iter().product::<usize>();
    let mut total = 0.0;
    let mut g = grad.then(|| Tensor::zeros(&out.shape));
    for (s, item) in items.iter().enumerate() {
        let pred = HeatmapTensor::from_data(k, e, out.data[s * per..(s + 1) * per].to_vec())?;
        total += kmse_loss(&pred, &item.target, &item.visibility)?;
        if let Some(g) = &mut g {
            let d = kmse_grad(&pred, &item.target, &item.visibility)?;
            for (o, v) in g.data[s * per..(s + 1) * per].iter_mut().zip(d.data) {
                *o = v / n as f32;
            }
        }
    }
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok((loss, g))
}

impl Trainer {
    pub fn new(config: NetConfig, optim: AdamWConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            net: UNet::new(config, seed)?,
            optim: OptimState::new(optim),
        })
    }

    /// Forward, KMSE, backward and one AdamW update on a batch. Returns the
    /// mean per-sample loss before the update.
    pub fn step(&mut self, items: &[&CropItem]) -> Result<f64> {
        let extent = items[0].target.extent;
        let x = stack(items, self.net.config().in_channels, extent)?;
        self.net.zero_grad();
        let out = self.net.forward(&x, true)?;
        let (loss, g) = batch_loss(&out, items, true)?;
        self.net.backward(&g.expect("gradient requested"))?;
        self.optim.step(&mut self.net);
        Ok(loss)
    }

    /// Mean KMSE in inference mode.
    pub fn evaluate(&mut self, items: &[CropItem], batch: usize) -> Result<f64> {
        evaluate(&mut self.net, items, batch)
    }
}

pub fn evaluate(net: &mut UNet<f32>, items: &[CropItem], batch: usize) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let mut total = 0.0;
    for chunk in items.chunks(batch.max(1)) {
        let refs: Vec<&CropItem> = chunk.iter().collect();
        let x = stack(&refs, net.config().in_channels, chunk[0].target.extent)?;
        let out = net.forward(&x, false)?;
        total += batch_loss(&out, &refs, false)?.0 * chunk.len() as f64;
    }
    Ok(total / items.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

/// Crops at the stored validation centers of every sample.
pub fn fixed_crops(samples: &[PreparedSample], cfg: &TrainConfig) -> Result<Vec<CropItem>> {
    let e = cfg.extent();
    let mut out = Vec::new();
    for s in samples {
        for &c in &s.fixed_crop_centers {
            let (x, kp) = s.crop(c, e, cfg.variant)?;
            out.push(CropItem::new(x, &kp, e, cfg.sigma)?);
        }
    }
    Ok(out)
}

/// Epoch loop with early stopping; returns the network restored to its
/// best epoch along with the optimizer state at the end of training.
///
/// Every epoch visits the training samples in a seeded random order, each
/// cropped around a fresh random voxel of its detached component. The loss
/// that drives early stopping is the validation loss when `val` has fixed
/// crops, else the epoch's mean training loss.
pub fn train(
    train_set: &[PreparedSample],
    val: &[PreparedSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Trainer, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    let mut trainer = Trainer::new(NetConfig::new(cfg.variant.in_channels(), cfg.base_width), cfg.optim, cfg.seed)?;
    if let Some(path) = &cfg.init_from {
        load_weights(&mut trainer.net, &load_checkpoint(path)?)?;
    }
    let val_items = fixed_crops(val, cfg)?;
    let e = cfg.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::new(),
        step_losses: Vec::new(),
        best_epoch: 0,
        best_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut best = trainer.net.named_tensors();
    let mut since_best = 0;
    'epochs: for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| report.step_losses.len() >= m) {
                break;
            }
            let items: Vec<CropItem> = chunk
                .iter()
                .map(|&i| {
                    let s = &train_set[i];
                    let center: VoxelCoord = s.random_center(&mut rng);
                    let (x, kp) = s.crop(center, e, cfg.variant)?;
                    CropItem::new(x, &kp, e, cfg.sigma)
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&CropItem> = items.iter().collect();
            let loss = trainer.step(&refs)?;
            report.step_losses.push(loss);
            epoch_loss += loss;
            steps += 1;
        }
        if steps == 0 {
            break;
        }
        let train_loss = epoch_loss / steps as f64;
        let val_loss = if val_items.is_empty() {
            None
        } else {
            Some(trainer.evaluate(&val_items, cfg.batch_size)?)
        };
        let stats = EpochStats {
            epoch,
            steps,
            train_loss,
            val_loss,
        };
        on_epoch(&stats);
        report.epochs.push(stats);
        let monitored = val_loss.unwrap_or(train_loss);
        if monitored < report.best_loss {
            report.best_loss = monitored;
            report.best_epoch = epoch;
            best = trainer.net.named_tensors();
            since_best = 0;
        } else {
            if since_best >= cfg.patience {
                report.stopped_early = true;
                break 'epochs;
            }
            since_best += 1;
        }
    }
    let mut i = 0;
    trainer.net.visit(&mut |_, t, _| {
        t.data.clone_from(&best[i].1.data);
        i += 1;
    });
    Ok((trainer, report))
}
