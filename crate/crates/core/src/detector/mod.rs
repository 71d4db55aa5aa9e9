//! Heatmap keypoint detector: a small 3D U-Net trained with AdamW.

mod checkpoint;
mod data;
mod direct;
pub mod layers;
mod optim;
mod tensor;
mod train;
mod unet;

pub use checkpoint::{load_checkpoint, load_weights, save_checkpoint, Checkpoint};
pub use data::{make_training_input, PreparedSample, Variant};
pub use optim::{AdamWConfig, OptimState};
pub use tensor::{Real, Tensor};
pub use train::{evaluate, fixed_crops, train, CropItem, EpochStats, TrainConfig, TrainReport, Trainer};
pub use unet::{NetConfig, UNet};
