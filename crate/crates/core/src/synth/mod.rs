//! Disconnection synthesis from intact trees, plus procedural phantoms.

mod carve;
mod dataset;
mod phantom;
mod sampling;

pub use carve::{carve_gap, validate_sample, Carve, CarveParams, DisconnectionSample, Split, Violation};
pub use dataset::{
    assign_splits, generate_dataset, load_sample, split_counts, synthesize_volume, DatasetConfig, Manifest,
    SampleRecord, SourceVolume, SplitLists, VolumeRecord, VolumeYield, MANIFEST_VERSION,
};
pub use phantom::{generate_phantom_tree, rasterize_line, PhantomParams};
pub use sampling::{eligible_edges, sample_keypoints, select_branch, BranchCriteria, Separation};
