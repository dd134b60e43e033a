//! Desk-scale end-to-end training on synthetic phantoms.

pub mod checkpoint;
mod config;
pub mod net;
mod optim;
mod phantom;
mod preprocess;
mod train;

pub use config::TrainConfig;
pub use net::{Conv3d, Precision, Scalar, TinyNet};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use phantom::{generate_phantom, Phantom, PhantomConfig, LEAF_INTENSITIES, REGIONS};
pub use preprocess::{
    crop_offset, normalize_intensity, normalize_value, random_crop, random_crop_with, HU_MAX, HU_MIN,
};
pub use train::{
    build_dataset, mean_leaf_dice, train, Dataset, LossRecord, Model, Segmenter, TrainOutcome, ValidationRecord,
};
