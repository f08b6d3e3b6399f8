//! The 6-band encoder-decoder segmenter, its training recipe (band-mean
//! subtraction, rotation/flip augmentation, Adam with polynomial decay) and
//! tile inference.

pub mod model;
mod recipe;
mod train;

pub use model::{Segmenter, CHECKPOINT_KIND, INPUT_BANDS, NUM_CLASSES};
pub use recipe::{augment, compute_band_means, normalize, BandMeans, Transform};
pub use train::{infer, load_segmenter, train_seg, write_seg_log, SegLogRow, SegSample, SegTrainConfig};
