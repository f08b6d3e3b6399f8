//! Cross-sensor domain adaptation for multispectral land-cover segmentation.
//!
//! The crate covers the whole desk-scale workflow:
//!
//! - [`raster`]: the MBT raster container, band compositing, value shifting,
//!   cloud masking, tiling and 16-bit ↔ `[-1, 1]` rescaling.
//! - [`labels`]: the NALCMS, CORINE and General land-cover schemes with
//!   recoding, class distributions and crosswalk matrices.
//! - [`numerics`]: a small reverse-mode tensor engine with convolution,
//!   AdaIN, adversarial and cross-entropy losses, Adam and polynomial decay.
//! - [`style`]: moment-matching and adversarial AdaIN style transfer and the
//!   mixed dataset.
//! - [`segmentation`]: the 6-band encoder-decoder segmenter, its training
//!   recipe and tile inference.
//! - [`evaluation`]: confusion matrices, IoU / mIoU, random-point validation,
//!   label-map rendering and the comparison report.
//! - [`pipeline`]: the synthetic two-domain benchmark and the resumable
//!   end-to-end runner.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod labels;
pub mod numerics;
pub mod pipeline;
pub mod raster;
pub mod segmentation;
pub mod style;

pub use error::{Error, Result};
