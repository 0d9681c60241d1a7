//! Domain-aware augmentation and target-guided filtering for few-shot
//! cross-domain object detection datasets.
//!
//! The crate turns a large labelled source split and a handful of labelled
//! target images into a stream of augmented training candidates, then keeps
//! the candidates whose embeddings sit closest to the target set:
//!
//! 1. [`dataset`] loads and writes YOLO-style directories with optional
//!    soft class confidences.
//! 2. [`image_aug`] builds cross-domain mosaics (splice) and blends
//!    (reallocation), recomputing labels exactly.
//! 3. [`box_aug`] exchanges same-class box contents across domains with
//!    direct, mixture, or Gaussian weights.
//! 4. [`embedding`] supplies feature vectors, built in or from a trainer.
//! 5. [`selection`] scores candidates and applies the shrinkage filter.
//! 6. [`pipeline`] drives the per-epoch loop and writes run directories.

pub mod box_aug;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod image_aug;
pub mod pipeline;
pub mod selection;

pub use image::RgbImage;
pub use dataset::{load_dataset, resize_letterbox, save_dataset, BoxLabel, DatasetSplit, DomainTag, LabeledImage, SplitRole};
pub use embedding::{embed_builtin, load_embedding_file, EmbeddingProvider, EmbeddingVector};
pub use error::{Error, ErrorKind, Result};
pub use image_aug::{AugmentedSample, Contribution, Recipe, TilePlacement};
pub use pipeline::{generate_candidates, run_epoch, run_loop, EpochState, PipelineConfig, RunSummary};
pub use selection::{cosine_dist, filter_top_k, mmd_sq, Metric, ScoredCandidate};
