//! Image ingestion, preprocessing, offline augmentation, stratified
//! splitting and batching.

mod augment;
mod batch;
mod image;
mod manifest;

pub use self::augment::{
    augment_record, center_zoom, flip_horizontal, flip_vertical, rotate, AugmentConfig, BorderPolicy, Provenance,
    AUGMENTATIONS,
};
pub(crate) use self::batch::prefetch;
pub use self::batch::{batch_order, make_batches, Batch, BatchIter, Dataset, ImagePipeline};
pub use self::image::{decode_image, encode_png, preprocess, rescale, resize_bilinear};
pub use self::manifest::{
    scan_dataset, split_counts, split_dataset, ClassCounts, DatasetManifest, ImageRecord, LabelledPaths, Split,
    SplitRatios, MANIFEST_VERSION, MIN_ORIGINALS_PER_CLASS,
};

/// Side length of the square images fed to the classifier.
pub const IMAGE_SIZE: usize = 256;
