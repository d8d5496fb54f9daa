//! Loop-detector records, min-max normalization and sliding-window samples.

mod normalize;
mod records;
mod samples;

pub use normalize::{denormalize, fit_normalization, normalize, NormalizationParams};
pub use records::{read_records, read_records_from, write_records, write_records_to, CorridorShape, LoopRecord};
pub use samples::{
    build_samples, prepare_dataset, split_dataset, train_count, Dataset, RecordGrid, Sample, WindowStats,
};
