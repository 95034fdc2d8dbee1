//! Synthetic and ingested datasets, normalization and on-disk containers.

mod container;
mod csv;
mod normalize;
mod sine;

pub use container::{
    decode_checkpoint, decode_dataset, encode_checkpoint, encode_dataset, load_checkpoint, load_dataset,
    save_checkpoint, save_dataset, Checkpoint, DatasetFile, ModelConfig, ModelKind, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION, DATASET_MAGIC, DATASET_VERSION,
};
pub use csv::{csv_ingest, parse_table, window_starts, windows_from_table, CsvOptions};
pub use normalize::{denormalize, normalize, NormalizationState};
pub use sine::{sine_generate, sine_generate_with_params, FREQ_RANGE};
