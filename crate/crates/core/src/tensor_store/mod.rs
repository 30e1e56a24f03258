//! Checkpoint container: reading, writing and schema checks.

mod checkpoint;
mod dtype;
mod format;
mod schema;

pub use checkpoint::{digest_order, Checkpoint, ContentDigest, Layout, TensorRecord, TensorValues};
pub use dtype::DType;
pub use format::{
    from_bytes, load_checkpoint, save_checkpoint, to_bytes, write_atomic, FormatError,
    MAX_HEADER_BYTES,
};
pub use schema::{validate_schema, SchemaField, SchemaMismatch, SchemaReport};

pub(crate) use schema::{ensure_aligned, ensure_compatible};
