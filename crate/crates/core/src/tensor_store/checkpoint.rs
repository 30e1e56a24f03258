use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use super::dtype::DType;
use super::FormatError;

/// Tensor name to shape, in canonical (bytewise ascending) name order.
pub type Layout = BTreeMap<String, Vec<usize>>;

/// Tensor name to values promoted to `f64`.
pub type TensorValues = BTreeMap<String, Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorRecord {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl TensorRecord {
    pub fn new(
        name: impl Into<String>,
        dtype: DType,
        shape: Vec<usize>,
        data: Vec<u8>,
    ) -> Result<Self, FormatError> {
        let name = name.into();
        let expected = byte_len(dtype, &shape).ok_or_else(|| FormatError::BadEntry {
            name: name.clone(),
            detail: "shape overflows addressable size".into(),
        })?;
        if expected != data.len() {
            return Err(FormatError::SizeMismatch {
                name,
                expected,
                actual: data.len(),
            });
        }
        Ok(TensorRecord {
            name,
            dtype,
            shape,
            data,
        })
    }

    /// Builds a record by rounding `values` into `dtype`.
    pub fn from_f64(
        name: impl Into<String>,
        dtype: DType,
        shape: Vec<usize>,
        values: &[f64],
    ) -> Result<Self, FormatError> {
        let mut data = Vec::new();
        dtype.encode(values, &mut data);
        TensorRecord::new(name, dtype, shape, data)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Element count; the empty shape is a scalar with one element.
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        self.dtype.decode(&self.data, &mut out);
        out
    }
}

pub(crate) fn byte_len(dtype: DType, shape: &[usize]) -> Option<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))?
        .checked_mul(dtype.size())
}

/// SHA-256 over tensor names, dtypes, shapes and data. Metadata is excluded.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentDigest([u8; 32]);

impl ContentDigest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Display for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentDigest({})", self.short())
    }
}

/// An ordered set of named tensors plus optional string metadata.
///
/// Tensors iterate in bytewise name order regardless of how they were
/// inserted or laid out on disk.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Checkpoint {
    tensors: BTreeMap<String, TensorRecord>,
    metadata: Option<BTreeMap<String, String>>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records<I>(records: I) -> Result<Self, FormatError>
    where
        I: IntoIterator<Item = TensorRecord>,
    {
        let mut ckpt = Checkpoint::new();
        for r in records {
            ckpt.insert(r)?;
        }
        Ok(ckpt)
    }

    /// Rebuilds a checkpoint from `f64` values, rounding each tensor into the
    /// dtype chosen by `dtype_of`.
    pub fn from_values<F>(
        values: &TensorValues,
        layout: &Layout,
        mut dtype_of: F,
    ) -> Result<Self, FormatError>
    where
        F: FnMut(&str) -> DType,
    {
        let mut ckpt = Checkpoint::new();
        for (name, shape) in layout {
            let v = values.get(name).ok_or_else(|| FormatError::BadEntry {
                name: name.clone(),
                detail: "no values supplied".into(),
            })?;
            ckpt.insert(TensorRecord::from_f64(
                name.clone(),
                dtype_of(name),
                shape.clone(),
                v,
            )?)?;
        }
        Ok(ckpt)
    }

    pub fn insert(&mut self, record: TensorRecord) -> Result<(), FormatError> {
        if self.tensors.contains_key(record.name()) {
            return Err(FormatError::DuplicateName(record.name));
        }
        self.tensors.insert(record.name.clone(), record);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &TensorRecord> {
        self.tensors.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(TensorRecord::numel).sum()
    }

    pub fn metadata(&self) -> Option<&BTreeMap<String, String>> {
        self.metadata.as_ref()
    }

    pub fn set_metadata(&mut self, metadata: Option<BTreeMap<String, String>>) {
        self.metadata = metadata;
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn layout(&self) -> Layout {
        self.tensors
            .iter()
            .map(|(k, r)| (k.clone(), r.shape.clone()))
            .collect()
    }

    pub fn values(&self) -> TensorValues {
        self.tensors
            .iter()
            .map(|(k, r)| (k.clone(), r.to_f64()))
            .collect()
    }

    pub fn digest(&self) -> ContentDigest {
        let mut h = Sha256::new();
        h.update((self.tensors.len() as u64).to_le_bytes());
        for r in self.tensors.values() {
            h.update((r.name.len() as u64).to_le_bytes());
            h.update(r.name.as_bytes());
            h.update(r.dtype.as_str().as_bytes());
            h.update((r.shape.len() as u64).to_le_bytes());
            for d in &r.shape {
                h.update((*d as u64).to_le_bytes());
            }
            h.update((r.data.len() as u64).to_le_bytes());
            h.update(&r.data);
        }
        ContentDigest(h.finalize().into())
    }
}

/// Orders checkpoints by content digest, the canonical reduction order.
pub fn digest_order<'a>(ckpts: &[&'a Checkpoint]) -> Vec<(ContentDigest, &'a Checkpoint)> {
    let mut keyed: Vec<_> = ckpts.iter().map(|c| (c.digest(), *c)).collect();
    keyed.sort_by_key(|a| a.0);
    keyed
}
