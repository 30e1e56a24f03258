//! Container layout:
//!
//! ```text
//! [0, 8)        u64 LE header length H
//! [8, 8 + H)    UTF-8 JSON object:
//!                 { "__metadata__": { str: str, ... },            (optional)
//!                   "<name>": { "dtype": "F16"|"BF16"|"F32"|"F64",
//!                               "shape": [d0, d1, ...],
//!                               "data_offsets": [begin, end] }, ... }
//! [8 + H, ..)   data region; offsets are relative to its start
//! ```
//!
//! Writers emit tensors in name order with packed offsets and pad the header
//! with trailing spaces to a multiple of 8 bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::checkpoint::{byte_len, Checkpoint, TensorRecord};
use super::dtype::DType;
use crate::error::{Error, Result};

pub const MAX_HEADER_BYTES: u64 = 100_000_000;
const METADATA_KEY: &str = "__metadata__";
const HEADER_ALIGN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("file is {0} bytes, too short for the 8-byte header length")]
    TooShort(usize),
    #[error("empty header")]
    EmptyHeader,
    #[error("header length {0} exceeds the {MAX_HEADER_BYTES}-byte limit")]
    HeaderTooLarge(u64),
    #[error("header length {declared} runs past the end of the file ({available} bytes after the length prefix)")]
    HeaderTruncated { declared: u64, available: usize },
    #[error("header is not valid UTF-8")]
    HeaderUtf8,
    #[error("malformed header JSON: {0}")]
    HeaderJson(String),
    #[error("malformed metadata: {0}")]
    BadMetadata(String),
    #[error("tensor `{name}`: unknown dtype `{dtype}`")]
    UnknownDtype { name: String, dtype: String },
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("tensor `{name}`: {detail}")]
    BadEntry { name: String, detail: String },
    #[error("tensor `{name}`: data offsets [{begin}, {end}) exceed the {len}-byte data region")]
    OffsetsOutOfRange {
        name: String,
        begin: u64,
        end: u64,
        len: usize,
    },
    #[error("tensor `{name}`: data offsets overlap tensor `{other}`")]
    OverlappingOffsets { name: String, other: String },
    #[error("tensor `{name}`: {actual} data bytes but dtype and shape require {expected}")]
    SizeMismatch {
        name: String,
        expected: usize,
        actual: usize,
    },
}

/// Header entries in file order, keeping duplicates so they can be reported.
struct RawHeader(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for RawHeader {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = RawHeader;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<RawHeader, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(RawHeader(out))
            }
        }
        d.deserialize_map(V)
    }
}

struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    begin: u64,
    end: u64,
}

fn parse_entry(name: &str, v: &Value) -> Result<Entry, FormatError> {
    let bad = |detail: &str| FormatError::BadEntry {
        name: name.to_string(),
        detail: detail.to_string(),
    };
    let obj = v.as_object().ok_or_else(|| bad("entry is not an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "dtype" | "shape" | "data_offsets") {
            return Err(bad(&format!("unexpected field `{key}`")));
        }
    }
    let dtype_str = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing or non-string `dtype`"))?;
    let dtype = DType::parse(dtype_str).ok_or_else(|| FormatError::UnknownDtype {
        name: name.to_string(),
        dtype: dtype_str.to_string(),
    })?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing or non-array `shape`"))?
        .iter()
        .map(|d| d.as_u64().and_then(|d| usize::try_from(d).ok()))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| bad("`shape` must hold non-negative integers"))?;
    let offsets = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing or non-array `data_offsets`"))?;
    let (begin, end) = match offsets.as_slice() {
        [b, e] => (
            b.as_u64()
                .ok_or_else(|| bad("`data_offsets` must be integers"))?,
            e.as_u64()
                .ok_or_else(|| bad("`data_offsets` must be integers"))?,
        ),
        _ => return Err(bad("`data_offsets` must have exactly two entries")),
    };
    Ok(Entry {
        name: name.to_string(),
        dtype,
        shape,
        begin,
        end,
    })
}

fn parse_metadata(v: &Value) -> Result<BTreeMap<String, String>, FormatError> {
    let obj = v
        .as_object()
        .ok_or_else(|| FormatError::BadMetadata("`__metadata__` is not an object".into()))?;
    obj.iter()
        .map(|(k, v)| match v {
            Value::String(s) => Ok((k.clone(), s.clone())),
            _ => Err(FormatError::BadMetadata(format!(
                "value for `{k}` is not a string"
            ))),
        })
        .collect()
}

/// Parses a complete container held in memory.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    if bytes.len() < 8 {
        return Err(FormatError::TooShort(bytes.len()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    if header_len == 0 {
        return Err(FormatError::EmptyHeader);
    }
    if header_len > MAX_HEADER_BYTES {
        return Err(FormatError::HeaderTooLarge(header_len));
    }
    let available = bytes.len() - 8;
    if header_len as usize > available {
        return Err(FormatError::HeaderTruncated {
            declared: header_len,
            available,
        });
    }
    let header_end = 8 + header_len as usize;
    let header = std::str::from_utf8(&bytes[8..header_end]).map_err(|_| FormatError::HeaderUtf8)?;
    let raw: RawHeader =
        serde_json::from_str(header).map_err(|e| FormatError::HeaderJson(e.to_string()))?;
    let data = &bytes[header_end..];

    let mut metadata = None;
    let mut entries = Vec::with_capacity(raw.0.len());
    let mut seen = std::collections::HashSet::new();
    for (key, value) in &raw.0 {
        if !seen.insert(key.as_str()) {
            if key == METADATA_KEY {
                return Err(FormatError::BadMetadata(
                    "`__metadata__` appears twice".into(),
                ));
            }
            return Err(FormatError::DuplicateName(key.clone()));
        }
        if key == METADATA_KEY {
            metadata = Some(parse_metadata(value)?);
        } else {
            entries.push(parse_entry(key, value)?);
        }
    }

    for e in &entries {
        if e.begin > e.end || e.end > data.len() as u64 {
            return Err(FormatError::OffsetsOutOfRange {
                name: e.name.clone(),
                begin: e.begin,
                end: e.end,
                len: data.len(),
            });
        }
        let expected = byte_len(e.dtype, &e.shape).ok_or_else(|| FormatError::BadEntry {
            name: e.name.clone(),
            detail: "shape overflows addressable size".into(),
        })?;
        let actual = (e.end - e.begin) as usize;
        if actual != expected {
            return Err(FormatError::SizeMismatch {
                name: e.name.clone(),
                expected,
                actual,
            });
        }
    }

    let mut by_offset: Vec<&Entry> = entries.iter().collect();
    by_offset.sort_by_key(|e| (e.begin, e.end));
    for w in by_offset.windows(2) {
        if w[1].begin < w[0].end {
            return Err(FormatError::OverlappingOffsets {
                name: w[1].name.clone(),
                other: w[0].name.clone(),
            });
        }
    }

    let mut ckpt = Checkpoint::new();
    for e in entries {
        let bytes = data[e.begin as usize..e.end as usize].to_vec();
        ckpt.insert(TensorRecord::new(e.name, e.dtype, e.shape, bytes)?)?;
    }
    ckpt.set_metadata(metadata);
    Ok(ckpt)
}

/// Canonical serialization: name-ascending tensors, packed offsets from 0.
pub fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut header = String::from("{");
    let mut first = true;
    let mut push_key = |header: &mut String, key: &str| {
        if !first {
            header.push(',');
        }
        first = false;
        header.push_str(&serde_json::to_string(key).expect("string serializes"));
        header.push(':');
    };
    if let Some(meta) = ckpt.metadata() {
        push_key(&mut header, METADATA_KEY);
        header.push_str(&serde_json::to_string(meta).expect("string map serializes"));
    }
    let mut offset = 0usize;
    for r in ckpt.tensors() {
        push_key(&mut header, r.name());
        let end = offset + r.data().len();
        header.push_str(&format!(
            "{{\"dtype\":\"{}\",\"shape\":{},\"data_offsets\":[{},{}]}}",
            r.dtype(),
            serde_json::to_string(r.shape()).expect("shape serializes"),
            offset,
            end
        ));
        offset = end;
    }
    header.push('}');
    let pad = (HEADER_ALIGN - header.len() % HEADER_ALIGN) % HEADER_ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));

    let mut out = Vec::with_capacity(8 + header.len() + offset);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for r in ckpt.tensors() {
        out.extend_from_slice(r.data());
    }
    out
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `ckpt` canonically. The file appears atomically via rename.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &to_bytes(ckpt))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(header: &str, data: &[u8]) -> Vec<u8> {
        let mut out = (header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(data);
        out
    }

    fn f32_bytes(v: &[f32]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn hand_built_file_loads_and_round_trips() {
        let data = f32_bytes(&[1.0, 2.0]);
        let raw = file(
            r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}}"#,
            &data,
        );
        let ckpt = from_bytes(&raw).unwrap();
        assert_eq!(ckpt.len(), 1);
        let a = ckpt.get("a").unwrap();
        assert_eq!(a.data(), data.as_slice());
        assert_eq!(a.to_f64(), vec![1.0, 2.0]);
        assert_eq!(ckpt.metadata(), None);

        // canonical form is the same JSON padded to 8 bytes
        let canon = to_bytes(&ckpt);
        let header_len = u64::from_le_bytes(canon[..8].try_into().unwrap()) as usize;
        assert_eq!(header_len % 8, 0);
        assert_eq!(&canon[8 + header_len..], data.as_slice());
        assert_eq!(from_bytes(&canon).unwrap(), ckpt);
        assert_eq!(to_bytes(&from_bytes(&canon).unwrap()), canon);
    }

    #[test]
    fn empty_header_rejected() {
        assert_eq!(
            from_bytes(&0u64.to_le_bytes()),
            Err(FormatError::EmptyHeader)
        );
        assert_eq!(from_bytes(&[1, 2, 3]), Err(FormatError::TooShort(3)));
    }

    #[test]
    fn duplicate_names_rejected() {
        let data = f32_bytes(&[1.0, 2.0]);
        let raw = file(
            r#"{"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"a":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}}"#,
            &data,
        );
        assert_eq!(
            from_bytes(&raw),
            Err(FormatError::DuplicateName("a".into()))
        );
    }

    #[test]
    fn unknown_dtype_names_tensor() {
        let raw = file(
            r#"{"q":{"dtype":"I8","shape":[1],"data_offsets":[0,1]}}"#,
            &[0],
        );
        assert_eq!(
            from_bytes(&raw),
            Err(FormatError::UnknownDtype {
                name: "q".into(),
                dtype: "I8".into()
            })
        );
    }

    #[test]
    fn offsets_checked() {
        let data = f32_bytes(&[1.0, 2.0]);
        let past_end = file(
            r#"{"a":{"dtype":"F32","shape":[3],"data_offsets":[0,12]}}"#,
            &data,
        );
        assert!(matches!(
            from_bytes(&past_end),
            Err(FormatError::OffsetsOutOfRange { name, .. }) if name == "a"
        ));
        let overlap = file(
            r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}}"#,
            &data,
        );
        assert!(matches!(
            from_bytes(&overlap),
            Err(FormatError::OverlappingOffsets { name, other }) if name == "b" && other == "a"
        ));
        let wrong_size = file(
            r#"{"a":{"dtype":"F32","shape":[1],"data_offsets":[0,8]}}"#,
            &data,
        );
        assert!(matches!(
            from_bytes(&wrong_size),
            Err(FormatError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn malformed_json_and_header_bounds() {
        assert!(matches!(
            from_bytes(&file("{not json", &[])),
            Err(FormatError::HeaderJson(_))
        ));
        assert!(matches!(
            from_bytes(&file("[]", &[])),
            Err(FormatError::HeaderJson(_))
        ));
        let mut truncated = 100u64.to_le_bytes().to_vec();
        truncated.extend_from_slice(b"{}");
        assert!(matches!(
            from_bytes(&truncated),
            Err(FormatError::HeaderTruncated { .. })
        ));
        let huge = (MAX_HEADER_BYTES + 1).to_le_bytes();
        assert_eq!(
            from_bytes(&huge),
            Err(FormatError::HeaderTooLarge(MAX_HEADER_BYTES + 1))
        );
    }

    #[test]
    fn metadata_preserved_and_validated() {
        let raw = file(r#"{"__metadata__":{"format":"pt"}}"#, &[]);
        let ckpt = from_bytes(&raw).unwrap();
        assert_eq!(ckpt.metadata().unwrap()["format"], "pt");
        assert!(ckpt.is_empty());
        assert_eq!(from_bytes(&to_bytes(&ckpt)).unwrap(), ckpt);
        let bad = file(r#"{"__metadata__":{"n":1}}"#, &[]);
        assert!(matches!(from_bytes(&bad), Err(FormatError::BadMetadata(_))));
    }

    #[test]
    fn zero_tensors_is_an_empty_object() {
        let bytes = to_bytes(&Checkpoint::new());
        let h = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 8 + h);
        assert_eq!(std::str::from_utf8(&bytes[8..]).unwrap().trim_end(), "{}");
        assert!(from_bytes(&bytes).unwrap().is_empty());
    }

    #[test]
    fn f64_square_matrix_data_region() {
        let vals: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let ckpt =
            Checkpoint::from_records([
                TensorRecord::from_f64("m", DType::F64, vec![3, 3], &vals).unwrap()
            ])
            .unwrap();
        let bytes = to_bytes(&ckpt);
        let h = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        assert_eq!(bytes.len() - 8 - h, 72);
    }

    #[test]
    fn on_disk_order_does_not_matter() {
        let a = f32_bytes(&[1.0]);
        let b = f32_bytes(&[2.0, 3.0]);
        let mut ab = a.clone();
        ab.extend_from_slice(&b);
        let mut ba = b.clone();
        ba.extend_from_slice(&a);
        let f1 = file(
            r#"{"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}}"#,
            &ab,
        );
        let f2 = file(
            r#"{"b":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"a":{"dtype":"F32","shape":[1],"data_offsets":[8,12]}}"#,
            &ba,
        );
        let c1 = from_bytes(&f1).unwrap();
        let c2 = from_bytes(&f2).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(to_bytes(&c1), to_bytes(&c2));
    }
}
