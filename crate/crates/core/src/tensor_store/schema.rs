use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::{json, Value};

use super::checkpoint::Checkpoint;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaField {
    Presence,
    Shape,
    Dtype,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemaMismatch {
    pub tensor: String,
    pub field: SchemaField,
    /// One entry per checkpoint, in input order. Presence mismatches list booleans.
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemaReport {
    pub compatible: bool,
    pub mismatches: Vec<SchemaMismatch>,
}

impl SchemaReport {
    pub fn describe(&self) -> String {
        self.mismatches
            .iter()
            .map(|m| {
                let vals: Vec<String> = m.values.iter().map(Value::to_string).collect();
                format!("tensor `{}` {:?}: [{}]", m.tensor, m.field, vals.join(", "))
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Compares name sets, shapes and dtypes across an ensemble.
pub fn validate_schema(ensemble: &[&Checkpoint]) -> SchemaReport {
    let names: BTreeSet<&str> = ensemble.iter().flat_map(|c| c.names()).collect();
    let mut mismatches = Vec::new();
    for name in names {
        let recs: Vec<_> = ensemble.iter().map(|c| c.get(name)).collect();
        if recs.iter().any(Option::is_none) {
            mismatches.push(SchemaMismatch {
                tensor: name.to_string(),
                field: SchemaField::Presence,
                values: recs.iter().map(|r| Value::Bool(r.is_some())).collect(),
            });
            continue;
        }
        let recs: Vec<_> = recs.into_iter().flatten().collect();
        if recs.iter().any(|r| r.shape() != recs[0].shape()) {
            mismatches.push(SchemaMismatch {
                tensor: name.to_string(),
                field: SchemaField::Shape,
                values: recs.iter().map(|r| json!(r.shape())).collect(),
            });
        }
        if recs.iter().any(|r| r.dtype() != recs[0].dtype()) {
            mismatches.push(SchemaMismatch {
                tensor: name.to_string(),
                field: SchemaField::Dtype,
                values: recs.iter().map(|r| json!(r.dtype().as_str())).collect(),
            });
        }
    }
    SchemaReport {
        compatible: mismatches.is_empty(),
        mismatches,
    }
}

pub(crate) fn ensure_compatible(ensemble: &[&Checkpoint]) -> Result<()> {
    let report = validate_schema(ensemble);
    if report.compatible {
        Ok(())
    } else {
        Err(Error::Schema(report.describe()))
    }
}

/// Same tensor names and shapes; dtypes may differ since arithmetic is in f64.
pub(crate) fn ensure_aligned(a: &Checkpoint, b: &Checkpoint, what: &str) -> Result<()> {
    for r in a.tensors() {
        match b.get(r.name()) {
            None => {
                return Err(Error::Schema(format!(
                    "tensor `{}` is missing from the {what}",
                    r.name()
                )))
            }
            Some(o) if o.shape() != r.shape() => {
                return Err(Error::Schema(format!(
                    "tensor `{}` has shape {:?} but the {what} has {:?}",
                    r.name(),
                    r.shape(),
                    o.shape()
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = b.names().find(|n| !a.contains(n)) {
        return Err(Error::Schema(format!(
            "tensor `{extra}` appears only in the {what}"
        )));
    }
    Ok(())
}
