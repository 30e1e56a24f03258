use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::{Layout, TensorValues};

/// How tensors are grouped into the vectors that carry one angle and one ratio.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Granularity {
    /// Every tensor concatenated into one vector.
    Global,
    #[default]
    PerTensor,
    /// One unit per leading-dimension slice of rank >= 2 tensors; lower-rank
    /// tensors stay whole.
    PerFilter,
    /// Tensors grouped by label. Unlisted tensors form their own unit.
    PerBlock { block_map: BTreeMap<String, String> },
}

impl Granularity {
    /// Parses the command-line spelling (`global|tensor|filter|block`).
    pub fn parse(kind: &str, block_map: Option<BTreeMap<String, String>>) -> Result<Self> {
        let g = match kind {
            "global" => Granularity::Global,
            "tensor" => Granularity::PerTensor,
            "filter" => Granularity::PerFilter,
            "block" => Granularity::PerBlock {
                block_map: block_map
                    .ok_or_else(|| Error::invalid("block granularity requires a block map"))?,
            },
            other => {
                return Err(Error::invalid(format!(
                    "unknown granularity `{other}` (expected global, tensor, filter or block)"
                )))
            }
        };
        Ok(g)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Granularity::Global => "global",
            Granularity::PerTensor => "tensor",
            Granularity::PerFilter => "filter",
            Granularity::PerBlock { .. } => "block",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reporting tag only: derived from rank, not from the layer's role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitClass {
    Weight,
    Bias,
    Other,
}

impl UnitClass {
    pub fn from_rank(rank: usize) -> Self {
        match rank {
            0 => UnitClass::Other,
            1 => UnitClass::Bias,
            _ => UnitClass::Weight,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnitClass::Weight => "weight",
            UnitClass::Bias => "bias",
            UnitClass::Other => "other",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub tensor: String,
    pub start: usize,
    pub len: usize,
}

/// A merge unit: an ordered list of tensor slices treated as one vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unit {
    pub key: String,
    pub class: UnitClass,
    pub segments: Vec<Segment>,
}

pub const GLOBAL_KEY: &str = "global";

impl Unit {
    fn whole(name: &str, shape: &[usize]) -> Self {
        Unit {
            key: name.to_string(),
            class: UnitClass::from_rank(shape.len()),
            segments: vec![Segment {
                tensor: name.to_string(),
                start: 0,
                len: shape.iter().product(),
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates this unit's slices out of `values`.
    pub fn gather(&self, values: &TensorValues) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for s in &self.segments {
            let v = &values[&s.tensor];
            out.extend_from_slice(&v[s.start..s.start + s.len]);
        }
        out
    }

    /// Writes `unit_values` back into the slices of `values`.
    pub fn scatter(&self, unit_values: &[f64], values: &mut TensorValues) {
        let mut at = 0;
        for s in &self.segments {
            let dst = values
                .get_mut(&s.tensor)
                .expect("scatter target holds every tensor of the unit");
            dst[s.start..s.start + s.len].copy_from_slice(&unit_values[at..at + s.len]);
            at += s.len;
        }
    }
}

fn merged_class(classes: impl Iterator<Item = UnitClass>) -> UnitClass {
    let mut it = classes;
    let first = it.next().unwrap_or(UnitClass::Other);
    if it.all(|c| c == first) {
        first
    } else {
        UnitClass::Other
    }
}

/// Splits a layout into merge units. Order is deterministic: tensors by name,
/// filter slices by index, blocks by first appearance in name order.
pub fn plan_units(layout: &Layout, granularity: &Granularity) -> Vec<Unit> {
    match granularity {
        Granularity::Global => {
            if layout.is_empty() {
                return Vec::new();
            }
            let segments = layout
                .iter()
                .map(|(name, shape)| Segment {
                    tensor: name.clone(),
                    start: 0,
                    len: shape.iter().product(),
                })
                .collect();
            vec![Unit {
                key: GLOBAL_KEY.to_string(),
                class: merged_class(layout.values().map(|s| UnitClass::from_rank(s.len()))),
                segments,
            }]
        }
        Granularity::PerTensor => layout.iter().map(|(n, s)| Unit::whole(n, s)).collect(),
        Granularity::PerFilter => {
            let mut units = Vec::new();
            for (name, shape) in layout {
                if shape.len() < 2 {
                    units.push(Unit::whole(name, shape));
                    continue;
                }
                let rows = shape[0];
                let row_len: usize = shape[1..].iter().product();
                for r in 0..rows {
                    units.push(Unit {
                        key: format!("{name}[{r}]"),
                        class: UnitClass::Weight,
                        segments: vec![Segment {
                            tensor: name.clone(),
                            start: r * row_len,
                            len: row_len,
                        }],
                    });
                }
            }
            units
        }
        Granularity::PerBlock { block_map } => {
            let mut order: Vec<String> = Vec::new();
            let mut groups: BTreeMap<String, (Vec<Segment>, Vec<UnitClass>)> = BTreeMap::new();
            for (name, shape) in layout {
                let key = block_map.get(name).cloned().unwrap_or_else(|| name.clone());
                let entry = groups.entry(key.clone()).or_insert_with(|| {
                    order.push(key.clone());
                    (Vec::new(), Vec::new())
                });
                entry.0.push(Segment {
                    tensor: name.clone(),
                    start: 0,
                    len: shape.iter().product(),
                });
                entry.1.push(UnitClass::from_rank(shape.len()));
            }
            order
                .into_iter()
                .map(|key| {
                    let (segments, classes) = groups.remove(&key).expect("group recorded");
                    Unit {
                        key,
                        class: merged_class(classes.into_iter()),
                        segments,
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Layout {
        let mut l = Layout::new();
        l.insert("blk0.w".into(), vec![3, 2]);
        l.insert("blk0.b".into(), vec![3]);
        l.insert("head.w".into(), vec![2, 2, 2]);
        l.insert("scale".into(), vec![]);
        l
    }

    #[test]
    fn per_tensor_units_follow_name_order() {
        let units = plan_units(&layout(), &Granularity::PerTensor);
        let keys: Vec<_> = units.iter().map(|u| u.key.as_str()).collect();
        assert_eq!(keys, ["blk0.b", "blk0.w", "head.w", "scale"]);
        let classes: Vec<_> = units.iter().map(|u| u.class).collect();
        assert_eq!(
            classes,
            [
                UnitClass::Bias,
                UnitClass::Weight,
                UnitClass::Weight,
                UnitClass::Other
            ]
        );
        assert_eq!(units[3].len(), 1);
    }

    #[test]
    fn per_filter_slices_leading_dimension() {
        let units = plan_units(&layout(), &Granularity::PerFilter);
        let keys: Vec<_> = units.iter().map(|u| u.key.as_str()).collect();
        assert_eq!(
            keys,
            [
                "blk0.b",
                "blk0.w[0]",
                "blk0.w[1]",
                "blk0.w[2]",
                "head.w[0]",
                "head.w[1]",
                "scale"
            ]
        );
        assert_eq!(units[2].segments[0].start, 2);
        assert_eq!(units[2].len(), 2);
        assert_eq!(units[5].len(), 4);
    }

    #[test]
    fn global_and_block_grouping() {
        let g = plan_units(&layout(), &Granularity::Global);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].len(), 3 + 6 + 8 + 1);
        assert_eq!(g[0].class, UnitClass::Other);

        let mut map = BTreeMap::new();
        map.insert("blk0.w".to_string(), "block0".to_string());
        map.insert("blk0.b".to_string(), "block0".to_string());
        let b = plan_units(&layout(), &Granularity::PerBlock { block_map: map });
        let keys: Vec<_> = b.iter().map(|u| u.key.as_str()).collect();
        assert_eq!(keys, ["block0", "head.w", "scale"]);
        assert_eq!(b[0].len(), 9);
    }

    #[test]
    fn gather_scatter_inverse() {
        let l = layout();
        let mut values: TensorValues = l
            .iter()
            .map(|(n, s)| {
                (
                    n.clone(),
                    (0..s.iter().product::<usize>()).map(|i| i as f64).collect(),
                )
            })
            .collect();
        let original = values.clone();
        for u in plan_units(&l, &Granularity::PerFilter) {
            let v = u.gather(&values);
            assert_eq!(v.len(), u.len());
            let doubled: Vec<f64> = v.iter().map(|x| x * 2.0).collect();
            u.scatter(&doubled, &mut values);
        }
        for (n, v) in &values {
            let want: Vec<f64> = original[n].iter().map(|x| x * 2.0).collect();
            assert_eq!(v, &want);
        }
    }

    #[test]
    fn parse_cli_spelling() {
        assert_eq!(
            Granularity::parse("global", None).unwrap(),
            Granularity::Global
        );
        assert_eq!(
            Granularity::parse("tensor", None).unwrap(),
            Granularity::PerTensor
        );
        assert!(Granularity::parse("block", None).is_err());
        assert!(Granularity::parse("row", None).is_err());
    }
}
