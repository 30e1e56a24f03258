use std::fmt::Display;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::pseudo_center;
use crate::tensor_store::{ensure_compatible, Checkpoint};

/// Plain average of all models; the same computation as the pseudo-center.
pub fn uniform_soup(models: &[&Checkpoint]) -> Result<Checkpoint> {
    pseudo_center(models)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreedyStep {
    /// Position of the model in the caller's list.
    pub index: usize,
    pub digest: String,
    pub individual_score: f64,
    /// Score of the soup with this model added; equals `individual_score` for
    /// the first ingredient.
    pub soup_score: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
    pub selected: Vec<usize>,
    pub final_score: f64,
}

/// Greedy soup: rank models by their own score, then add each one to the
/// running average if the average scores no worse than the best so far.
///
/// `scorer` is called sequentially, once per model and once per candidate soup.
/// Ties in individual score are broken by content digest.
pub fn greedy_soup<F, E>(models: &[&Checkpoint], mut scorer: F) -> Result<(Checkpoint, GreedyTrace)>
where
    F: FnMut(&Checkpoint) -> std::result::Result<f64, E>,
    E: Display,
{
    if models.is_empty() {
        return Err(Error::invalid("greedy soup needs at least 1 model"));
    }
    ensure_compatible(models)?;

    let mut score = |ckpt: &Checkpoint, index: usize, digest: &str| -> Result<f64> {
        match scorer(ckpt) {
            Ok(s) if s.is_nan() => Err(Error::Scorer {
                index,
                digest: digest.to_string(),
                message: "score is NaN".into(),
            }),
            Ok(s) => Ok(s),
            Err(e) => Err(Error::Scorer {
                index,
                digest: digest.to_string(),
                message: e.to_string(),
            }),
        }
    };

    let mut order: Vec<_> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (m.digest(), i))
        .collect();
    order.sort();
    let mut ranked = Vec::with_capacity(models.len());
    for (digest, index) in order {
        let ckpt = models[index];
        let hex = digest.to_hex();
        let s = score(ckpt, index, &hex)?;
        ranked.push((s, index, hex, ckpt));
    }
    // digest order is already in place, so a stable sort keeps it for ties
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (first_score, first_index, first_digest, first) = &ranked[0];
    let mut soup: Vec<&Checkpoint> = vec![*first];
    let mut current: Checkpoint = (*first).clone();
    let mut best = *first_score;
    let mut steps = vec![GreedyStep {
        index: *first_index,
        digest: first_digest.clone(),
        individual_score: *first_score,
        soup_score: *first_score,
        accepted: true,
    }];
    let mut selected = vec![*first_index];

    for (individual, index, digest, ckpt) in ranked.iter().skip(1) {
        soup.push(ckpt);
        let candidate = pseudo_center(&soup)?;
        let s = score(&candidate, *index, digest)?;
        let accepted = s >= best;
        if accepted {
            best = s;
            current = candidate;
            selected.push(*index);
        } else {
            soup.pop();
        }
        steps.push(GreedyStep {
            index: *index,
            digest: digest.clone(),
            individual_score: *individual,
            soup_score: s,
            accepted,
        });
    }

    Ok((
        current,
        GreedyTrace {
            steps,
            selected,
            final_score: best,
        },
    ))
}
