//! Late-interaction scoring, score aggregation and ranking.
//!
//! All reductions run in ascending index order with `f32` accumulation so
//! that identical inputs produce bit-identical scores on every code path.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::types::{DocId, EmbeddingMatrix, QueryEmbedding, RankedList, ScoredDoc, TokenMatrix};

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Sum over query tokens of the best dot product against any document token.
pub fn maxsim_tokens(query: &TokenMatrix, doc: &TokenMatrix) -> Result<f32> {
    if query.dim() != doc.dim() {
        return Err(Error::invalid_input(format!(
            "query token dimension {} does not match document dimension {}",
            query.dim(),
            doc.dim()
        )));
    }
    let mut total = 0.0f32;
    for q in query.rows() {
        let mut best = f32::NEG_INFINITY;
        for d in doc.rows() {
            let s = dot(q, d);
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    Ok(total)
}

pub fn maxsim_score(query: &QueryEmbedding, doc: &EmbeddingMatrix) -> Result<f32> {
    maxsim_tokens(&query.tokens, &doc.tokens)
}

/// `alpha * cls_score + bow_score`. The scale applies to the first-stage score.
pub fn aggregate_score(cls_score: f32, bow_score: f32, alpha: f32) -> Result<f32> {
    if !(cls_score.is_finite() && bow_score.is_finite() && alpha.is_finite()) {
        return Err(Error::invalid_input(format!(
            "non-finite score input (cls={cls_score}, bow={bow_score}, alpha={alpha})"
        )));
    }
    Ok(alpha * cls_score + bow_score)
}

/// Sorts by score descending, ties by ascending doc id. Duplicate ids are rejected.
pub fn rank<I>(scored: I) -> Result<RankedList>
where
    I: IntoIterator<Item = (DocId, f32)>,
{
    let entries: Vec<ScoredDoc> = scored
        .into_iter()
        .map(|(id, s)| ScoredDoc::new(id, s))
        .collect();
    let mut seen = HashSet::with_capacity(entries.len());
    for e in &entries {
        if !seen.insert(e.doc_id) {
            return Err(Error::invalid_input(format!(
                "duplicate doc id {}",
                e.doc_id
            )));
        }
        if e.score.is_nan() {
            return Err(Error::invalid_input(format!(
                "NaN score for doc {}",
                e.doc_id
            )));
        }
    }
    let mut entries = entries;
    entries.sort_unstable_by(ScoredDoc::rank_cmp);
    Ok(RankedList::from_sorted(entries))
}
