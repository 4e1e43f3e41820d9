//! Domain types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type DocId = u64;
pub type QueryId = u64;

fn check_finite(values: &[f32], what: &str) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid_input(format!(
            "{what}: non-finite value at position {pos}"
        )));
    }
    Ok(())
}

/// Row-major `t × d` matrix of token embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl TokenMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid_input("token dimension must be positive"));
        }
        if data.is_empty() {
            return Err(Error::invalid_input(
                "token matrix must have at least one row",
            ));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid_input(format!(
                "token data length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        check_finite(&data, "token matrix")?;
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid_input("ragged token rows"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_tokens(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Appends one token row; used by property tests and ingestion.
    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::invalid_input(format!(
                "row has {} values, expected {}",
                row.len(),
                self.dim
            )));
        }
        check_finite(row, "token row")?;
        self.data.extend_from_slice(row);
        Ok(())
    }
}

/// One document's bag-of-words token embeddings, the re-ranking payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub doc_id: DocId,
    pub tokens: TokenMatrix,
}

impl EmbeddingMatrix {
    pub fn new(doc_id: DocId, tokens: TokenMatrix) -> Self {
        Self { doc_id, tokens }
    }

    pub fn dim(&self) -> usize {
        self.tokens.dim()
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.n_tokens()
    }
}

/// One document's single dense vector used for candidate generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsVector {
    pub doc_id: DocId,
    pub vector: Vec<f32>,
}

impl ClsVector {
    pub fn new(doc_id: DocId, vector: Vec<f32>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::invalid_input("CLS vector must not be empty"));
        }
        check_finite(&vector, "CLS vector")?;
        Ok(Self { doc_id, vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbedding {
    pub query_id: QueryId,
    pub cls: Vec<f32>,
    pub tokens: TokenMatrix,
}

impl QueryEmbedding {
    pub fn new(query_id: QueryId, cls: Vec<f32>, tokens: TokenMatrix) -> Result<Self> {
        if cls.is_empty() {
            return Err(Error::invalid_input("query CLS vector must not be empty"));
        }
        check_finite(&cls, "query CLS vector")?;
        Ok(Self {
            query_id,
            cls,
            tokens,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: DocId,
    pub score: f32,
}

impl ScoredDoc {
    pub fn new(doc_id: DocId, score: f32) -> Self {
        Self { doc_id, score }
    }

    /// Ranking order: score descending, then doc id ascending.
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.doc_id.cmp(&other.doc_id))
    }
}

/// Ordered `(doc_id, score)` pairs, sorted by score descending with ties
/// broken by ascending doc id. Build one through [`crate::scoring::rank`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    entries: Vec<ScoredDoc>,
}

impl RankedList {
    pub(crate) fn from_sorted(entries: Vec<ScoredDoc>) -> Self {
        debug_assert!(entries
            .windows(2)
            .all(|w| w[0].rank_cmp(&w[1]) == std::cmp::Ordering::Less));
        Self { entries }
    }

    pub fn entries(&self) -> &[ScoredDoc] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = DocId> + '_ {
        self.entries.iter().map(|e| e.doc_id)
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    /// 1-based rank of `doc_id`, if present.
    pub fn position(&self, doc_id: DocId) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.doc_id == doc_id)
            .map(|p| p + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_matrix_rejects_empty_and_nan() {
        assert!(TokenMatrix::new(2, vec![]).is_err());
        assert!(TokenMatrix::new(2, vec![1.0, f32::NAN]).is_err());
        assert!(TokenMatrix::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(TokenMatrix::new(0, vec![1.0]).is_err());
        let m = TokenMatrix::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.n_tokens(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn cls_rejects_inf() {
        assert!(ClsVector::new(0, vec![f32::INFINITY]).is_err());
        assert!(ClsVector::new(0, vec![]).is_err());
    }
}
