use std::collections::HashMap;
use std::time::Instant;

use super::{unknown_ids_error, EmbeddingSource, FetchCounters, FetchResult, FetchedDoc};
use crate::error::{Error, Result};
use crate::types::{ClsVector, DocId, EmbeddingMatrix};

/// DRAM-resident embedding table; the memory baseline for the SSD store.
#[derive(Debug, Clone, Default)]
pub struct InMemoryStore {
    docs: HashMap<DocId, FetchedDoc>,
    value_width: u64,
}

impl InMemoryStore {
    /// `value_width` only affects the reported transfer sizes.
    pub fn new(docs: &[(ClsVector, EmbeddingMatrix)], value_width: u32) -> Result<Self> {
        let mut map = HashMap::with_capacity(docs.len());
        for (cls, bow) in docs {
            let doc = FetchedDoc {
                cls: cls.clone(),
                bow: bow.clone(),
            };
            if map.insert(cls.doc_id, doc).is_some() {
                return Err(Error::invalid_input(format!(
                    "duplicate doc id {}",
                    cls.doc_id
                )));
            }
        }
        Ok(Self {
            docs: map,
            value_width: value_width as u64,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

impl EmbeddingSource for InMemoryStore {
    fn fetch_batch(&self, doc_ids: &[DocId]) -> Result<FetchResult> {
        let start = Instant::now();
        let missing: Vec<DocId> = doc_ids
            .iter()
            .copied()
            .filter(|id| !self.docs.contains_key(id))
            .collect();
        if !missing.is_empty() {
            return Err(unknown_ids_error(&missing));
        }
        let docs: Vec<FetchedDoc> = doc_ids.iter().map(|id| self.docs[id].clone()).collect();
        let bytes_read = doc_ids.iter().filter_map(|&id| self.read_size(id)).sum();
        Ok(FetchResult {
            docs,
            counters: FetchCounters {
                blocks_read: 0,
                bytes_read,
                wall_time: start.elapsed(),
            },
        })
    }

    fn read_size(&self, doc_id: DocId) -> Option<u64> {
        self.docs
            .get(&doc_id)
            .map(|d| (d.cls.dim() as u64 + d.bow.tokens.as_slice().len() as u64) * self.value_width)
    }
}
