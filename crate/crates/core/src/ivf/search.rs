use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::IvfIndex;
use crate::error::{Error, Result};
use crate::scoring::dot;
use crate::types::ScoredDoc;

/// Heap entry whose maximum is the *worst* ranked document.
#[derive(Debug, Clone, Copy)]
struct Worst(ScoredDoc);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Worst {}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Candidates sorted by CLS score descending (ties by doc id), deduplicated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateList {
    pub entries: Vec<ScoredDoc>,
    pub clusters_visited: usize,
}

impl CandidateList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.doc_id)
    }
}

/// A staged IVF search for one query.
///
/// The visitation plan is fixed at creation. Lists are scanned in plan order
/// by [`advance`](Self::advance); [`snapshot`](Self::snapshot) reads the
/// running top-K without disturbing it.
#[derive(Debug, Clone)]
pub struct SearchCursor<'a> {
    index: &'a IvfIndex,
    query: Vec<f32>,
    plan: Vec<usize>,
    visited: usize,
    capacity: usize,
    heap: BinaryHeap<Worst>,
}

/// Starts a search that will visit the `nprobe` centroids scoring highest
/// against `query_cls`, keeping up to `k` candidates.
pub fn begin_search<'a>(
    index: &'a IvfIndex,
    query_cls: &[f32],
    nprobe: usize,
    k: usize,
) -> Result<SearchCursor<'a>> {
    if nprobe == 0 || nprobe > index.nlist() {
        return Err(Error::invalid_input(format!(
            "nprobe {nprobe} outside 1..={}",
            index.nlist()
        )));
    }
    if k == 0 {
        return Err(Error::invalid_input("k must be at least 1"));
    }
    if query_cls.len() != index.dim() {
        return Err(Error::invalid_input(format!(
            "query CLS dimension {} does not match index dimension {}",
            query_cls.len(),
            index.dim()
        )));
    }
    let mut scored: Vec<ScoredDoc> = (0..index.nlist())
        .map(|c| ScoredDoc::new(c as u64, dot(query_cls, index.centroid(c))))
        .collect();
    scored.sort_unstable_by(ScoredDoc::rank_cmp);
    let plan = scored
        .iter()
        .take(nprobe)
        .map(|s| s.doc_id as usize)
        .collect();
    Ok(SearchCursor {
        index,
        query: query_cls.to_vec(),
        plan,
        visited: 0,
        capacity: k,
        heap: BinaryHeap::with_capacity(k + 1),
    })
}

impl<'a> SearchCursor<'a> {
    pub fn plan(&self) -> &[usize] {
        &self.plan
    }

    pub fn nprobe(&self) -> usize {
        self.plan.len()
    }

    pub fn clusters_visited(&self) -> usize {
        self.visited
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_complete(&self) -> bool {
        self.visited == self.plan.len()
    }

    /// Scans the next `n_clusters` lists of the plan.
    pub fn advance(&mut self, n_clusters: usize) -> Result<()> {
        let end = self.visited + n_clusters;
        if end > self.plan.len() {
            return Err(Error::invalid_input(format!(
                "cannot advance {n_clusters} clusters: {} of {} already visited",
                self.visited,
                self.plan.len()
            )));
        }
        let dim = self.index.dim();
        for &c in &self.plan[self.visited..end] {
            let list = self.index.list(c);
            for (&doc_id, v) in list.doc_ids.iter().zip(list.vectors.chunks_exact(dim)) {
                let cand = Worst(ScoredDoc::new(doc_id, dot(&self.query, v)));
                if self.heap.len() < self.capacity {
                    self.heap.push(cand);
                } else if let Some(mut top) = self.heap.peek_mut() {
                    if cand < *top {
                        *top = cand;
                    }
                }
            }
        }
        self.visited = end;
        Ok(())
    }

    /// Current top `top_k` candidates, best first.
    pub fn snapshot(&self, top_k: usize) -> CandidateList {
        let mut entries: Vec<ScoredDoc> = self.heap.iter().map(|w| w.0).collect();
        entries.sort_unstable_by(ScoredDoc::rank_cmp);
        entries.truncate(top_k);
        CandidateList {
            entries,
            clusters_visited: self.visited,
        }
    }

    /// Final top `k` candidates. The whole plan must have been scanned.
    pub fn finish(&self, k: usize) -> Result<CandidateList> {
        if !self.is_complete() {
            return Err(Error::InvalidState(format!(
                "search finished after {} of {} clusters",
                self.visited,
                self.plan.len()
            )));
        }
        if k == 0 || k > self.capacity {
            return Err(Error::invalid_input(format!(
                "k {k} outside 1..={}",
                self.capacity
            )));
        }
        Ok(self.snapshot(k))
    }
}
