//! The query engine: staged IVF search, snapshot prefetch with early
//! re-ranking, critical-path fetch of missed documents, and score merge.
//!
//! Per query there are two workers. The search worker scans the first δ
//! clusters, hands a snapshot of the running top-K to the prefetch worker,
//! and keeps scanning the remaining λ = η − δ clusters. The prefetch worker
//! fetches the snapshot's embeddings and scores them with MaxSim. After
//! joining it, the search worker fetches whatever part of the final top-R
//! the snapshot missed. Prefetching never changes the ranking, only where
//! the I/O happens.

mod batch;
mod config;

use std::collections::{HashMap, HashSet};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use batch::{measure_hit_rate, run_batch, BatchStats, HitRateRow};
pub use config::PipelineConfig;

use crate::error::{Error, Result};
use crate::ivf::{begin_search, CandidateList, IvfIndex};
use crate::scoring::{aggregate_score, maxsim_score, rank};
use crate::store::{EmbeddingSource, FetchResult};
use crate::types::{DocId, QueryEmbedding, QueryId, RankedList, ScoredDoc};

/// Per-query timings (seconds) and prefetch accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub query_id: QueryId,
    pub ann_time: f64,
    pub prefetch_time: f64,
    pub early_rerank_time: f64,
    /// Time the search worker spent blocked on the prefetch worker.
    pub prefetch_wait_time: f64,
    pub critical_fetch_time: f64,
    pub rerank_time: f64,
    pub total_time: f64,
    pub delta: usize,
    pub prefetched_count: usize,
    pub needed_count: usize,
    pub missed_count: usize,
    /// |prefetched ∩ needed| / |needed|; 1.0 when nothing is needed.
    pub hit_rate: f64,
    pub prefetch_bytes: u64,
    pub critical_bytes: u64,
    pub critical_blocks: u64,
    /// Bytes a fetch of the whole top-R would transfer.
    pub needed_bytes: u64,
}

#[derive(Debug, Default)]
struct Prefetched {
    /// doc id -> (cls score, aggregate score)
    scores: HashMap<DocId, (f32, f32)>,
    bytes: u64,
    rerank_time: Duration,
    total_time: Duration,
}

fn integrity(e: Error) -> Error {
    match e {
        Error::InvalidInput(msg) => {
            Error::DataIntegrity(format!("store is missing candidates: {msg}"))
        }
        other => other,
    }
}

/// (doc id, cls score, aggregate score)
type Scored = (DocId, f32, f32);

/// Fetches `candidates` and scores each one: MaxSim plus aggregation.
fn fetch_and_score<S: EmbeddingSource>(
    store: &S,
    query: &QueryEmbedding,
    candidates: &[ScoredDoc],
    alpha: f32,
) -> Result<(Vec<Scored>, FetchResult, Duration)> {
    let ids: Vec<DocId> = candidates.iter().map(|c| c.doc_id).collect();
    let fetched = store.fetch_batch(&ids).map_err(integrity)?;
    let start = Instant::now();
    let scored = candidates
        .iter()
        .zip(&fetched.docs)
        .map(|(c, doc)| {
            let bow = maxsim_score(query, &doc.bow)?;
            Ok((c.doc_id, c.score, aggregate_score(c.score, bow, alpha)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((scored, fetched, start.elapsed()))
}

fn prefetch<S: EmbeddingSource>(
    store: &S,
    query: &QueryEmbedding,
    snapshot: &CandidateList,
    alpha: f32,
) -> Result<Prefetched> {
    let start = Instant::now();
    let (scored, fetched, rerank_time) = fetch_and_score(store, query, &snapshot.entries, alpha)?;
    Ok(Prefetched {
        scores: scored
            .into_iter()
            .map(|(id, cls, agg)| (id, (cls, agg)))
            .collect(),
        bytes: fetched.counters.bytes_read,
        rerank_time,
        total_time: start.elapsed(),
    })
}

/// Runs one query end to end.
pub fn run_query<S: EmbeddingSource>(
    query: &QueryEmbedding,
    index: &IvfIndex,
    store: &S,
    config: &PipelineConfig,
) -> Result<(RankedList, QueryStats)> {
    config.validate(index.nlist())?;
    let total_start = Instant::now();
    let mut stats = QueryStats {
        query_id: query.query_id,
        ..Default::default()
    };
    let eta = config.nprobe;
    let delta = config.delta();

    let mut ann = Duration::ZERO;
    let t = Instant::now();
    let mut cursor = begin_search(index, &query.cls, eta, config.search_capacity())?;
    ann += t.elapsed();

    let prefetched = if config.prefetch_enabled {
        stats.delta = delta;
        let t = Instant::now();
        cursor.advance(delta)?;
        let snapshot = cursor.snapshot(config.prefetch_top_k());
        ann += t.elapsed();

        let (outcome, scan) = thread::scope(|s| -> Result<(Prefetched, Duration)> {
            let worker = s.spawn(|| prefetch(store, query, &snapshot, config.alpha));
            let t = Instant::now();
            let scanned = cursor.advance(eta - delta);
            let scan = t.elapsed();
            let wait = Instant::now();
            let outcome = worker
                .join()
                .map_err(|_| Error::InvalidState("prefetch worker panicked".into()))?;
            stats.prefetch_wait_time = wait.elapsed().as_secs_f64();
            scanned?;
            Ok((outcome?, scan))
        })?;
        ann += scan;
        stats.prefetch_time = outcome.total_time.as_secs_f64();
        stats.early_rerank_time = outcome.rerank_time.as_secs_f64();
        stats.prefetched_count = outcome.scores.len();
        stats.prefetch_bytes = outcome.bytes;
        outcome
    } else {
        let t = Instant::now();
        cursor.advance(eta)?;
        ann += t.elapsed();
        Prefetched::default()
    };

    let t = Instant::now();
    let candidates = cursor.finish(config.candidate_count.min(cursor.capacity()))?;
    ann += t.elapsed();
    stats.ann_time = ann.as_secs_f64();

    let split = config.rerank_count.min(candidates.len());
    let (needed, tail) = candidates.entries.split_at(split);
    stats.needed_count = needed.len();
    stats.needed_bytes = needed
        .iter()
        .map(|c| {
            store.read_size(c.doc_id).ok_or_else(|| {
                Error::DataIntegrity(format!("store has no record for candidate {}", c.doc_id))
            })
        })
        .sum::<Result<u64>>()?;

    let missed: Vec<ScoredDoc> = needed
        .iter()
        .filter(|c| !prefetched.scores.contains_key(&c.doc_id))
        .copied()
        .collect();
    stats.missed_count = missed.len();
    stats.hit_rate = if needed.is_empty() {
        1.0
    } else {
        (needed.len() - missed.len()) as f64 / needed.len() as f64
    };

    let t = Instant::now();
    let (missed_scores, fetched, missed_rerank) = if missed.is_empty() {
        (Vec::new(), FetchResult::default(), Duration::ZERO)
    } else {
        fetch_and_score(store, query, &missed, config.alpha)?
    };
    stats.critical_fetch_time = (t.elapsed() - missed_rerank).as_secs_f64();
    stats.critical_bytes = fetched.counters.bytes_read;
    stats.critical_blocks = fetched.counters.blocks_read;

    let t = Instant::now();
    let missed_scores: HashMap<DocId, f32> = missed_scores
        .into_iter()
        .map(|(id, _, agg)| (id, agg))
        .collect();
    let mut merged = Vec::with_capacity(candidates.len());
    for c in needed {
        let score = match prefetched.scores.get(&c.doc_id) {
            Some(&(cls, agg)) => {
                debug_assert_eq!(cls.to_bits(), c.score.to_bits());
                agg
            }
            None => missed_scores[&c.doc_id],
        };
        merged.push((c.doc_id, score));
    }
    if config.partial_rerank_enabled {
        for c in tail {
            merged.push((c.doc_id, aggregate_score(c.score, 0.0, config.alpha)?));
        }
    }
    let mut ranked = rank(merged)?;
    ranked.truncate(config.final_k);
    stats.rerank_time = (t.elapsed() + missed_rerank).as_secs_f64();
    stats.total_time = total_start.elapsed().as_secs_f64();
    Ok((ranked, stats))
}

/// Ids of the needed set that the snapshot covered; used by tests and reports
/// to recount hit rates independently of [`QueryStats`].
pub fn snapshot_overlap(
    snapshot: &CandidateList,
    final_list: &CandidateList,
    rerank_count: usize,
) -> (usize, usize) {
    let snap: HashSet<DocId> = snapshot.doc_ids().collect();
    let needed: Vec<DocId> = final_list.doc_ids().take(rerank_count).collect();
    let hits = needed.iter().filter(|id| snap.contains(id)).count();
    (hits, needed.len())
}
