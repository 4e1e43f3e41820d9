//! Retrieval quality metrics and TREC-style relevance judgements.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{DocId, QueryId, RankedList};

/// Relevant documents per query. Every listed query has at least one relevant doc.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    relevant: BTreeMap<QueryId, BTreeSet<DocId>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: QueryId, doc_id: DocId) {
        self.relevant.entry(query_id).or_default().insert(doc_id);
    }

    pub fn relevant(&self, query_id: QueryId) -> Option<&BTreeSet<DocId>> {
        self.relevant.get(&query_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (QueryId, &BTreeSet<DocId>)> {
        self.relevant.iter().map(|(q, d)| (*q, d))
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }

    /// Parses `query_id 0 doc_id relevance` lines. Rows with relevance <= 0
    /// are ignored; blank lines are skipped.
    pub fn parse_trec<R: BufRead>(reader: R) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::format(format!(
                    "qrels line {}: expected 4 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<i64> {
                s.parse::<i64>().map_err(|_| {
                    Error::format(format!("qrels line {}: bad {what} {s:?}", lineno + 1))
                })
            };
            let qid = parse(fields[0], "query id")?;
            let did = parse(fields[2], "doc id")?;
            let rel = parse(fields[3], "relevance")?;
            if qid < 0 || did < 0 {
                return Err(Error::format(format!(
                    "qrels line {}: negative identifier",
                    lineno + 1
                )));
            }
            if rel > 0 {
                qrels.insert(qid as QueryId, did as DocId);
            }
        }
        Ok(qrels)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_trec(std::io::BufReader::new(file))
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.relevant {
            for d in docs {
                let _ = writeln!(out, "{q} 0 {d} 1");
            }
        }
        out
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::invalid_input("k must be at least 1"));
    }
    Ok(())
}

/// Mean reciprocal rank of the first relevant document within the top `k`.
/// Queries judged in `qrels` but missing from `results` contribute 0.
pub fn mrr_at_k(results: &HashMap<QueryId, RankedList>, qrels: &Qrels, k: usize) -> Result<f64> {
    check_k(k)?;
    if qrels.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0f64;
    for (qid, relevant) in qrels.iter() {
        if let Some(list) = results.get(&qid) {
            if let Some(pos) = list.doc_ids().take(k).position(|d| relevant.contains(&d)) {
                total += 1.0 / (pos + 1) as f64;
            }
        }
    }
    Ok(total / qrels.len() as f64)
}

/// Mean fraction of each query's relevant documents found in its top `k`.
pub fn recall_at_k(results: &HashMap<QueryId, RankedList>, qrels: &Qrels, k: usize) -> Result<f64> {
    check_k(k)?;
    if qrels.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0f64;
    for (qid, relevant) in qrels.iter() {
        if let Some(list) = results.get(&qid) {
            let found = list
                .doc_ids()
                .take(k)
                .filter(|d| relevant.contains(d))
                .count();
            total += found as f64 / relevant.len() as f64;
        }
    }
    Ok(total / qrels.len() as f64)
}
