use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knobs for one retrieve-and-rerank query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Total clusters scanned per query (η).
    pub nprobe: usize,
    /// Share of `nprobe` scanned before the prefetch snapshot, in percent.
    pub prefetch_step: f64,
    /// Candidates produced by the first stage.
    pub candidate_count: usize,
    /// Candidates re-ranked with MaxSim (R).
    pub rerank_count: usize,
    pub final_k: usize,
    /// Size of the prefetched id list; defaults to `rerank_count`.
    pub prefetch_top_k: Option<usize>,
    /// Scale applied to the first-stage score when aggregating.
    pub alpha: f32,
    pub prefetch_enabled: bool,
    /// Keep non-reranked candidates, scored by `alpha * cls`.
    pub partial_rerank_enabled: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            nprobe: 64,
            prefetch_step: 10.0,
            candidate_count: 1000,
            rerank_count: 1000,
            final_k: 1000,
            prefetch_top_k: None,
            alpha: 1.0,
            prefetch_enabled: true,
            partial_rerank_enabled: false,
        }
    }
}

impl PipelineConfig {
    pub fn prefetch_top_k(&self) -> usize {
        self.prefetch_top_k.unwrap_or(self.rerank_count)
    }

    /// Clusters scanned before the snapshot (δ): `round(η·step/100)`, at least 1.
    pub fn delta(&self) -> usize {
        let d = (self.nprobe as f64 * self.prefetch_step / 100.0).round() as usize;
        d.clamp(1, self.nprobe.max(1))
    }

    /// Heap size needed to serve both the final list and the prefetch list.
    pub fn search_capacity(&self) -> usize {
        self.candidate_count.max(self.prefetch_top_k())
    }

    pub fn validate(&self, nlist: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.nprobe == 0 || self.nprobe > nlist {
            return bad(format!("nprobe {} outside 1..={nlist}", self.nprobe));
        }
        if !(self.prefetch_step > 0.0 && self.prefetch_step <= 100.0) {
            return bad(format!(
                "prefetch step {} outside (0, 100]",
                self.prefetch_step
            ));
        }
        if self.candidate_count == 0 || self.final_k == 0 || self.rerank_count == 0 {
            return bad("candidate_count, rerank_count and final_k must be positive".into());
        }
        if self.prefetch_top_k() == 0 {
            return bad("prefetch_top_k must be positive".into());
        }
        if self.rerank_count > self.candidate_count {
            return bad(format!(
                "rerank_count {} exceeds candidate_count {}",
                self.rerank_count, self.candidate_count
            ));
        }
        if self.final_k > self.candidate_count {
            return bad(format!(
                "final_k {} exceeds candidate_count {}",
                self.final_k, self.candidate_count
            ));
        }
        if self.rerank_count < self.final_k && !self.partial_rerank_enabled {
            return bad(format!(
                "rerank_count {} is below final_k {} without partial re-ranking",
                self.rerank_count, self.final_k
            ));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        Ok(())
    }
}
