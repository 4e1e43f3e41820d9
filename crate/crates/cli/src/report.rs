use serde::{Deserialize, Serialize};
use serde_json::Value;

use ssdrank_core::bandwidth::IndexSizeEstimate;
use ssdrank_core::pipeline::{BatchStats, HitRateRow, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub delta: usize,
    pub mode: String,
    pub concurrency: usize,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub n_docs: usize,
    pub nlist: usize,
    pub d: u32,
    pub d_cls: u32,
    pub value_width: u32,
    pub alignment: u32,
    pub total_tokens: u64,
    pub mean_padded_record_bytes: f64,
    pub index_memory_bytes: u64,
    pub store_bytes: u64,
    pub size_estimate: IndexSizeEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    #[serde(rename = "mrr@10")]
    pub mrr_at_10: f64,
    #[serde(rename = "recall@10")]
    pub recall_at_10: f64,
    #[serde(rename = "recall@100")]
    pub recall_at_100: f64,
    #[serde(rename = "recall@1000")]
    pub recall_at_1000: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefetchSummary {
    pub mean_hit_rate: f64,
    pub min_hit_rate: f64,
    pub total_needed: usize,
    pub total_missed: usize,
    pub total_prefetch_bytes: u64,
    pub total_critical_bytes: u64,
    pub total_needed_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRow {
    pub rerank_count: usize,
    #[serde(rename = "mrr@10")]
    pub mrr_at_10: f64,
    /// MRR@10 relative to the largest re-rank count in the sweep.
    pub ratio_to_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub batch_size: usize,
    pub mean_latency: f64,
    pub p50_latency: f64,
    pub p99_latency: f64,
    pub mean_critical_fetch_time: f64,
    pub throughput_qps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub batch: BatchStats,
    pub mean_ann_time: f64,
    pub mean_prefetch_time: f64,
    pub mean_early_rerank_time: f64,
    pub mean_prefetch_wait_time: f64,
    pub mean_critical_fetch_time: f64,
    pub mean_rerank_time: f64,
    pub latency_by_batch: Vec<LatencyRow>,
}

/// Everything `query` writes to `report.json`. Wall-clock values live under
/// `timing` so two runs can be compared with [`mask_timing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub corpus: CorpusInfo,
    pub quality: Quality,
    pub prefetch: PrefetchSummary,
    pub hit_rate_sweep: Vec<HitRateRow>,
    pub rerank_sweep: Vec<RerankRow>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub rerank_count: usize,
    pub bytes_per_query: f64,
    pub batch_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub eta: usize,
    pub delta: usize,
    pub prefetch_step: f64,
    pub prefetch_budget: f64,
    pub bandwidth_bytes_per_sec: f64,
    pub exact: ThresholdRow,
    pub partial: ThresholdRow,
    /// partial threshold / exact threshold
    pub threshold_gain: f64,
}

/// Drops every `timing` member, recursively.
pub fn mask_timing(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.remove("timing");
            map.values_mut().for_each(mask_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(mask_timing),
        _ => {}
    }
}
