use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{run_query, PipelineConfig, QueryStats};
use crate::error::{Error, Result};
use crate::ivf::IvfIndex;
use crate::store::EmbeddingSource;
use crate::types::{QueryEmbedding, RankedList};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub n_queries: usize,
    pub concurrency: usize,
    pub wall_time: f64,
    pub mean_latency: f64,
    pub p50_latency: f64,
    pub p99_latency: f64,
    pub throughput_qps: f64,
    pub mean_hit_rate: f64,
    pub total_critical_bytes: u64,
    pub total_prefetch_bytes: u64,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl BatchStats {
    pub fn from_stats(stats: &[QueryStats], concurrency: usize, wall_time: f64) -> Self {
        let n = stats.len();
        let mut lat: Vec<f64> = stats.iter().map(|s| s.total_time).collect();
        lat.sort_by(f64::total_cmp);
        let mean = |f: &dyn Fn(&QueryStats) -> f64| {
            if n == 0 {
                0.0
            } else {
                stats.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            n_queries: n,
            concurrency,
            wall_time,
            mean_latency: mean(&|s| s.total_time),
            p50_latency: percentile(&lat, 0.50),
            p99_latency: percentile(&lat, 0.99),
            throughput_qps: if wall_time > 0.0 {
                n as f64 / wall_time
            } else {
                0.0
            },
            mean_hit_rate: mean(&|s| s.hit_rate),
            total_critical_bytes: stats.iter().map(|s| s.critical_bytes).sum(),
            total_prefetch_bytes: stats.iter().map(|s| s.prefetch_bytes).sum(),
        }
    }
}

type QueryOutcome = (RankedList, QueryStats);

/// Runs `queries` with at most `concurrency` in flight. Output order matches
/// input order; each entry is identical to a serial [`run_query`] call.
pub fn run_batch<S: EmbeddingSource>(
    queries: &[QueryEmbedding],
    index: &IvfIndex,
    store: &S,
    config: &PipelineConfig,
    concurrency: usize,
) -> Result<(Vec<(RankedList, QueryStats)>, BatchStats)> {
    if concurrency == 0 {
        return Err(Error::invalid_input("concurrency must be at least 1"));
    }
    config.validate(index.nlist())?;
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<QueryOutcome>>>> =
        Mutex::new((0..queries.len()).map(|_| None).collect());

    thread::scope(|s| {
        for _ in 0..concurrency.min(queries.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(q) = queries.get(i) else { break };
                let out = run_query(q, index, store, config).map_err(|e| Error::Query {
                    query_id: q.query_id,
                    source: Box::new(e),
                });
                slots.lock().expect("result slots poisoned")[i] = Some(out);
            });
        }
    });
    let wall = start.elapsed().as_secs_f64();

    let results = slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every query ran"))
        .collect::<Result<Vec<_>>>()?;
    let stats: Vec<QueryStats> = results.iter().map(|(_, s)| s.clone()).collect();
    let batch = BatchStats::from_stats(&stats, concurrency, wall);
    Ok((results, batch))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitRateRow {
    pub step: f64,
    pub delta: usize,
    pub mean_hit_rate: f64,
    pub min_hit_rate: f64,
}

/// Sweeps the prefetch step at fixed `nprobe`, reporting the mean hit rate per step.
pub fn measure_hit_rate<S: EmbeddingSource>(
    queries: &[QueryEmbedding],
    index: &IvfIndex,
    store: &S,
    steps: &[f64],
    nprobe: usize,
    base: &PipelineConfig,
) -> Result<Vec<HitRateRow>> {
    if steps.is_empty() {
        return Err(Error::invalid_input("no prefetch steps given"));
    }
    if let Some(bad) = steps.iter().find(|&&s| !(s > 0.0 && s <= 100.0)) {
        return Err(Error::invalid_input(format!(
            "prefetch step {bad} outside (0, 100]"
        )));
    }
    steps
        .iter()
        .map(|&step| {
            let config = PipelineConfig {
                nprobe,
                prefetch_step: step,
                prefetch_enabled: true,
                ..base.clone()
            };
            config.validate(index.nlist())?;
            let mut sum = 0.0;
            let mut min = 1.0f64;
            for q in queries {
                let (_, stats) = run_query(q, index, store, &config).map_err(|e| Error::Query {
                    query_id: q.query_id,
                    source: Box::new(e),
                })?;
                sum += stats.hit_rate;
                min = min.min(stats.hit_rate);
            }
            Ok(HitRateRow {
                step,
                delta: config.delta(),
                mean_hit_rate: if queries.is_empty() {
                    1.0
                } else {
                    sum / queries.len() as f64
                },
                min_hit_rate: min,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 50.0);
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&[3.0], 0.99), 3.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }
}
