//! Capacity-planning calculators: prefetch budget, prefetch step, query
//! batch threshold, and index-size estimates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::StoreManifest;

/// Measured ANN search time as a function of nprobe, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnTimeTable {
    points: Vec<(usize, f64)>,
}

impl AnnTimeTable {
    /// Points may come in any order; nprobe values must be distinct and
    /// times nondecreasing in nprobe.
    pub fn new(mut points: Vec<(usize, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid_input("ANN time table is empty"));
        }
        points.sort_by_key(|p| p.0);
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid_input(format!(
                    "duplicate nprobe {} in ANN time table",
                    w[0].0
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::invalid_input(
                    "ANN time must be nondecreasing in nprobe",
                ));
            }
        }
        if points.iter().any(|p| !p.1.is_finite() || p.1 < 0.0) {
            return Err(Error::invalid_input(
                "ANN times must be finite and nonnegative",
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    /// Search time at `nprobe` in seconds; errors outside the measured range.
    pub fn at(&self, nprobe: usize) -> Result<f64> {
        let (lo, hi) = (self.points[0], self.points[self.points.len() - 1]);
        if nprobe < lo.0 || nprobe > hi.0 {
            return Err(Error::invalid_input(format!(
                "nprobe {nprobe} outside measured range {}..={}",
                lo.0, hi.0
            )));
        }
        let i = self.points.partition_point(|p| p.0 < nprobe);
        let (x1, y1) = self.points[i];
        if x1 == nprobe {
            return Ok(y1);
        }
        let (x0, y0) = self.points[i - 1];
        let f = (nprobe - x0) as f64 / (x1 - x0) as f64;
        Ok(y0 + f * (y1 - y0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsdProfile {
    pub random_read_bandwidth: f64,
    pub block_size: u64,
}

impl SsdProfile {
    pub fn new(random_read_bandwidth: f64, block_size: u64) -> Result<Self> {
        if !(random_read_bandwidth.is_finite() && random_read_bandwidth > 0.0) || block_size == 0 {
            return Err(Error::invalid_input(
                "SSD bandwidth and block size must be positive",
            ));
        }
        Ok(Self {
            random_read_bandwidth,
            block_size,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetInputs {
    pub ann_time: AnnTimeTable,
    pub eta: usize,
    pub delta: usize,
    pub bytes_per_query: f64,
}

/// Time available to hide prefetch I/O: `ann_time(η) − ann_time(δ)`, seconds.
pub fn prefetch_budget(inputs: &BudgetInputs) -> Result<f64> {
    if inputs.delta > inputs.eta {
        return Err(Error::invalid_input(format!(
            "delta {} exceeds eta {}",
            inputs.delta, inputs.eta
        )));
    }
    Ok(inputs.ann_time.at(inputs.eta)? - inputs.ann_time.at(inputs.delta)?)
}

/// `δ / η × 100`, in percent.
pub fn prefetch_step(delta: usize, eta: usize) -> Result<f64> {
    if delta == 0 || delta > eta {
        return Err(Error::invalid_input(format!(
            "need 1 <= delta <= eta, got delta={delta}, eta={eta}"
        )));
    }
    Ok(delta as f64 / eta as f64 * 100.0)
}

/// Largest concurrent batch whose prefetch traffic fits in the budget:
/// `bandwidth · budget / bytes_per_query`. Fractional; callers floor it.
pub fn batch_threshold(profile: &SsdProfile, budget: f64, bytes_per_query: f64) -> Result<f64> {
    if !(bytes_per_query.is_finite() && bytes_per_query > 0.0) {
        return Err(Error::invalid_input("bytes per query must be positive"));
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::invalid_input(
            "prefetch budget must be finite and nonnegative",
        ));
    }
    Ok(profile.random_read_bandwidth * budget / bytes_per_query)
}

/// Bytes fetched per query when re-ranking `rerank_count` documents of the
/// store, each costing its alignment-rounded record size on average.
pub fn bytes_per_query(manifest: &StoreManifest, rerank_count: usize) -> f64 {
    rerank_count as f64 * manifest.mean_padded_len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexSizeEstimate {
    pub candidate_gen_bytes: f64,
    pub rerank_bytes: f64,
    pub total: f64,
}

/// `N·I` for the first-stage index and `N·t·d·b` for the token embeddings.
pub fn index_size_estimate(
    n_docs: f64,
    t_avg: f64,
    dim: f64,
    bytes_per_value: f64,
    cls_bytes_per_doc: f64,
) -> Result<IndexSizeEstimate> {
    let all = [n_docs, t_avg, dim, bytes_per_value, cls_bytes_per_doc];
    if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid_input("index size inputs must be positive"));
    }
    let candidate_gen_bytes = n_docs * cls_bytes_per_doc;
    let rerank_bytes = n_docs * t_avg * dim * bytes_per_value;
    Ok(IndexSizeEstimate {
        candidate_gen_bytes,
        rerank_bytes,
        total: candidate_gen_bytes + rerank_bytes,
    })
}

/// On-disk planning profile:
/// `{"bandwidth_bytes_per_sec": .., "block_size": .., "ann_time_table": [[nprobe, seconds], ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProfile {
    pub bandwidth_bytes_per_sec: f64,
    pub block_size: u64,
    pub ann_time_table: Vec<(usize, f64)>,
}

impl PlanProfile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let p: PlanProfile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("malformed profile: {e}")))?;
        p.ssd().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        p.ann_time()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(p)
    }

    pub fn ssd(&self) -> Result<SsdProfile> {
        SsdProfile::new(self.bandwidth_bytes_per_sec, self.block_size)
    }

    pub fn ann_time(&self) -> Result<AnnTimeTable> {
        AnnTimeTable::new(self.ann_time_table.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_table() -> AnnTimeTable {
        // 0.01 ms per probed cluster
        AnnTimeTable::new(vec![(0, 0.0), (10_000, 0.1)]).unwrap()
    }

    #[test]
    fn budget_examples() {
        let inputs = BudgetInputs {
            ann_time: linear_table(),
            eta: 2000,
            delta: 200,
            bytes_per_query: 1.0,
        };
        assert!((prefetch_budget(&inputs).unwrap() - 0.018).abs() < 1e-12);
        let same = BudgetInputs {
            delta: 2000,
            ..inputs.clone()
        };
        assert_eq!(prefetch_budget(&same).unwrap(), 0.0);
        let bad = BudgetInputs {
            delta: 2001,
            ..inputs
        };
        assert!(prefetch_budget(&bad).is_err());
    }

    #[test]
    fn table_interpolation_and_range() {
        let t = AnnTimeTable::new(vec![(100, 0.004), (10, 0.001), (50, 0.002)]).unwrap();
        assert_eq!(t.at(10).unwrap(), 0.001);
        assert!((t.at(30).unwrap() - 0.0015).abs() < 1e-15);
        assert!((t.at(75).unwrap() - 0.003).abs() < 1e-15);
        assert!(t.at(5).is_err());
        assert!(t.at(101).is_err());
        assert!(AnnTimeTable::new(vec![(1, 0.5), (2, 0.1)]).is_err());
        assert!(AnnTimeTable::new(vec![(1, 0.5), (1, 0.6)]).is_err());
        assert!(AnnTimeTable::new(vec![]).is_err());
    }

    #[test]
    fn step_examples() {
        assert_eq!(prefetch_step(160, 160).unwrap(), 100.0);
        assert_eq!(prefetch_step(300, 3000).unwrap(), 10.0);
        assert_eq!(prefetch_step(48, 160).unwrap(), 30.0);
        assert!(prefetch_step(0, 10).is_err());
        assert!(prefetch_step(11, 10).is_err());
    }

    #[test]
    fn threshold_examples() {
        let ssd = SsdProfile::new(2e9, 4096).unwrap();
        assert_eq!(batch_threshold(&ssd, 0.0, 4.096e6).unwrap(), 0.0);
        let t = batch_threshold(&ssd, 0.028, 1000.0 * 4096.0).unwrap();
        assert!((t - 13.671875).abs() < 1e-9);
        let fast = SsdProfile::new(4e9, 4096).unwrap();
        assert_eq!(batch_threshold(&fast, 0.028, 4.096e6).unwrap(), 2.0 * t);
        assert!(batch_threshold(&ssd, 0.028, 0.0).is_err());
        assert!(SsdProfile::new(0.0, 4096).is_err());
    }

    #[test]
    fn index_size_single_doc() {
        let e = index_size_estimate(1.0, 10.0, 32.0, 2.0, 256.0).unwrap();
        assert_eq!(e.candidate_gen_bytes, 256.0);
        assert_eq!(e.rerank_bytes, 640.0);
        assert_eq!(e.total, 896.0);
        assert!(index_size_estimate(0.0, 10.0, 32.0, 2.0, 256.0).is_err());
    }

    #[test]
    fn profile_parsing() {
        let p = PlanProfile::parse(
            r#"{"bandwidth_bytes_per_sec": 2e9, "block_size": 4096, "ann_time_table": [[1, 0.001], [64, 0.01]]}"#,
        )
        .unwrap();
        assert_eq!(p.ann_time().unwrap().at(64).unwrap(), 0.01);
        assert!(matches!(
            PlanProfile::parse("{"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(PlanProfile::parse(
            r#"{"bandwidth_bytes_per_sec": -1, "block_size": 4096, "ann_time_table": [[1, 0.001]]}"#
        )
        .is_err());
    }
}
