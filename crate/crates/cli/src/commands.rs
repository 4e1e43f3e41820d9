use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ssdrank_core::bandwidth::{
    batch_threshold, bytes_per_query, index_size_estimate, prefetch_budget, prefetch_step,
    BudgetInputs, PlanProfile,
};
use ssdrank_core::corpus::{self, CorpusSpec};
use ssdrank_core::pipeline::{measure_hit_rate, HitRateRow};
use ssdrank_core::store::{manifest_path, StoreOptions};
use ssdrank_core::{
    mrr_at_k, open_store, recall_at_k, run_batch, Error, IvfIndex, PipelineConfig, Qrels,
    QueryEmbedding, QueryId, QueryStats, RankedList, ReadMode, StoreHandle, StoreManifest,
};

use crate::report::{
    CorpusInfo, LatencyRow, PlanReport, PrefetchSummary, Quality, RerankRow, RunConfig, RunReport,
    ThresholdRow, Timing,
};

pub const INDEX_FILE: &str = "index.ivf";
pub const STORE_BASE: &str = "store";
pub const BUILD_SUMMARY: &str = "build.json";
pub const REPORT_FILE: &str = "report.json";
pub const STATS_FILE: &str = "stats.jsonl";
pub const TABLES_DIR: &str = "tables";

#[derive(Debug, Parser)]
#[command(
    name = "ssdrank",
    version,
    about = "Retrieve-and-rerank over SSD-resident token embeddings"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus with queries and qrels.
    Gen(GenArgs),
    /// Train the IVF index and write the packed embedding store.
    Build(BuildArgs),
    /// Run every query through the pipeline and write report.json and tables.
    Query(QueryArgs),
    /// Prefetch budget and batch thresholds from a device profile.
    Plan(PlanArgs),
    /// Sweep the prefetch step and report the snapshot hit rate.
    HitRate(HitRateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub n_docs: usize,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    #[arg(long, default_value_t = 64)]
    pub d_cls: usize,
    #[arg(long, default_value_t = 4)]
    pub min_tokens: usize,
    #[arg(long, default_value_t = 24)]
    pub max_tokens: usize,
    #[arg(long, default_value_t = 32)]
    pub n_blobs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f32,
    #[arg(long, default_value_t = 100)]
    pub n_queries: usize,
    #[arg(long, default_value_t = 0.15)]
    pub query_cls_noise: f32,
    #[arg(long, default_value_t = 0.05)]
    pub query_token_noise: f32,
    #[arg(long, default_value_t = 8)]
    pub query_tokens: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

impl GenArgs {
    pub fn spec(&self) -> CorpusSpec {
        CorpusSpec {
            n_docs: self.n_docs,
            d: self.d,
            d_cls: self.d_cls,
            min_tokens: self.min_tokens,
            max_tokens: self.max_tokens,
            n_blobs: self.n_blobs,
            noise: self.noise,
            n_queries: self.n_queries,
            query_cls_noise: self.query_cls_noise,
            query_token_noise: self.query_token_noise,
            query_tokens: self.query_tokens,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    /// Directory written by `gen`, or any directory holding a `docs` dump.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub nlist: usize,
    /// Record alignment in bytes: 1, 512 or 4096.
    #[arg(long, default_value_t = 4096)]
    pub alignment: u32,
    /// Stored value width in bytes: 2 (fp16) or 4 (fp32).
    #[arg(long, default_value_t = 2)]
    pub width: u32,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 64)]
    pub nprobe: usize,
    /// Percent of nprobe scanned before the prefetch snapshot.
    #[arg(long, default_value_t = 10.0)]
    pub prefetch_step: f64,
    #[arg(long, default_value_t = 1000)]
    pub rerank_count: usize,
    #[arg(long, default_value_t = 1000)]
    pub candidates: usize,
    #[arg(long, default_value_t = 1000)]
    pub final_k: usize,
    #[arg(long)]
    pub prefetch_top_k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f32,
    #[arg(long)]
    pub no_prefetch: bool,
    /// Keep candidates past the re-rank cut, scored by alpha * cls.
    #[arg(long)]
    pub partial_rerank: bool,
    #[arg(long, default_value = "buffered")]
    pub mode: ReadMode,
    #[arg(long, default_value_t = 32)]
    pub io_depth: usize,
    /// Only run the first N queries.
    #[arg(long)]
    pub batch: Option<usize>,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            nprobe: self.nprobe,
            prefetch_step: self.prefetch_step,
            candidate_count: self.candidates,
            rerank_count: self.rerank_count,
            final_k: self.final_k,
            prefetch_top_k: self.prefetch_top_k,
            alpha: self.alpha,
            prefetch_enabled: !self.no_prefetch,
            partial_rerank_enabled: self.partial_rerank,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    /// Directory written by `build`.
    #[arg(long)]
    pub artifacts: PathBuf,
    /// Directory holding the `queries` dump and qrels.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value_t = 1)]
    pub concurrency: usize,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,30,50,100")]
    pub step_sweep: Vec<f64>,
    /// Batch sizes for the latency table; each batch runs fully concurrently.
    #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
    pub batch_sweep: Vec<usize>,
    /// Re-rank counts for the partial re-rank quality table.
    #[arg(long, value_delimiter = ',', default_value = "64,128,1000")]
    pub rerank_sweep: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct HitRateArgs {
    #[arg(long)]
    pub artifacts: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,30,50,100")]
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    /// JSON device profile with bandwidth, block size and an ANN time table.
    #[arg(long)]
    pub profile: PathBuf,
    /// Store manifest: the `.manifest` file, its JSON twin, or the store base path.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Clusters probed per query (η).
    #[arg(long, default_value_t = 64)]
    pub nprobe: usize,
    /// Clusters scanned before the snapshot (δ); derived from --prefetch-step when absent.
    #[arg(long)]
    pub delta: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub prefetch_step: f64,
    #[arg(long, default_value_t = 1000)]
    pub rerank_count: usize,
    #[arg(long, default_value_t = 64)]
    pub partial_rerank_count: usize,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub n_docs: usize,
    pub nlist: usize,
    pub min_list_len: usize,
    pub max_list_len: usize,
    pub index_bytes: u64,
    pub store: StoreSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSummary {
    pub records: usize,
    pub d: u32,
    pub d_cls: u32,
    pub value_width: u32,
    pub alignment: u32,
    pub data_len: u64,
    pub total_tokens: u64,
    pub mean_padded_record_bytes: f64,
}

impl From<&StoreManifest> for StoreSummary {
    fn from(m: &StoreManifest) -> Self {
        Self {
            records: m.len(),
            d: m.d,
            d_cls: m.d_cls,
            value_width: m.value_width,
            alignment: m.alignment,
            data_len: m.data_len,
            total_tokens: m.total_tokens(),
            mean_padded_record_bytes: m.mean_padded_len(),
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let json = match cli.command {
        Command::Gen(a) => serde_json::to_string_pretty(&cmd_gen(&a)?)?,
        Command::Build(a) => serde_json::to_string_pretty(&cmd_build(&a)?)?,
        Command::Query(a) => {
            let report = cmd_query(&a)?;
            serde_json::to_string_pretty(&(&report.quality, &report.prefetch))?
        }
        Command::Plan(a) => serde_json::to_string_pretty(&cmd_plan(&a)?)?,
        Command::HitRate(a) => serde_json::to_string_pretty(&cmd_hit_rate(&a)?)?,
    };
    println!("{json}");
    Ok(())
}

pub fn cmd_gen(args: &GenArgs) -> anyhow::Result<CorpusSpec> {
    let spec = args.spec();
    let corpus = corpus::generate(&spec)?;
    corpus
        .save(&args.out)
        .with_context(|| format!("writing corpus to {}", args.out.display()))?;
    write_json(&args.out.join(corpus::SPEC_FILE), &spec)?;
    Ok(spec)
}

pub fn cmd_build(args: &BuildArgs) -> anyhow::Result<BuildSummary> {
    let docs = corpus::load_docs(&args.corpus)
        .with_context(|| format!("reading documents from {}", args.corpus.display()))?;
    let cls: Vec<_> = docs.iter().map(|(c, _)| c.clone()).collect();
    let index = ssdrank_core::ivf::train(&cls, args.nlist, args.iters, args.seed)?;
    fs::create_dir_all(&args.out)?;
    index.save(&args.out.join(INDEX_FILE))?;
    let manifest = ssdrank_core::build_store(
        &docs,
        &args.out.join(STORE_BASE),
        args.alignment,
        args.width,
    )?;
    let lens = index.lists().iter().map(|l| l.len());
    let summary = BuildSummary {
        n_docs: docs.len(),
        nlist: index.nlist(),
        min_list_len: lens.clone().min().unwrap_or(0),
        max_list_len: lens.max().unwrap_or(0),
        index_bytes: index.size_bytes(),
        store: StoreSummary::from(&manifest),
    };
    write_json(&args.out.join(BUILD_SUMMARY), &summary)?;
    Ok(summary)
}

struct Loaded {
    index: IvfIndex,
    store: StoreHandle,
    queries: Vec<QueryEmbedding>,
    qrels: Qrels,
}

fn integrity(msg: String) -> anyhow::Error {
    Error::DataIntegrity(msg).into()
}

fn load(artifacts: &Path, corpus_dir: &Path, p: &PipelineArgs) -> anyhow::Result<Loaded> {
    let index = IvfIndex::load(&artifacts.join(INDEX_FILE))
        .with_context(|| format!("loading index from {}", artifacts.display()))?;
    let options = StoreOptions {
        io_depth: p.io_depth,
        ..StoreOptions::new(p.mode)
    };
    let store = open_store(&artifacts.join(STORE_BASE), options)
        .with_context(|| format!("opening store in {}", artifacts.display()))?;
    let mut queries = corpus::load_queries(corpus_dir)
        .with_context(|| format!("reading queries from {}", corpus_dir.display()))?;
    let qrels = Qrels::load(&corpus_dir.join(corpus::QRELS_FILE))?;
    if let Some(n) = p.batch {
        if n == 0 || n > queries.len() {
            bail!(Error::InvalidInput(format!(
                "--batch {n} outside 1..={}",
                queries.len()
            )));
        }
        queries.truncate(n);
    }

    let manifest = store.manifest();
    if index.len() != manifest.len() {
        return Err(integrity(format!(
            "index holds {} documents but the store holds {}",
            index.len(),
            manifest.len()
        )));
    }
    if let Some(id) = index
        .lists()
        .iter()
        .flat_map(|l| l.doc_ids.iter())
        .find(|id| manifest.get(**id).is_none())
    {
        return Err(integrity(format!("indexed doc {id} is not in the store")));
    }
    if index.dim() != manifest.d_cls as usize {
        return Err(integrity(format!(
            "index CLS dimension {} differs from the store's {}",
            index.dim(),
            manifest.d_cls
        )));
    }
    for q in &queries {
        if q.cls.len() != index.dim() || q.tokens.dim() != manifest.d as usize {
            return Err(integrity(format!(
                "query {} dimensions do not match the artifacts",
                q.query_id
            )));
        }
    }
    for (qid, docs) in qrels.iter() {
        if let Some(id) = docs.iter().find(|id| manifest.get(**id).is_none()) {
            return Err(integrity(format!(
                "qrels for query {qid} name doc {id}, which is not in the corpus"
            )));
        }
    }
    Ok(Loaded {
        index,
        store,
        queries,
        qrels,
    })
}

fn ranked_map(results: &[(RankedList, QueryStats)]) -> HashMap<QueryId, RankedList> {
    results
        .iter()
        .map(|(list, stats)| (stats.query_id, list.clone()))
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn cmd_query(args: &QueryArgs) -> anyhow::Result<RunReport> {
    let Loaded {
        index,
        store,
        queries,
        qrels,
    } = load(&args.artifacts, &args.corpus, &args.pipeline)?;
    let config = args.pipeline.config();
    config.validate(index.nlist())?;

    let (results, batch) = run_batch(&queries, &index, &store, &config, args.concurrency)?;
    let ranked = ranked_map(&results);
    let stats: Vec<&QueryStats> = results.iter().map(|(_, s)| s).collect();
    let quality = Quality {
        mrr_at_10: mrr_at_k(&ranked, &qrels, 10)?,
        recall_at_10: recall_at_k(&ranked, &qrels, 10)?,
        recall_at_100: recall_at_k(&ranked, &qrels, 100)?,
        recall_at_1000: recall_at_k(&ranked, &qrels, 1000)?,
    };
    let prefetch = PrefetchSummary {
        mean_hit_rate: mean(stats.iter().map(|s| s.hit_rate)),
        min_hit_rate: stats.iter().map(|s| s.hit_rate).fold(1.0, f64::min),
        total_needed: stats.iter().map(|s| s.needed_count).sum(),
        total_missed: stats.iter().map(|s| s.missed_count).sum(),
        total_prefetch_bytes: stats.iter().map(|s| s.prefetch_bytes).sum(),
        total_critical_bytes: stats.iter().map(|s| s.critical_bytes).sum(),
        total_needed_bytes: stats.iter().map(|s| s.needed_bytes).sum(),
    };

    let hit_rate_sweep = if args.step_sweep.is_empty() {
        Vec::new()
    } else {
        measure_hit_rate(
            &queries,
            &index,
            &store,
            &args.step_sweep,
            config.nprobe,
            &config,
        )?
    };

    let mut rerank_sweep = Vec::new();
    for &r in &args.rerank_sweep {
        let cfg = PipelineConfig {
            rerank_count: r,
            partial_rerank_enabled: true,
            ..config.clone()
        };
        cfg.validate(index.nlist())
            .with_context(|| format!("re-rank sweep value {r}"))?;
        let (res, _) = run_batch(&queries, &index, &store, &cfg, args.concurrency)?;
        rerank_sweep.push(RerankRow {
            rerank_count: r,
            mrr_at_10: mrr_at_k(&ranked_map(&res), &qrels, 10)?,
            ratio_to_max: 0.0,
        });
    }
    if let Some(top) = rerank_sweep
        .iter()
        .max_by_key(|r| r.rerank_count)
        .map(|r| r.mrr_at_10)
    {
        for row in &mut rerank_sweep {
            row.ratio_to_max = if top > 0.0 { row.mrr_at_10 / top } else { 1.0 };
        }
    }

    let mut latency_by_batch = Vec::new();
    for &b in &args.batch_sweep {
        if b == 0 || b > queries.len() {
            bail!(Error::InvalidInput(format!(
                "batch size {b} outside 1..={}",
                queries.len()
            )));
        }
        let (res, bs) = run_batch(&queries[..b], &index, &store, &config, b)?;
        latency_by_batch.push(LatencyRow {
            batch_size: b,
            mean_latency: bs.mean_latency,
            p50_latency: bs.p50_latency,
            p99_latency: bs.p99_latency,
            mean_critical_fetch_time: mean(res.iter().map(|(_, s)| s.critical_fetch_time)),
            throughput_qps: bs.throughput_qps,
        });
    }

    let manifest = store.manifest();
    let n = manifest.len() as f64;
    let t_avg = manifest.total_tokens() as f64 / n;
    let report = RunReport {
        config: RunConfig {
            delta: config.delta(),
            pipeline: config,
            mode: args.pipeline.mode.to_string(),
            concurrency: args.concurrency,
            n_queries: queries.len(),
        },
        corpus: CorpusInfo {
            n_docs: manifest.len(),
            nlist: index.nlist(),
            d: manifest.d,
            d_cls: manifest.d_cls,
            value_width: manifest.value_width,
            alignment: manifest.alignment,
            total_tokens: manifest.total_tokens(),
            mean_padded_record_bytes: manifest.mean_padded_len(),
            index_memory_bytes: index.size_bytes(),
            store_bytes: manifest.data_len,
            size_estimate: index_size_estimate(
                n,
                t_avg,
                manifest.d as f64,
                manifest.value_width as f64,
                index.size_bytes() as f64 / n,
            )?,
        },
        quality,
        prefetch,
        hit_rate_sweep,
        rerank_sweep,
        timing: Timing {
            mean_ann_time: mean(stats.iter().map(|s| s.ann_time)),
            mean_prefetch_time: mean(stats.iter().map(|s| s.prefetch_time)),
            mean_early_rerank_time: mean(stats.iter().map(|s| s.early_rerank_time)),
            mean_prefetch_wait_time: mean(stats.iter().map(|s| s.prefetch_wait_time)),
            mean_critical_fetch_time: mean(stats.iter().map(|s| s.critical_fetch_time)),
            mean_rerank_time: mean(stats.iter().map(|s| s.rerank_time)),
            batch,
            latency_by_batch,
        },
    };

    fs::create_dir_all(args.out.join(TABLES_DIR))?;
    write_json(&args.out.join(REPORT_FILE), &report)?;
    let mut w = BufWriter::new(fs::File::create(args.out.join(STATS_FILE))?);
    for s in &stats {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    write_tables(&args.out, &report)?;
    Ok(report)
}

fn write_tables(out: &Path, report: &RunReport) -> anyhow::Result<()> {
    let dir = out.join(TABLES_DIR);
    if !report.hit_rate_sweep.is_empty() {
        write_hit_rate_csv(&dir, &report.hit_rate_sweep)?;
    }
    let mut s = String::from("rerank_count,mrr@10,ratio_to_max\n");
    for r in &report.rerank_sweep {
        writeln!(s, "{},{},{}", r.rerank_count, r.mrr_at_10, r.ratio_to_max)?;
    }
    fs::write(dir.join("mrr_by_rerank.csv"), s)?;
    let mut s = String::from(
        "batch_size,mean_latency,p50_latency,p99_latency,mean_critical_fetch_time,throughput_qps\n",
    );
    for r in &report.timing.latency_by_batch {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.batch_size,
            r.mean_latency,
            r.p50_latency,
            r.p99_latency,
            r.mean_critical_fetch_time,
            r.throughput_qps
        )?;
    }
    fs::write(dir.join("latency_by_batch.csv"), s)?;
    Ok(())
}

fn write_hit_rate_csv(dir: &Path, rows: &[HitRateRow]) -> anyhow::Result<()> {
    let mut s = String::from("step,delta,mean_hit_rate,min_hit_rate\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{}",
            r.step, r.delta, r.mean_hit_rate, r.min_hit_rate
        )?;
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("hit_rate.csv"), s)?;
    Ok(())
}

pub fn cmd_hit_rate(args: &HitRateArgs) -> anyhow::Result<Vec<HitRateRow>> {
    let loaded = load(&args.artifacts, &args.corpus, &args.pipeline)?;
    let config = args.pipeline.config();
    let rows = measure_hit_rate(
        &loaded.queries,
        &loaded.index,
        &loaded.store,
        &args.steps,
        config.nprobe,
        &config,
    )?;
    write_hit_rate_csv(&args.out.join(TABLES_DIR), &rows)?;
    Ok(rows)
}

fn read_manifest(path: &Path) -> anyhow::Result<StoreManifest> {
    let m = if path.extension().is_some_and(|e| e == "json") {
        StoreManifest::read_json(path)?
    } else if path.is_file() {
        StoreManifest::read(path)?
    } else {
        StoreManifest::read(&manifest_path(path))?
    };
    Ok(m)
}

pub fn cmd_plan(args: &PlanArgs) -> anyhow::Result<PlanReport> {
    let profile = PlanProfile::load(&args.profile)
        .with_context(|| format!("reading profile {}", args.profile.display()))?;
    let manifest = read_manifest(&args.manifest)
        .with_context(|| format!("reading manifest {}", args.manifest.display()))?;
    let eta = args.nprobe;
    let delta = args.delta.unwrap_or_else(|| {
        PipelineConfig {
            nprobe: eta,
            prefetch_step: args.prefetch_step,
            ..PipelineConfig::default()
        }
        .delta()
    });
    let ssd = profile.ssd()?;
    let budget = prefetch_budget(&BudgetInputs {
        ann_time: profile.ann_time()?,
        eta,
        delta,
        bytes_per_query: bytes_per_query(&manifest, args.rerank_count),
    })?;
    let row = |r: usize| -> anyhow::Result<ThresholdRow> {
        let bytes = bytes_per_query(&manifest, r);
        Ok(ThresholdRow {
            rerank_count: r,
            bytes_per_query: bytes,
            batch_threshold: batch_threshold(&ssd, budget, bytes)?,
        })
    };
    let exact = row(args.rerank_count)?;
    let partial = row(args.partial_rerank_count)?;
    let report = PlanReport {
        eta,
        delta,
        prefetch_step: prefetch_step(delta, eta)?,
        prefetch_budget: budget,
        bandwidth_bytes_per_sec: ssd.random_read_bandwidth,
        threshold_gain: if exact.batch_threshold > 0.0 {
            partial.batch_threshold / exact.batch_threshold
        } else {
            exact.bytes_per_query / partial.bytes_per_query
        },
        exact,
        partial,
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
