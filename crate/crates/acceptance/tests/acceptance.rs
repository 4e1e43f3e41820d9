//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssdrank_cli::commands::{BUILD_SUMMARY, REPORT_FILE, STORE_BASE};
use ssdrank_cli::{cmd_build, cmd_gen, cmd_plan, cmd_query, mask_timing, Cli, Command};
use ssdrank_core::bandwidth::{
    batch_threshold, index_size_estimate, prefetch_budget, prefetch_step, AnnTimeTable,
    BudgetInputs, SsdProfile,
};
use ssdrank_core::corpus::{generate, Corpus, CorpusSpec};
use ssdrank_core::pipeline::measure_hit_rate;
use ssdrank_core::store::EmbeddingSource;
use ssdrank_core::{
    begin_search, build_store, maxsim_score, mrr_at_k, open_store, run_query, DocId,
    EmbeddingMatrix, IvfIndex, PipelineConfig, QueryEmbedding, RankedList, ReadMode, StoreHandle,
    StoreOptions, TokenMatrix,
};

struct Outcome {
    ok: bool,
    detail: String,
}

impl Outcome {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            ok,
            detail: detail.into(),
        }
    }
}

struct Seeded {
    corpus: Corpus,
    index: IvfIndex,
}

const SEEDED_NLIST: usize = 100;

/// The default 10k-document, 32-blob corpus and its index.
fn seeded() -> &'static Seeded {
    static CELL: OnceLock<Seeded> = OnceLock::new();
    CELL.get_or_init(|| {
        let corpus = generate(&CorpusSpec::default()).unwrap();
        let index = ssdrank_core::ivf::train(&corpus.cls_vectors(), SEEDED_NLIST, 20, 0).unwrap();
        Seeded { corpus, index }
    })
}

fn tempdir() -> tempfile::TempDir {
    tempfile::Builder::new()
        .prefix("ssdrank-accept")
        .tempdir_in(env!("CARGO_TARGET_TMPDIR"))
        .unwrap()
}

fn oracle_dot(a: &[f32], b: &[f32]) -> f32 {
    let mut s = 0.0f32;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn oracle_maxsim(q: &TokenMatrix, d: &TokenMatrix) -> f32 {
    let mut total = 0.0f32;
    for i in 0..q.n_tokens() {
        let mut best = f32::NEG_INFINITY;
        for j in 0..d.n_tokens() {
            let s = oracle_dot(q.row(i), d.row(j));
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

fn by_score_then_id(a: &(DocId, f32), b: &(DocId, f32)) -> std::cmp::Ordering {
    b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0))
}

/// Exhaustive inner-product top-k over every document.
fn exhaustive_top(corpus: &Corpus, q: &[f32], k: usize) -> Vec<(DocId, f32)> {
    let mut all: Vec<(DocId, f32)> = corpus
        .docs
        .iter()
        .map(|(c, _)| (c.doc_id, oracle_dot(q, &c.vector)))
        .collect();
    all.sort_by(by_score_then_id);
    all.truncate(k);
    all
}

/// Top-k over the documents of the first `n` clusters of the probe order.
fn probed_top(index: &IvfIndex, q: &[f32], n: usize, k: usize) -> Vec<(DocId, f32)> {
    let mut order: Vec<(usize, f32)> = (0..index.nlist())
        .map(|c| (c, oracle_dot(q, index.centroid(c))))
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut all = Vec::new();
    for &(c, _) in &order[..n] {
        let list = index.list(c);
        let dim = index.dim();
        for (i, id) in list.doc_ids.iter().enumerate() {
            all.push((*id, oracle_dot(q, &list.vectors[i * dim..(i + 1) * dim])));
        }
    }
    all.sort_by(by_score_then_id);
    all.truncate(k);
    all
}

fn same_list(a: &RankedList, b: &RankedList) -> bool {
    a.len() == b.len()
        && a.entries()
            .iter()
            .zip(b.entries())
            .all(|(x, y)| x.doc_id == y.doc_id && x.score.to_bits() == y.score.to_bits())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for pair in 0..200u64 {
        let dim = rng.gen_range(1..=64);
        let matrix = |rng: &mut ChaCha8Rng| {
            let rows = rng.gen_range(1..=16);
            TokenMatrix::new(
                dim,
                (0..rows * dim)
                    .map(|_| rng.gen_range(-1.0f32..1.0))
                    .collect(),
            )
            .unwrap()
        };
        let q = matrix(&mut rng);
        let d = matrix(&mut rng);
        let query = QueryEmbedding::new(pair, vec![0.0; 4], q.clone()).unwrap();
        let engine = maxsim_score(&query, &EmbeddingMatrix::new(pair, d.clone())).unwrap();
        if engine.to_bits() != oracle_maxsim(&q, &d).to_bits() {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        mismatches == 0 && secs < 1.0,
        format!("200 pairs, {mismatches} bitwise mismatches, {secs:.3} s (limit 1 s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let s = seeded();
    let mut bad = Vec::new();
    for q in &s.corpus.queries[..50] {
        let mut cursor = begin_search(&s.index, &q.cls, SEEDED_NLIST, 100).unwrap();
        cursor.advance(SEEDED_NLIST).unwrap();
        let got: Vec<(DocId, u32)> = cursor
            .finish(100)
            .unwrap()
            .entries
            .iter()
            .map(|e| (e.doc_id, e.score.to_bits()))
            .collect();
        let want: Vec<(DocId, u32)> = exhaustive_top(&s.corpus, &q.cls, 100)
            .into_iter()
            .map(|(id, sc)| (id, sc.to_bits()))
            .collect();
        if got != want {
            bad.push(q.query_id);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        bad.is_empty() && secs < 30.0,
        format!("50 queries, nprobe=nlist={SEEDED_NLIST}, {} differ from the oracle, {secs:.2} s (limit 30 s)", bad.len()),
    )
}

fn criterion_3() -> Outcome {
    let s = seeded();
    let truth: Vec<HashSet<DocId>> = s
        .corpus
        .queries
        .iter()
        .map(|q| {
            exhaustive_top(&s.corpus, &q.cls, 100)
                .into_iter()
                .map(|(id, _)| id)
                .collect()
        })
        .collect();
    let mut recalls = Vec::new();
    for pct in [1usize, 5, 25, 100] {
        let nprobe = (SEEDED_NLIST * pct / 100).max(1);
        let mut sum = 0.0;
        for (q, t) in s.corpus.queries.iter().zip(&truth) {
            let mut cursor = begin_search(&s.index, &q.cls, nprobe, 100).unwrap();
            cursor.advance(nprobe).unwrap();
            let got = cursor.finish(100).unwrap();
            sum += got.doc_ids().filter(|id| t.contains(id)).count() as f64 / 100.0;
        }
        recalls.push((nprobe, sum / truth.len() as f64));
    }
    let ok = recalls.windows(2).all(|w| w[1].1 >= w[0].1);
    let table: Vec<String> = recalls
        .iter()
        .map(|(n, r)| format!("nprobe {n}: {r:.4}"))
        .collect();
    Outcome::new(ok, format!("Recall@100 {}", table.join(", ")))
}

fn fetch_all(store: &StoreHandle, ids: &[DocId]) -> Vec<(Vec<f32>, Vec<f32>)> {
    store
        .fetch_batch(ids)
        .unwrap()
        .docs
        .into_iter()
        .map(|d| (d.cls.vector, d.bow.tokens.as_slice().to_vec()))
        .collect()
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn criterion_4() -> Outcome {
    let s = seeded();
    let dir = tempdir();
    let mut ids: Vec<DocId> = s.corpus.docs.iter().map(|(c, _)| c.doc_id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.gen_range(0..=i));
    }
    let input: HashMap<DocId, (&[f32], &[f32])> = s
        .corpus
        .docs
        .iter()
        .map(|(c, b)| (c.doc_id, (c.vector.as_slice(), b.tokens.as_slice())))
        .collect();
    let mut notes = Vec::new();
    let mut ok = true;
    for width in [4u32, 2] {
        let base = dir.path().join(format!("w{width}"));
        build_store(&s.corpus.docs, &base, 4096, width).unwrap();
        let handles: Vec<StoreHandle> = ReadMode::ALL
            .iter()
            .map(|&m| open_store(&base, StoreOptions::new(m)).unwrap())
            .collect();
        let raw: Vec<Vec<Vec<u8>>> = handles
            .iter()
            .map(|h| h.fetch_raw(&ids).unwrap().0)
            .collect();
        let modes_agree = raw.windows(2).all(|w| w[0] == w[1]);
        let expect = |v: &[f32]| -> Vec<u32> {
            if width == 4 {
                bits(v)
            } else {
                v.iter()
                    .map(|&x| f16::from_f32(x).to_f32().to_bits())
                    .collect()
            }
        };
        let mut wrong = 0;
        for h in &handles {
            for (id, (cls, tokens)) in ids.iter().zip(fetch_all(h, &ids)) {
                let (c, t) = input[id];
                if bits(&cls) != expect(c) || bits(&tokens) != expect(t) {
                    wrong += 1;
                }
            }
        }
        ok &= modes_agree && wrong == 0;
        notes.push(format!(
            "width {width}: {} docs x 3 modes, {wrong} mismatches, modes byte-identical: {modes_agree}",
            ids.len()
        ));
    }
    Outcome::new(ok, notes.join("; "))
}

fn seeded_store(dir: &Path, alignment: u32, mode: ReadMode) -> StoreHandle {
    let base = dir.join(STORE_BASE);
    build_store(&seeded().corpus.docs, &base, alignment, 2).unwrap();
    open_store(&base, StoreOptions::new(mode)).unwrap()
}

fn seeded_config() -> PipelineConfig {
    PipelineConfig {
        nprobe: 25,
        prefetch_step: 10.0,
        ..PipelineConfig::default()
    }
}

fn criterion_5() -> Outcome {
    let s = seeded();
    let dir = tempdir();
    let store = seeded_store(dir.path(), 4096, ReadMode::Buffered);
    let on = seeded_config();
    let off = PipelineConfig {
        prefetch_enabled: false,
        ..on.clone()
    };
    let partial_full = PipelineConfig {
        partial_rerank_enabled: true,
        rerank_count: on.candidate_count,
        ..on.clone()
    };
    let (mut prefetch_diff, mut partial_diff) = (0, 0);
    for q in &s.corpus.queries {
        let (a, _) = run_query(q, &s.index, &store, &on).unwrap();
        let (b, _) = run_query(q, &s.index, &store, &off).unwrap();
        let (c, _) = run_query(q, &s.index, &store, &partial_full).unwrap();
        prefetch_diff += usize::from(!same_list(&a, &b));
        partial_diff += usize::from(!same_list(&a, &c));
    }
    Outcome::new(
        prefetch_diff == 0 && partial_diff == 0,
        format!(
            "{} queries: prefetch on/off differ on {prefetch_diff}, partial R=candidates vs full differ on {partial_diff}",
            s.corpus.queries.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let spec = CorpusSpec {
        n_docs: 100_000,
        d: 16,
        d_cls: 32,
        min_tokens: 2,
        max_tokens: 6,
        n_blobs: 32,
        ..CorpusSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let nlist = 256;
    let eta = nlist / 4;
    let index = ssdrank_core::ivf::train(&corpus.cls_vectors(), nlist, 20, 0).unwrap();
    let dir = tempdir();
    let base = dir.path().join(STORE_BASE);
    build_store(&corpus.docs, &base, 1, 2).unwrap();
    let store = open_store(&base, StoreOptions::new(ReadMode::Buffered)).unwrap();
    let config = PipelineConfig {
        nprobe: eta,
        ..PipelineConfig::default()
    };
    let rows = measure_hit_rate(
        &corpus.queries,
        &index,
        &store,
        &[5.0, 30.0, 100.0],
        eta,
        &config,
    )
    .unwrap();
    let (h5, h30, h100) = (rows[0], rows[1], rows[2]);

    // Recount step 30 per query from exhaustive scans of the probed clusters.
    let step30 = PipelineConfig {
        prefetch_step: 30.0,
        ..config.clone()
    };
    let delta = step30.delta();
    let mut recount_mismatch = 0;
    let mut oracle_sum = 0.0;
    for q in &corpus.queries {
        let (_, stats) = run_query(q, &index, &store, &step30).unwrap();
        let snapshot: HashSet<DocId> = probed_top(&index, &q.cls, delta, config.prefetch_top_k())
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        let needed = probed_top(&index, &q.cls, eta, config.candidate_count);
        let needed = &needed[..needed.len().min(config.rerank_count)];
        let hits = needed
            .iter()
            .filter(|(id, _)| snapshot.contains(id))
            .count();
        let rate = hits as f64 / needed.len() as f64;
        oracle_sum += rate;
        recount_mismatch += usize::from(rate != stats.hit_rate);
    }
    let oracle_mean = oracle_sum / corpus.queries.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    let ok = h100.mean_hit_rate == 1.0
        && h100.min_hit_rate == 1.0
        && h30.mean_hit_rate >= h5.mean_hit_rate
        && h30.mean_hit_rate >= 0.8
        && recount_mismatch == 0
        && (oracle_mean - h30.mean_hit_rate).abs() < 1e-12
        && secs < 300.0;
    Outcome::new(
        ok,
        format!(
            "100k docs, nlist {nlist}, eta {eta}: hit(5%)={:.4} hit(30%)={:.4} (oracle {oracle_mean:.4}, {recount_mismatch} per-query mismatches) hit(100%) mean={} min={}; {secs:.1} s (limit 300 s)",
            h5.mean_hit_rate, h30.mean_hit_rate, h100.mean_hit_rate, h100.min_hit_rate
        ),
    )
}

fn criterion_7() -> Outcome {
    let s = seeded();
    let dir = tempdir();
    let store = seeded_store(dir.path(), 1, ReadMode::Buffered);
    let mut mrr = Vec::new();
    for r in [16usize, 64, 256, 1000] {
        let config = PipelineConfig {
            rerank_count: r,
            partial_rerank_enabled: true,
            ..seeded_config()
        };
        let results: HashMap<_, _> = s
            .corpus
            .queries
            .iter()
            .map(|q| {
                (
                    q.query_id,
                    run_query(q, &s.index, &store, &config).unwrap().0,
                )
            })
            .collect();
        mrr.push((r, mrr_at_k(&results, &s.corpus.qrels, 10).unwrap()));
    }
    let monotone = mrr.windows(2).all(|w| w[1].1 >= w[0].1);
    let ratio = mrr[1].1 / mrr[3].1;
    let table: Vec<String> = mrr.iter().map(|(r, m)| format!("R={r}: {m:.4}")).collect();
    Outcome::new(
        monotone && ratio >= 0.95,
        format!(
            "MRR@10 {}; R=64/R=1000 ratio {ratio:.4} (expected >= 0.95)",
            table.join(", ")
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    // 0.01 ms per probed cluster
    let linear = AnnTimeTable::new(vec![(0, 0.0), (10_000, 0.1)]).unwrap();
    let budget = |table: &AnnTimeTable, eta, delta| {
        prefetch_budget(&BudgetInputs {
            ann_time: table.clone(),
            eta,
            delta,
            bytes_per_query: 1.0,
        })
        .unwrap()
    };
    check(
        "budget 2000/200 = 18 ms",
        close(budget(&linear, 2000, 200), 0.018),
    );
    check(
        "budget delta = eta is 0",
        budget(&linear, 2000, 2000) == 0.0,
    );
    let dyadic = AnnTimeTable::new(vec![(0, 0.0), (1024, 1.0)]).unwrap();
    check(
        "budget 512/256 on dyadic table = 0.25",
        budget(&dyadic, 512, 256) == 0.25,
    );
    check(
        "step (300, 3000) = 10%",
        close(prefetch_step(300, 3000).unwrap(), 10.0),
    );
    check(
        "step (48, 160) = 30%",
        close(prefetch_step(48, 160).unwrap(), 30.0),
    );
    check(
        "step (eta, eta) = 100%",
        prefetch_step(777, 777).unwrap() == 100.0,
    );
    check("step delta > eta rejected", prefetch_step(5, 4).is_err());

    let ssd = SsdProfile::new(2e9, 4096).unwrap();
    let t = batch_threshold(&ssd, 0.028, 1000.0 * 4096.0).unwrap();
    check(
        "threshold 2 GB/s, 28 ms, 1000 x 4 KiB = 13.671875",
        close(t, 13.671875),
    );
    check(
        "threshold at zero budget is 0",
        batch_threshold(&ssd, 0.0, 4096.0).unwrap() == 0.0,
    );
    check(
        "zero bytes per query rejected",
        batch_threshold(&ssd, 0.028, 0.0).is_err(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        // powers of two keep every product exact
        let bw = 2f64.powi(rng.gen_range(20..36));
        let budget = 2f64.powi(rng.gen_range(-12..0));
        let bytes = 2f64.powi(rng.gen_range(12..24));
        let base = batch_threshold(&SsdProfile::new(bw, 4096).unwrap(), budget, bytes).unwrap();
        let k = 2f64.powi(rng.gen_range(1..6));
        let scaled_bw =
            batch_threshold(&SsdProfile::new(bw * k, 4096).unwrap(), budget, bytes).unwrap();
        let scaled_budget =
            batch_threshold(&SsdProfile::new(bw, 4096).unwrap(), budget * k, bytes).unwrap();
        let scaled_bytes =
            batch_threshold(&SsdProfile::new(bw, 4096).unwrap(), budget, bytes * k).unwrap();
        check("linear in bandwidth", scaled_bw == base * k);
        check("linear in budget", scaled_budget == base * k);
        check("inverse in bytes per query", scaled_bytes == base / k);
    }
    let one = index_size_estimate(1.0, 10.0, 32.0, 2.0, 256.0).unwrap();
    check(
        "size estimate for one doc",
        one.candidate_gen_bytes == 256.0 && one.rerank_bytes == 640.0 && one.total == 896.0,
    );
    let x = index_size_estimate(1000.0, 50.0, 32.0, 2.0, 128.0).unwrap();
    let x2 = index_size_estimate(2000.0, 50.0, 32.0, 4.0, 128.0).unwrap();
    check(
        "size estimate multiplicative",
        x2.rerank_bytes == 4.0 * x.rerank_bytes,
    );

    // Planning command end to end: re-ranking 64 instead of 1000 documents.
    let dir = tempdir();
    let base = dir.path().join(STORE_BASE);
    build_store(&seeded().corpus.docs[..500], &base, 4096, 2).unwrap();
    let profile = dir.path().join("profile.json");
    std::fs::write(
        &profile,
        r#"{"bandwidth_bytes_per_sec": 2e9, "block_size": 4096, "ann_time_table": [[0, 0.0], [10000, 0.1]]}"#,
    )
    .unwrap();
    let cli = <Cli as clap::Parser>::try_parse_from([
        "ssdrank",
        "plan",
        "--profile",
        profile.to_str().unwrap(),
        "--manifest",
        base.to_str().unwrap(),
        "--nprobe",
        "2000",
        "--delta",
        "200",
    ])
    .unwrap();
    let Command::Plan(args) = cli.command else {
        unreachable!()
    };
    let plan = cmd_plan(&args).unwrap();
    check("plan budget 18 ms", close(plan.prefetch_budget, 0.018));
    check(
        "plan gain 1000 -> 64 is 15.625x",
        close(plan.threshold_gain, 15.625),
    );
    check(
        "plan exact threshold",
        close(
            plan.exact.batch_threshold,
            2e9 * plan.prefetch_budget / (1000.0 * 4096.0),
        ),
    );

    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "budget, step, threshold, linearity and size examples exact; plan gain {:.3}x",
                plan.threshold_gain
            )
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

/// Published magnitude for an 8.8M-passage corpus: N = 8.8e6, t_avg = 597.9e6 / 8.8e6,
/// d = 32, fp16 values, 256-byte CLS vectors, against 16.8 GB of BOW data.
fn criterion_8_index_size() -> Outcome {
    let n = 8.8e6;
    let t_avg = 597.9e6 / 8.8e6;
    let est = index_size_estimate(n, t_avg, 32.0, 2.0, 256.0).unwrap();
    let target = 16.8e9;
    let gib = (1u64 << 30) as f64;
    let rel = (est.rerank_bytes - target).abs() / target;
    let rel_gib = (est.rerank_bytes / gib - 16.8).abs() / 16.8;
    Outcome::new(
        rel <= 0.05 || rel_gib <= 0.05,
        format!(
            "BOW estimate {:.2} GB ({:.2} GiB) vs 16.8 GB: off by {:.1}% (GB) / {:.1}% (GiB), tolerance 5%; CLS estimate {:.2} GiB vs 2.1",
            est.rerank_bytes / 1e9,
            est.rerank_bytes / gib,
            rel * 100.0,
            rel_gib * 100.0,
            est.candidate_gen_bytes / gib
        ),
    )
}

fn criterion_9() -> Outcome {
    let s = seeded();
    let dir = tempdir();
    // Direct reads at 4 KiB alignment: every record fits one block, so every
    // doc transfers the same extent.
    let store = seeded_store(dir.path(), 4096, ReadMode::Direct);
    let manifest = store.manifest();
    let pad = manifest
        .records
        .iter()
        .map(|r| manifest.padded_len(r) - r.byte_length as u64)
        .max()
        .unwrap() as f64;
    let mut violations = 0;
    let mut total_missed = 0;
    for step in [5.0, 10.0, 30.0] {
        let config = PipelineConfig {
            prefetch_step: step,
            ..seeded_config()
        };
        for q in &s.corpus.queries {
            let (_, st) = run_query(q, &s.index, &store, &config).unwrap();
            let bound = (1.0 - st.hit_rate) * st.needed_bytes as f64 + st.missed_count as f64 * pad;
            if st.critical_bytes as f64 > bound * (1.0 + 1e-12)
                || st.critical_blocks != st.missed_count as u64
            {
                violations += 1;
            }
            total_missed += st.missed_count;
        }
    }
    Outcome::new(
        violations == 0,
        format!("300 query runs (steps 5/10/30%), {total_missed} missed docs, {violations} bound violations"),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempdir();
    let root = dir.path();
    let parse = |args: &[&str]| <Cli as clap::Parser>::try_parse_from(args).unwrap().command;
    let corpus = root.join("corpus");
    let artifacts = root.join("artifacts");
    let Command::Gen(gen) = parse(&[
        "ssdrank",
        "gen",
        "--out",
        corpus.to_str().unwrap(),
        "--n-docs",
        "2000",
        "--n-queries",
        "20",
        "--seed",
        "10",
    ]) else {
        unreachable!()
    };
    cmd_gen(&gen).unwrap();
    let Command::Build(build) = parse(&[
        "ssdrank",
        "build",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        artifacts.to_str().unwrap(),
        "--nlist",
        "32",
    ]) else {
        unreachable!()
    };
    cmd_build(&build).unwrap();
    assert!(artifacts.join(BUILD_SUMMARY).exists());
    let run = |out: &str| {
        let out = root.join(out);
        let Command::Query(q) = parse(&[
            "ssdrank",
            "query",
            "--artifacts",
            artifacts.to_str().unwrap(),
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--nprobe",
            "8",
            "--candidates",
            "200",
            "--rerank-count",
            "100",
            "--final-k",
            "100",
            "--concurrency",
            "2",
            "--step-sweep",
            "10,100",
            "--batch-sweep",
            "1,4",
            "--rerank-sweep",
            "16,100",
        ]) else {
            unreachable!()
        };
        cmd_query(&q).unwrap();
        let mut v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join(REPORT_FILE)).unwrap()).unwrap();
        mask_timing(&mut v);
        v
    };
    let (a, b) = (run("run1"), run("run2"));
    Outcome::new(
        a == b && a.get("timing").is_none(),
        format!("two query runs, masked report.json identical: {}", a == b),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 MaxSim oracle", criterion_1),
        ("2 IVF exactness", criterion_2),
        ("3 Recall monotonicity", criterion_3),
        ("4 Store round-trip", criterion_4),
        ("5 Pipeline equivalence", criterion_5),
        ("6 Hit-rate endpoints and trend", criterion_6),
        ("7 Partial re-rank quality trend", criterion_7),
        ("8 Planning calculators", criterion_8),
        ("8 Index size vs published magnitudes", criterion_8_index_size),
        ("9 Critical-path accounting", criterion_9),
        ("10 Determinism", criterion_10),
    ];
    panic::set_hook(Box::new(|info| eprintln!("{info}")));
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|_| Outcome::new(false, "panicked"));
        let tag = if outcome.ok { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.ok);
        println!(
            "{tag} criterion {name}: {} [{:.2} s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
