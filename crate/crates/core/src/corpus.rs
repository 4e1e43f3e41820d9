//! Synthetic corpora and the flat embedding dump format used for ingestion.
//!
//! A dump named `name` is two files: `name.bin` holds, per item, the CLS
//! vector followed by its token rows as little-endian fp32 or fp16 values;
//! `name.json` is the sidecar listing counts, dimensions, ids and token
//! counts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use half::f16;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Qrels;
use crate::types::{ClsVector, EmbeddingMatrix, QueryEmbedding, TokenMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_docs: usize,
    /// Token embedding dimension.
    pub d: usize,
    pub d_cls: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Latent clusters the CLS vectors are drawn around.
    pub n_blobs: usize,
    /// Per-coordinate std-dev of CLS vectors around their blob center.
    pub noise: f32,
    pub n_queries: usize,
    /// Per-coordinate std-dev added to the source document's CLS vector.
    pub query_cls_noise: f32,
    /// Per-coordinate std-dev added to the source document's token rows.
    pub query_token_noise: f32,
    /// Maximum query tokens, taken from the first rows of the source document.
    pub query_tokens: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_docs: 10_000,
            d: 32,
            d_cls: 64,
            min_tokens: 4,
            max_tokens: 24,
            n_blobs: 32,
            noise: 0.1,
            n_queries: 100,
            query_cls_noise: 0.15,
            query_token_noise: 0.05,
            query_tokens: 8,
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_docs == 0 || self.d == 0 || self.d_cls == 0 || self.n_blobs == 0 {
            return Err(Error::invalid_input("corpus sizes must be positive"));
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::invalid_input(format!(
                "token range {}..={} is empty or starts at zero",
                self.min_tokens, self.max_tokens
            )));
        }
        if self.n_queries > self.n_docs {
            return Err(Error::invalid_input("more queries than documents"));
        }
        if self.query_tokens == 0 {
            return Err(Error::invalid_input("queries need at least one token"));
        }
        let noises = [self.noise, self.query_cls_noise, self.query_token_noise];
        if noises.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(Error::invalid_input(
                "noise levels must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// Documents, queries and their relevance judgements.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: Vec<(ClsVector, EmbeddingMatrix)>,
    pub queries: Vec<QueryEmbedding>,
    pub qrels: Qrels,
}

impl Corpus {
    pub fn cls_vectors(&self) -> Vec<ClsVector> {
        self.docs.iter().map(|(c, _)| c.clone()).collect()
    }
}

fn normalize(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

fn perturb(rng: &mut ChaCha8Rng, base: &[f32], sigma: f32) -> Vec<f32> {
    if sigma == 0.0 {
        return base.to_vec();
    }
    normalize(
        base.iter()
            .map(|&x| x + sigma * rng.sample::<f32, _>(StandardNormal))
            .collect(),
    )
}

/// Generates a clustered corpus. Each query perturbs one sampled document,
/// which is its only relevant document. Deterministic per `spec.seed`.
pub fn generate(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f32>> = (0..spec.n_blobs)
        .map(|_| normalize(gaussian(&mut rng, spec.d_cls)))
        .collect();

    let mut docs = Vec::with_capacity(spec.n_docs);
    for id in 0..spec.n_docs as u64 {
        let blob = &centers[rng.gen_range(0..spec.n_blobs)];
        let cls = normalize(
            blob.iter()
                .map(|&c| c + spec.noise * rng.sample::<f32, _>(StandardNormal))
                .collect(),
        );
        let t = rng.gen_range(spec.min_tokens..=spec.max_tokens);
        let tokens: Vec<f32> = (0..t)
            .flat_map(|_| normalize(gaussian(&mut rng, spec.d)))
            .collect();
        docs.push((
            ClsVector::new(id, cls)?,
            EmbeddingMatrix::new(id, TokenMatrix::new(spec.d, tokens)?),
        ));
    }

    let mut sources = sample(&mut rng, spec.n_docs, spec.n_queries).into_vec();
    sources.sort_unstable();
    let mut queries = Vec::with_capacity(spec.n_queries);
    let mut qrels = Qrels::new();
    for (qid, &src) in sources.iter().enumerate() {
        let (cls, bow) = &docs[src];
        let q_cls = perturb(&mut rng, &cls.vector, spec.query_cls_noise);
        let n = spec.query_tokens.min(bow.n_tokens());
        let rows: Vec<f32> = (0..n)
            .flat_map(|j| perturb(&mut rng, bow.tokens.row(j), spec.query_token_noise))
            .collect();
        queries.push(QueryEmbedding::new(
            qid as u64,
            q_cls,
            TokenMatrix::new(spec.d, rows)?,
        )?);
        qrels.insert(qid as u64, cls.doc_id);
    }
    Ok(Corpus {
        docs,
        queries,
        qrels,
    })
}

/// Sidecar of a flat embedding dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub count: usize,
    pub d: usize,
    pub d_cls: usize,
    pub value_width: u32,
    pub ids: Vec<u64>,
    pub token_counts: Vec<u32>,
}

/// One dump item: id, CLS vector, token rows.
pub type DumpItem = (u64, Vec<f32>, TokenMatrix);

fn dump_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("bin"), base.with_extension("json"))
}

pub fn write_dump(base: &Path, items: &[DumpItem], value_width: u32) -> Result<DumpHeader> {
    if !matches!(value_width, 2 | 4) {
        return Err(Error::invalid_input(format!(
            "value width must be 2 or 4, got {value_width}"
        )));
    }
    let (d_cls, d) = items
        .first()
        .map(|(_, c, t)| (c.len(), t.dim()))
        .ok_or_else(|| Error::invalid_input("cannot write an empty dump"))?;
    let (bin, json) = dump_paths(base);
    let mut w = BufWriter::with_capacity(1 << 20, File::create(bin)?);
    let mut header = DumpHeader {
        count: items.len(),
        d,
        d_cls,
        value_width,
        ids: Vec::with_capacity(items.len()),
        token_counts: Vec::with_capacity(items.len()),
    };
    for (id, cls, tokens) in items {
        if cls.len() != d_cls || tokens.dim() != d {
            return Err(Error::invalid_input(format!(
                "item {id} has inconsistent dimensions"
            )));
        }
        for &v in cls.iter().chain(tokens.as_slice()) {
            match value_width {
                2 => w.write_all(&f16::from_f32(v).to_le_bytes())?,
                _ => w.write_all(&v.to_le_bytes())?,
            }
        }
        header.ids.push(*id);
        header.token_counts.push(tokens.n_tokens() as u32);
    }
    w.flush()?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(json)?), &header)?;
    Ok(header)
}

pub fn read_dump(base: &Path) -> Result<(DumpHeader, Vec<DumpItem>)> {
    let (bin, json) = dump_paths(base);
    let header: DumpHeader = serde_json::from_reader(BufReader::new(File::open(json)?))?;
    if header.ids.len() != header.count || header.token_counts.len() != header.count {
        return Err(Error::format("dump sidecar counts disagree"));
    }
    if !matches!(header.value_width, 2 | 4) || header.d == 0 || header.d_cls == 0 {
        return Err(Error::format("dump sidecar has bad width or dimensions"));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(bin)?).read_to_end(&mut bytes)?;
    let width = header.value_width as usize;
    let expected: usize = header
        .token_counts
        .iter()
        .map(|&t| (header.d_cls + t as usize * header.d) * width)
        .sum();
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "dump payload is {} bytes, sidecar implies {expected}",
            bytes.len()
        )));
    }
    let decode = |b: &[u8]| -> Vec<f32> {
        if width == 2 {
            b.chunks_exact(2)
                .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
                .collect()
        } else {
            b.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        }
    };
    let mut items = Vec::with_capacity(header.count);
    let mut pos = 0;
    for (i, &t) in header.token_counts.iter().enumerate() {
        let cls_len = header.d_cls * width;
        let tok_len = t as usize * header.d * width;
        let cls = decode(&bytes[pos..pos + cls_len]);
        let tokens = decode(&bytes[pos + cls_len..pos + cls_len + tok_len]);
        pos += cls_len + tok_len;
        let tokens = TokenMatrix::new(header.d, tokens)
            .map_err(|e| Error::format(format!("dump item {}: {e}", header.ids[i])))?;
        items.push((header.ids[i], cls, tokens));
    }
    Ok((header, items))
}

pub const DOCS_DUMP: &str = "docs";
pub const QUERIES_DUMP: &str = "queries";
pub const QRELS_FILE: &str = "qrels.txt";
pub const SPEC_FILE: &str = "corpus.json";

impl Corpus {
    /// Writes docs and queries as fp32 dumps plus TREC qrels into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let docs: Vec<DumpItem> = self
            .docs
            .iter()
            .map(|(c, b)| (c.doc_id, c.vector.clone(), b.tokens.clone()))
            .collect();
        write_dump(&dir.join(DOCS_DUMP), &docs, 4)?;
        let queries: Vec<DumpItem> = self
            .queries
            .iter()
            .map(|q| (q.query_id, q.cls.clone(), q.tokens.clone()))
            .collect();
        write_dump(&dir.join(QUERIES_DUMP), &queries, 4)?;
        std::fs::write(dir.join(QRELS_FILE), self.qrels.to_trec())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let docs = load_docs(dir)?;
        let queries = load_queries(dir)?;
        let qrels = Qrels::load(&dir.join(QRELS_FILE))?;
        Ok(Self {
            docs,
            queries,
            qrels,
        })
    }
}

pub fn load_docs(dir: &Path) -> Result<Vec<(ClsVector, EmbeddingMatrix)>> {
    let (_, items) = read_dump(&dir.join(DOCS_DUMP))?;
    items
        .into_iter()
        .map(|(id, cls, tokens)| Ok((ClsVector::new(id, cls)?, EmbeddingMatrix::new(id, tokens))))
        .collect()
}

pub fn load_queries(dir: &Path) -> Result<Vec<QueryEmbedding>> {
    let (_, items) = read_dump(&dir.join(QUERIES_DUMP))?;
    items
        .into_iter()
        .map(|(id, cls, tokens)| QueryEmbedding::new(id, cls, tokens))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::dot;

    fn tiny() -> CorpusSpec {
        CorpusSpec {
            n_docs: 10,
            d: 4,
            d_cls: 6,
            min_tokens: 1,
            max_tokens: 5,
            n_blobs: 2,
            n_queries: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&tiny()).unwrap().save(a.path()).unwrap();
        generate(&tiny()).unwrap().save(b.path()).unwrap();
        for f in [
            "docs.bin",
            "docs.json",
            "queries.bin",
            "queries.json",
            "qrels.txt",
        ] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let loaded = Corpus::load(a.path()).unwrap();
        assert_eq!(loaded, generate(&tiny()).unwrap());
    }

    #[test]
    fn noiseless_query_finds_source_first() {
        let spec = CorpusSpec {
            n_docs: 300,
            n_queries: 20,
            query_cls_noise: 0.0,
            ..tiny()
        };
        let c = generate(&spec).unwrap();
        for q in &c.queries {
            let src = *c.qrels.relevant(q.query_id).unwrap().iter().next().unwrap();
            let best = c
                .docs
                .iter()
                .map(|(cls, _)| (cls.doc_id, dot(&q.cls, &cls.vector)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            assert_eq!(best.0, src);
        }
    }

    #[test]
    fn fp16_dump_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![(
            7u64,
            vec![0.1f32, 0.5],
            TokenMatrix::new(2, vec![1.0, -2.0, 0.3, 0.7]).unwrap(),
        )];
        write_dump(&dir.path().join("x"), &items, 2).unwrap();
        let (header, back) = read_dump(&dir.path().join("x")).unwrap();
        assert_eq!(header.token_counts, vec![2]);
        let expect: Vec<f32> = items[0]
            .1
            .iter()
            .map(|&v| f16::from_f32(v).to_f32())
            .collect();
        assert_eq!(back[0].1, expect);
        assert_eq!(back[0].2.row(0), &[1.0, -2.0]);

        std::fs::write(dir.path().join("x.bin"), [0u8; 3]).unwrap();
        assert!(matches!(
            read_dump(&dir.path().join("x")),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(generate(&CorpusSpec {
            min_tokens: 0,
            ..tiny()
        })
        .is_err());
        assert!(generate(&CorpusSpec {
            min_tokens: 6,
            ..tiny()
        })
        .is_err());
        assert!(generate(&CorpusSpec {
            n_queries: 11,
            ..tiny()
        })
        .is_err());
        assert!(generate(&CorpusSpec {
            noise: -1.0,
            ..tiny()
        })
        .is_err());
    }
}
