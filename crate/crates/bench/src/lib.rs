//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use ssdrank_core::corpus::{generate, Corpus, CorpusSpec};
use ssdrank_core::ivf::train;
use ssdrank_core::{build_store, IvfIndex};

pub struct Fixture {
    pub corpus: Corpus,
    pub index: IvfIndex,
    /// Store base path; removed with the fixture.
    pub store_base: PathBuf,
    _dir: tempfile::TempDir,
}

/// Generates `spec`, trains an index with `nlist` lists and writes an fp16
/// store at `alignment`.
pub fn fixture(spec: &CorpusSpec, nlist: usize, alignment: u32) -> Fixture {
    let corpus = generate(spec).expect("valid corpus spec");
    let index = train(&corpus.cls_vectors(), nlist, 20, 0).expect("index trains");
    let dir = tempfile::Builder::new()
        .prefix("ssdrank-bench")
        .tempdir_in(std::env::temp_dir())
        .expect("temp dir");
    let store_base = dir.path().join("store");
    build_store(&corpus.docs, &store_base, alignment, 2).expect("store builds");
    Fixture {
        corpus,
        index,
        store_base,
        _dir: dir,
    }
}
