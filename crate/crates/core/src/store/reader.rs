//! Read paths over a built store: O_DIRECT, page-cache buffered, and mmap.
//!
//! Every batch is fanned out over a per-handle pool of I/O workers so many
//! reads are in flight at once; results are always returned in request order.

use std::alloc::{self, Layout};
use std::fs::{File, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use memmap2::{Advice, Mmap};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use serde::{Deserialize, Serialize};

use super::{
    blocks_spanned, data_path, decode_record, manifest_path, unknown_ids_error, EmbeddingSource,
    FetchCounters, FetchResult, FetchedDoc, RecordEntry, StoreManifest,
};
use crate::error::{Error, Result};
use crate::types::DocId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadMode {
    /// Bypasses the page cache; needs an aligned store.
    Direct,
    Buffered,
    Mmap,
}

impl ReadMode {
    pub const ALL: [ReadMode; 3] = [ReadMode::Direct, ReadMode::Buffered, ReadMode::Mmap];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReadMode::Direct => "direct",
            ReadMode::Buffered => "buffered",
            ReadMode::Mmap => "mmap",
        }
    }
}

impl std::fmt::Display for ReadMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ReadMode::Direct),
            "buffered" => Ok(ReadMode::Buffered),
            "mmap" => Ok(ReadMode::Mmap),
            other => Err(Error::invalid_input(format!("unknown read mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreOptions {
    pub mode: ReadMode,
    /// Maximum reads in flight per batch.
    pub io_depth: usize,
}

impl StoreOptions {
    pub fn new(mode: ReadMode) -> Self {
        Self { mode, io_depth: 32 }
    }
}

enum Backend {
    File(File),
    Mmap(Mmap),
}

pub struct StoreHandle {
    manifest: StoreManifest,
    mode: ReadMode,
    backend: Backend,
    pool: ThreadPool,
}

impl std::fmt::Debug for StoreHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StoreHandle")
            .field("mode", &self.mode)
            .field("docs", &self.manifest.len())
            .finish()
    }
}

#[cfg(target_os = "linux")]
fn open_direct(path: &Path) -> Result<File> {
    use std::os::unix::fs::OpenOptionsExt;
    Ok(OpenOptions::new()
        .read(true)
        .custom_flags(libc::O_DIRECT)
        .open(path)?)
}

#[cfg(not(target_os = "linux"))]
fn open_direct(_path: &Path) -> Result<File> {
    Err(Error::InvalidConfig(
        "direct I/O is only supported on Linux".into(),
    ))
}

/// Opens the store at `base` (see [`super::build_store`]) for reading.
pub fn open_store(base: &Path, options: StoreOptions) -> Result<StoreHandle> {
    let manifest = StoreManifest::read(&manifest_path(base))?;
    let data = data_path(base);
    if options.io_depth == 0 {
        return Err(Error::InvalidConfig("io_depth must be at least 1".into()));
    }
    let backend = match options.mode {
        ReadMode::Direct => {
            if manifest.alignment < 512 {
                return Err(Error::InvalidConfig(format!(
                    "direct reads need a store aligned to at least 512 bytes, this one uses {}",
                    manifest.alignment
                )));
            }
            Backend::File(open_direct(&data)?)
        }
        ReadMode::Buffered => Backend::File(File::open(&data)?),
        ReadMode::Mmap => {
            let file = File::open(&data)?;
            // SAFETY: the data file is immutable once built.
            let map = unsafe { Mmap::map(&file)? };
            map.advise(Advice::Random)?;
            Backend::Mmap(map)
        }
    };
    let file_len = match &backend {
        Backend::File(f) => f.metadata()?.len(),
        Backend::Mmap(m) => m.len() as u64,
    };
    if file_len < manifest.data_len {
        return Err(Error::format(format!(
            "data file is {file_len} bytes, manifest expects {}",
            manifest.data_len
        )));
    }
    let pool = ThreadPoolBuilder::new()
        .num_threads(options.io_depth)
        .thread_name(|i| format!("ssdrank-io-{i}"))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start I/O workers: {e}")))?;
    Ok(StoreHandle {
        manifest,
        mode: options.mode,
        backend,
        pool,
    })
}

/// Heap buffer with a caller-chosen alignment, as O_DIRECT requires.
struct AlignedBuf {
    ptr: *mut u8,
    layout: Layout,
}

impl AlignedBuf {
    fn zeroed(len: usize, align: usize) -> Self {
        let layout = Layout::from_size_align(len.max(align), align).expect("valid layout");
        // SAFETY: layout has non-zero size.
        let ptr = unsafe { alloc::alloc_zeroed(layout) };
        if ptr.is_null() {
            alloc::handle_alloc_error(layout);
        }
        Self { ptr, layout }
    }

    fn as_mut_slice(&mut self) -> &mut [u8] {
        // SAFETY: ptr owns layout.size() initialised bytes.
        unsafe { std::slice::from_raw_parts_mut(self.ptr, self.layout.size()) }
    }
}

impl Drop for AlignedBuf {
    fn drop(&mut self) {
        // SAFETY: allocated with this layout in `zeroed`.
        unsafe { alloc::dealloc(self.ptr, self.layout) }
    }
}

fn read_full_at(
    file: &File,
    buf: &mut [u8],
    offset: u64,
    need: usize,
    doc_id: DocId,
) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match file.read_at(&mut buf[filled..], offset + filled as u64) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    if filled < need {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("short read for doc {doc_id}: {filled} of {need} bytes"),
        )));
    }
    Ok(filled)
}

impl StoreHandle {
    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn mode(&self) -> ReadMode {
        self.mode
    }

    /// Byte range this handle transfers for a record.
    fn extent(&self, r: &RecordEntry) -> (u64, u64) {
        match self.mode {
            ReadMode::Direct => (r.byte_offset, self.manifest.padded_len(r)),
            _ => (r.byte_offset, r.byte_length as u64),
        }
    }

    fn records(&self, doc_ids: &[DocId]) -> Result<Vec<RecordEntry>> {
        let mut missing = Vec::new();
        let records = doc_ids
            .iter()
            .filter_map(|&id| {
                let r = self.manifest.get(id).copied();
                if r.is_none() {
                    missing.push(id);
                }
                r
            })
            .collect();
        if !missing.is_empty() {
            return Err(unknown_ids_error(&missing));
        }
        Ok(records)
    }

    fn read_payload(&self, r: &RecordEntry) -> Result<Vec<u8>> {
        let len = r.byte_length as usize;
        match &self.backend {
            Backend::Mmap(map) => {
                let start = r.byte_offset as usize;
                map.get(start..start + len)
                    .map(<[u8]>::to_vec)
                    .ok_or_else(|| {
                        Error::DataIntegrity(format!("doc {} lies past end of file", r.doc_id))
                    })
            }
            Backend::File(file) if self.mode == ReadMode::Direct => {
                let (offset, extent) = self.extent(r);
                let mut buf = AlignedBuf::zeroed(extent as usize, self.manifest.alignment as usize);
                let slice = buf.as_mut_slice();
                read_full_at(file, &mut slice[..extent as usize], offset, len, r.doc_id)?;
                Ok(slice[..len].to_vec())
            }
            Backend::File(file) => {
                let mut buf = vec![0u8; len];
                read_full_at(file, &mut buf, r.byte_offset, len, r.doc_id)?;
                Ok(buf)
            }
        }
    }

    /// Raw record payloads in request order, with I/O counters.
    pub fn fetch_raw(&self, doc_ids: &[DocId]) -> Result<(Vec<Vec<u8>>, FetchCounters)> {
        let start = Instant::now();
        let records = self.records(doc_ids)?;
        let payloads: Vec<Vec<u8>> = self.pool.install(|| {
            records
                .par_iter()
                .with_max_len(1)
                .map(|r| self.read_payload(r))
                .collect::<Result<_>>()
        })?;
        let mut counters = FetchCounters::default();
        for r in &records {
            let (offset, extent) = self.extent(r);
            counters.bytes_read += extent;
            counters.blocks_read += blocks_spanned(offset, extent);
        }
        counters.wall_time = start.elapsed();
        Ok((payloads, counters))
    }
}

impl EmbeddingSource for StoreHandle {
    fn fetch_batch(&self, doc_ids: &[DocId]) -> Result<FetchResult> {
        let start = Instant::now();
        let (payloads, mut counters) = self.fetch_raw(doc_ids)?;
        let docs = doc_ids
            .iter()
            .zip(&payloads)
            .map(|(id, p)| {
                let r = self.manifest.get(*id).expect("checked in fetch_raw");
                let (cls, bow) = decode_record(&self.manifest, r, p)?;
                Ok(FetchedDoc { cls, bow })
            })
            .collect::<Result<Vec<_>>>()?;
        counters.wall_time = start.elapsed();
        Ok(FetchResult { docs, counters })
    }

    fn read_size(&self, doc_id: DocId) -> Option<u64> {
        self.manifest.get(doc_id).map(|r| self.extent(r).1)
    }
}
