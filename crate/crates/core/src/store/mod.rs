//! Packed on-disk store of per-document CLS + BOW embeddings.
//!
//! Each record holds the CLS vector immediately followed by the token rows,
//! so a document that fits in one alignment block costs a single block read.
//! Record starts are padded to `alignment`; there is no per-record header,
//! the manifest carries offsets, lengths and token counts.
//!
//! Files for a store named `name`:
//!
//! * `name.ssdrank`: record payloads only.
//! * `name.manifest`: little-endian binary: magic `b"SDRKSTR1"`, version u32,
//!   d u32, d_cls u32, value_width u32, alignment u32, count u64, data_len u64,
//!   then `count` records of (doc_id u64, byte_offset u64, byte_length u32,
//!   token_count u32).
//! * `name.manifest.json`: the same manifest as JSON, for inspection.

mod memory;
mod reader;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use half::f16;
use serde::{Deserialize, Serialize};

pub use memory::InMemoryStore;
pub use reader::{open_store, ReadMode, StoreHandle, StoreOptions};

use crate::error::{Error, Result};
use crate::types::{ClsVector, DocId, EmbeddingMatrix, TokenMatrix};

pub const STORE_MAGIC: [u8; 8] = *b"SDRKSTR1";
pub const STORE_VERSION: u32 = 1;
pub const DEFAULT_ALIGNMENT: u32 = 4096;
/// Device block size used for block accounting.
pub const IO_BLOCK: u64 = 4096;
pub const ALLOWED_ALIGNMENTS: [u32; 3] = [1, 512, 4096];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub doc_id: DocId,
    pub byte_offset: u64,
    pub byte_length: u32,
    pub token_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub version: u32,
    pub d: u32,
    pub d_cls: u32,
    pub value_width: u32,
    pub alignment: u32,
    pub data_len: u64,
    pub records: Vec<RecordEntry>,
    #[serde(skip)]
    by_id: HashMap<DocId, usize>,
}

pub fn data_path(base: &Path) -> PathBuf {
    with_suffix(base, "ssdrank")
}

pub fn manifest_path(base: &Path) -> PathBuf {
    with_suffix(base, "manifest")
}

pub fn manifest_json_path(base: &Path) -> PathBuf {
    with_suffix(base, "manifest.json")
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn round_up(n: u64, align: u64) -> u64 {
    n.div_ceil(align) * align
}

/// Number of `IO_BLOCK` device blocks touched by the byte range.
pub fn blocks_spanned(offset: u64, len: u64) -> u64 {
    if len == 0 {
        return 0;
    }
    (offset + len - 1) / IO_BLOCK - offset / IO_BLOCK + 1
}

impl StoreManifest {
    fn new(d: u32, d_cls: u32, value_width: u32, alignment: u32) -> Self {
        Self {
            version: STORE_VERSION,
            d,
            d_cls,
            value_width,
            alignment,
            data_len: 0,
            records: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    fn reindex(&mut self) -> Result<()> {
        self.by_id = HashMap::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            if self.by_id.insert(r.doc_id, i).is_some() {
                return Err(Error::format(format!(
                    "duplicate doc id {} in manifest",
                    r.doc_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, doc_id: DocId) -> Option<&RecordEntry> {
        self.by_id.get(&doc_id).map(|&i| &self.records[i])
    }

    pub fn payload_len(&self, token_count: u32) -> u64 {
        (self.d_cls as u64 + token_count as u64 * self.d as u64) * self.value_width as u64
    }

    /// Record length rounded up to the alignment, i.e. the disk footprint of one record.
    pub fn padded_len(&self, record: &RecordEntry) -> u64 {
        round_up(record.byte_length as u64, self.alignment.max(1) as u64)
    }

    pub fn mean_padded_len(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| self.padded_len(r)).sum::<u64>() as f64
            / self.records.len() as f64
    }

    pub fn total_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.token_count as u64).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.version != STORE_VERSION {
            return Err(Error::format(format!(
                "unsupported store version {}",
                self.version
            )));
        }
        if self.d == 0 || self.d_cls == 0 {
            return Err(Error::format("manifest has zero dimension"));
        }
        if !matches!(self.value_width, 2 | 4) {
            return Err(Error::format(format!(
                "bad value width {}",
                self.value_width
            )));
        }
        if !ALLOWED_ALIGNMENTS.contains(&self.alignment) {
            return Err(Error::format(format!("bad alignment {}", self.alignment)));
        }
        let mut end = 0u64;
        let mut sorted: Vec<&RecordEntry> = self.records.iter().collect();
        sorted.sort_by_key(|r| r.byte_offset);
        for r in sorted {
            if r.token_count == 0 {
                return Err(Error::format(format!("doc {} has zero tokens", r.doc_id)));
            }
            if r.byte_length as u64 != self.payload_len(r.token_count) {
                return Err(Error::format(format!(
                    "doc {} length {} disagrees with its token count",
                    r.doc_id, r.byte_length
                )));
            }
            if r.byte_offset < end || r.byte_offset % self.alignment as u64 != 0 {
                return Err(Error::format(format!(
                    "doc {} record overlaps or is misaligned",
                    r.doc_id
                )));
            }
            end = r.byte_offset + r.byte_length as u64;
        }
        if end > self.data_len {
            return Err(Error::format("records extend past the data file"));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&STORE_MAGIC)?;
        for v in [
            self.version,
            self.d,
            self.d_cls,
            self.value_width,
            self.alignment,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        w.write_all(&self.data_len.to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.doc_id.to_le_bytes())?;
            w.write_all(&r.byte_offset.to_le_bytes())?;
            w.write_all(&r.byte_length.to_le_bytes())?;
            w.write_all(&r.token_count.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 8 + 5 * 4 + 8 + 8;
        const RECORD: usize = 8 + 8 + 4 + 4;
        if bytes.len() < HEADER || bytes[..8] != STORE_MAGIC {
            return Err(Error::format(
                "not a store manifest (bad magic or truncated header)",
            ));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let mut m = StoreManifest::new(u32_at(12), u32_at(16), u32_at(20), u32_at(24));
        m.version = u32_at(8);
        let count = u64_at(28) as usize;
        m.data_len = u64_at(36);
        if bytes.len() != HEADER + count.saturating_mul(RECORD) {
            return Err(Error::format(format!(
                "manifest size {} does not match {count} records",
                bytes.len()
            )));
        }
        m.records = (0..count)
            .map(|i| {
                let o = HEADER + i * RECORD;
                RecordEntry {
                    doc_id: u64_at(o),
                    byte_offset: u64_at(o + 8),
                    byte_length: u32_at(o + 16),
                    token_count: u32_at(o + 20),
                }
            })
            .collect();
        m.validate()?;
        m.reindex()?;
        Ok(m)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let mut m: StoreManifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        m.validate()?;
        m.reindex()?;
        Ok(m)
    }
}

fn encode_values(out: &mut Vec<u8>, values: &[f32], width: u32) {
    match width {
        2 => out.extend(values.iter().flat_map(|&v| f16::from_f32(v).to_le_bytes())),
        _ => out.extend(values.iter().flat_map(|v| v.to_le_bytes())),
    }
}

fn decode_values(bytes: &[u8], width: u32) -> Vec<f32> {
    match width {
        2 => bytes
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        _ => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    }
}

/// Decodes one record payload into its CLS vector and token matrix.
pub fn decode_record(
    manifest: &StoreManifest,
    record: &RecordEntry,
    payload: &[u8],
) -> Result<(ClsVector, EmbeddingMatrix)> {
    if payload.len() != record.byte_length as usize {
        return Err(Error::DataIntegrity(format!(
            "doc {}: payload is {} bytes, expected {}",
            record.doc_id,
            payload.len(),
            record.byte_length
        )));
    }
    let split = manifest.d_cls as usize * manifest.value_width as usize;
    let cls = decode_values(&payload[..split], manifest.value_width);
    let tokens = decode_values(&payload[split..], manifest.value_width);
    let corrupt = |e: Error| Error::DataIntegrity(format!("doc {}: {e}", record.doc_id));
    Ok((
        ClsVector::new(record.doc_id, cls).map_err(corrupt)?,
        EmbeddingMatrix::new(
            record.doc_id,
            TokenMatrix::new(manifest.d as usize, tokens).map_err(corrupt)?,
        ),
    ))
}

/// Writes `base.ssdrank`, `base.manifest` and `base.manifest.json`.
pub fn build_store(
    docs: &[(ClsVector, EmbeddingMatrix)],
    base: &Path,
    alignment: u32,
    value_width: u32,
) -> Result<StoreManifest> {
    if !ALLOWED_ALIGNMENTS.contains(&alignment) {
        return Err(Error::invalid_input(format!(
            "alignment must be one of {ALLOWED_ALIGNMENTS:?}, got {alignment}"
        )));
    }
    if !matches!(value_width, 2 | 4) {
        return Err(Error::invalid_input(format!(
            "value width must be 2 or 4, got {value_width}"
        )));
    }
    let (first_cls, first_bow) = docs
        .first()
        .ok_or_else(|| Error::invalid_input("cannot build a store with no documents"))?;
    let d_cls = first_cls.dim();
    let d = first_bow.dim();
    let mut manifest = StoreManifest::new(d as u32, d_cls as u32, value_width, alignment);

    let mut w = BufWriter::with_capacity(1 << 20, File::create(data_path(base))?);
    let mut offset = 0u64;
    let mut buf = Vec::new();
    for (cls, bow) in docs {
        if cls.doc_id != bow.doc_id {
            return Err(Error::invalid_input(format!(
                "CLS vector for doc {} paired with tokens of doc {}",
                cls.doc_id, bow.doc_id
            )));
        }
        if cls.dim() != d_cls || bow.dim() != d {
            return Err(Error::invalid_input(format!(
                "doc {} has dimensions ({}, {}), expected ({d_cls}, {d})",
                cls.doc_id,
                cls.dim(),
                bow.dim()
            )));
        }
        let start = round_up(offset, alignment as u64);
        if start > offset {
            w.write_all(&vec![0u8; (start - offset) as usize])?;
        }
        buf.clear();
        encode_values(&mut buf, &cls.vector, value_width);
        encode_values(&mut buf, bow.tokens.as_slice(), value_width);
        w.write_all(&buf)?;
        manifest.records.push(RecordEntry {
            doc_id: cls.doc_id,
            byte_offset: start,
            byte_length: u32::try_from(buf.len()).map_err(|_| {
                Error::invalid_input(format!("doc {} record too large", cls.doc_id))
            })?,
            token_count: bow.n_tokens() as u32,
        });
        offset = start + buf.len() as u64;
    }
    // Whole trailing block so aligned reads of the last record are never short.
    let end = round_up(offset, alignment as u64);
    if end > offset {
        w.write_all(&vec![0u8; (end - offset) as usize])?;
    }
    w.flush()?;
    w.get_ref().sync_all()?;
    manifest.data_len = end;
    manifest
        .reindex()
        .map_err(|e| Error::invalid_input(e.to_string()))?;

    manifest.write(&manifest_path(base))?;
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(manifest_json_path(base))?),
        &manifest,
    )?;
    Ok(manifest)
}

/// Per-batch I/O counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FetchCounters {
    pub blocks_read: u64,
    pub bytes_read: u64,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchedDoc {
    pub cls: ClsVector,
    pub bow: EmbeddingMatrix,
}

/// Decoded documents in request order plus I/O counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchResult {
    pub docs: Vec<FetchedDoc>,
    pub counters: FetchCounters,
}

/// A source of re-ranking embeddings addressed by doc id.
pub trait EmbeddingSource: Sync {
    /// Fetches all `doc_ids`; the result order matches the request order.
    fn fetch_batch(&self, doc_ids: &[DocId]) -> Result<FetchResult>;

    /// Bytes a fetch of `doc_id` transfers, or `None` if the doc is unknown.
    fn read_size(&self, doc_id: DocId) -> Option<u64>;

    fn contains(&self, doc_id: DocId) -> bool {
        self.read_size(doc_id).is_some()
    }
}

pub(crate) fn unknown_ids_error(ids: &[DocId]) -> Error {
    const SHOWN: usize = 16;
    let mut listed: Vec<String> = ids.iter().take(SHOWN).map(u64::to_string).collect();
    if ids.len() > SHOWN {
        listed.push(format!("... ({} total)", ids.len()));
    }
    Error::invalid_input(format!("unknown doc ids: {}", listed.join(", ")))
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}
