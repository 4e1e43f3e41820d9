//! In-memory inverted-file index over CLS vectors with inner-product scoring.
//!
//! Lists are built from k-means over the corpus. A query ranks centroids by
//! inner product, then scans lists in that order through a [`SearchCursor`],
//! which can expose the running top-K between steps.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! magic   b"SDRKIVF1"
//! nlist   u32
//! d_cls   u32
//! count   u64
//! centroids  nlist × d_cls f32
//! per list:  len u64, doc_ids len × u64, vectors len × d_cls f32
//! ```

pub mod kmeans;
mod search;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub use search::{begin_search, CandidateList, SearchCursor};

use crate::error::{Error, Result};
use crate::types::{ClsVector, DocId};

pub const IVF_MAGIC: [u8; 8] = *b"SDRKIVF1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvertedList {
    pub doc_ids: Vec<DocId>,
    /// `len × d_cls`, row-major.
    pub vectors: Vec<f32>,
}

impl InvertedList {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    dim: usize,
    centroids: Vec<f32>,
    lists: Vec<InvertedList>,
}

impl IvfIndex {
    /// Assembles an index from trained parts, validating the layout.
    pub fn from_parts(dim: usize, centroids: Vec<f32>, lists: Vec<InvertedList>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid_input("index dimension must be positive"));
        }
        if lists.is_empty() || centroids.len() != lists.len() * dim {
            return Err(Error::invalid_input(format!(
                "{} centroid values do not match {} lists of dimension {dim}",
                centroids.len(),
                lists.len()
            )));
        }
        let mut seen = HashSet::new();
        for list in &lists {
            if list.vectors.len() != list.doc_ids.len() * dim {
                return Err(Error::invalid_input(
                    "inverted list vector block has wrong size",
                ));
            }
            for &id in &list.doc_ids {
                if !seen.insert(id) {
                    return Err(Error::invalid_input(format!(
                        "doc {id} appears in more than one list"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            centroids,
            lists,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    /// Number of indexed documents.
    pub fn len(&self) -> usize {
        self.lists.iter().map(InvertedList::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn list(&self, c: usize) -> &InvertedList {
        &self.lists[c]
    }

    pub fn lists(&self) -> &[InvertedList] {
        &self.lists
    }

    /// Memory held by centroids, ids and vectors.
    pub fn size_bytes(&self) -> u64 {
        let vectors =
            self.centroids.len() + self.lists.iter().map(|l| l.vectors.len()).sum::<usize>();
        (vectors * 4 + self.len() * 8) as u64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&IVF_MAGIC)?;
        w.write_all(&(self.nlist() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        write_f32s(&mut w, &self.centroids)?;
        for list in &self.lists {
            w.write_all(&(list.len() as u64).to_le_bytes())?;
            for id in &list.doc_ids {
                w.write_all(&id.to_le_bytes())?;
            }
            write_f32s(&mut w, &list.vectors)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != IVF_MAGIC {
            return Err(Error::format("not an IVF index file (bad magic)"));
        }
        let nlist = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)?;
        if nlist == 0 || dim == 0 {
            return Err(Error::format("IVF header has zero nlist or dimension"));
        }
        let centroids = read_f32s(&mut r, nlist * dim)?;
        let mut lists = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let len = read_u64(&mut r)?;
            if len > count {
                return Err(Error::format("inverted list longer than corpus"));
            }
            let len = len as usize;
            let mut doc_ids = Vec::with_capacity(len);
            for _ in 0..len {
                doc_ids.push(read_u64(&mut r)?);
            }
            let vectors = read_f32s(&mut r, len * dim)?;
            lists.push(InvertedList { doc_ids, vectors });
        }
        let index =
            Self::from_parts(dim, centroids, lists).map_err(|e| Error::format(e.to_string()))?;
        if index.len() as u64 != count {
            return Err(Error::format(format!(
                "header count {count} does not match {} listed docs",
                index.len()
            )));
        }
        Ok(index)
    }
}

/// Clusters the corpus with k-means and files every vector under its nearest centroid.
pub fn train(vectors: &[ClsVector], nlist: usize, max_iters: usize, seed: u64) -> Result<IvfIndex> {
    let dim = vectors
        .first()
        .map(ClsVector::dim)
        .ok_or_else(|| Error::invalid_input("cannot train an index on an empty corpus"))?;
    if vectors.len() < nlist {
        return Err(Error::invalid_input(format!(
            "nlist {nlist} exceeds corpus size {}",
            vectors.len()
        )));
    }
    let mut data = Vec::with_capacity(vectors.len() * dim);
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::invalid_input(format!(
                "doc {} has CLS dimension {}, expected {dim}",
                v.doc_id,
                v.dim()
            )));
        }
        data.extend_from_slice(&v.vector);
    }
    let km = kmeans::train(&data, dim, nlist, max_iters, seed)?;
    let mut lists = vec![InvertedList::default(); nlist];
    for (v, &c) in vectors.iter().zip(&km.assignments) {
        lists[c].doc_ids.push(v.doc_id);
        lists[c].vectors.extend_from_slice(&v.vector);
    }
    IvfIndex::from_parts(dim, km.centroids, lists)
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
