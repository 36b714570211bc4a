//! Exact cosine search over L2-normalized passage embeddings.
//!
//! Rows are normalized at build time and kept as `f32`, the on-disk precision,
//! so a saved index reloads bit-for-bit. Rows are stored sorted by id, which
//! makes the content independent of insertion order and turns the
//! ascending-id tie-break into a row-order tie-break.
//!
//! File layout (little-endian):
//!
//! ```text
//! b"SRAGIDX1" | version u32 | H u32 | N u64 | N x (id_len u32 | id UTF-8) | N x H f32
//! ```

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::Embedding;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SRAGIDX1";
pub const VERSION: u32 = 1;
/// Allowed deviation of a stored row's norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    ids: Vec<String>,
    dim: usize,
    /// Row-major `N x dim`.
    rows: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Ranked hits, best first.
pub type SearchResult = Vec<Hit>;

fn normalize(v: &[f64], what: &str) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector(what.to_string()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

impl Index {
    pub fn build<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Embedding)>,
        S: Into<String>,
    {
        let mut entries: Vec<(String, Vec<f32>)> = Vec::new();
        let mut seen = HashSet::new();
        let mut dim = None;
        for (id, emb) in pairs {
            let id = id.into();
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            let d = *dim.get_or_insert(emb.len());
            if emb.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "index embedding width",
                    expected: d,
                    found: emb.len(),
                });
            }
            let unit = normalize(emb.as_slice().expect("contiguous"), &format!("embedding of {id}"))?;
            entries.push((id, unit.into_iter().map(|x| x as f32).collect()));
        }
        let dim = dim.ok_or(Error::EmptyInput("index build input"))?;
        if dim == 0 {
            return Err(Error::EmptyInput("zero-width embeddings"));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut ids = Vec::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len() * dim);
        for (id, row) in entries {
            ids.push(id);
            rows.extend(row);
        }
        Ok(Self { ids, dim, rows })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Ids in row order (ascending).
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine of the query against every row, in row order.
    pub fn scores(&self, query: &Embedding) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "query width",
                expected: self.dim,
                found: query.len(),
            });
        }
        let q = normalize(query.as_slice().expect("contiguous"), "query")?;
        Ok(self
            .rows
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(&q).map(|(&a, b)| f64::from(a) * b).sum())
            .collect())
    }

    /// Exact top-`k` by cosine; ties go to the smaller id.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<SearchResult> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        let scores = self.scores(query)?;
        let better = |a: &usize, b: &usize| -> Ordering {
            scores[*b].total_cmp(&scores[*a]).then(a.cmp(b))
        };
        let mut order: Vec<usize> = (0..self.len()).collect();
        let k = k.min(order.len());
        if k < order.len() {
            order.select_nth_unstable_by(k, better);
            order.truncate(k);
        }
        order.sort_unstable_by(better);
        Ok(order
            .into_iter()
            .map(|i| Hit {
                id: self.ids[i].clone(),
                score: scores[i],
            })
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(std::fs::File::create(path)?);
            w.write_all(MAGIC)?;
            w.write_all(&VERSION.to_le_bytes())?;
            w.write_all(&(self.dim as u32).to_le_bytes())?;
            w.write_all(&(self.len() as u64).to_le_bytes())?;
            for id in &self.ids {
                w.write_all(&(id.len() as u32).to_le_bytes())?;
                w.write_all(id.as_bytes())?;
            }
            for v in &self.rows {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut r = Reader { bytes: &bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(Error::corrupt(path, "bad magic, not an index file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::corrupt(path, format!("unsupported index version {version}")));
        }
        let dim = r.u32()? as usize;
        let n = usize::try_from(r.u64()?).map_err(|_| Error::corrupt(path, "row count overflows"))?;
        if dim == 0 {
            return Err(Error::corrupt(path, "zero embedding width"));
        }
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::corrupt(path, "id is not UTF-8"))?;
            ids.push(id.to_string());
        }
        let count = n
            .checked_mul(dim)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::corrupt(path, "matrix size overflows"))?;
        let rows: Vec<f32> = r
            .take(count)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if r.pos != bytes.len() {
            return Err(Error::corrupt(path, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        for (i, row) in rows.chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
                return Err(Error::NormViolation { row: i, norm });
            }
        }
        if ids.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::corrupt(path, "ids are not in ascending order"));
        }
        Ok(Self { ids, dim, rows })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()) {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::corrupt(self.path, format!("truncated at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// 1-based rank of `id` in `result`.
pub fn rank_of(result: &[Hit], id: &str) -> Option<usize> {
    result.iter().position(|h| h.id == id).map(|p| p + 1)
}

/// Fraction of queries whose relevant passage is in their top `k`.
/// `results[q]` is the ranking for query `q`; `qrels` maps query to its one
/// relevant passage id.
pub fn recall_at_k(results: &[SearchResult], qrels: &HashMap<usize, String>, k: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput("recall needs at least one query"));
    }
    let mut hits = 0usize;
    for (q, result) in results.iter().enumerate() {
        let relevant = qrels
            .get(&q)
            .ok_or_else(|| Error::InvalidParameter(format!("query {q} has no relevance judgment")))?;
        if rank_of(result, relevant).is_some_and(|r| r <= k) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// One line of a query report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub query: usize,
    pub text: String,
    pub relevant: String,
    pub relevant_rank: Option<usize>,
    pub ranked: Vec<String>,
    pub scores: Vec<f64>,
}

impl QueryReport {
    pub fn new(query: usize, text: &str, relevant: &str, result: &[Hit]) -> Self {
        Self {
            query,
            text: text.to_string(),
            relevant: relevant.to_string(),
            relevant_rank: rank_of(result, relevant),
            ranked: result.iter().map(|h| h.id.clone()).collect(),
            scores: result.iter().map(|h| h.score).collect(),
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for row in rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
