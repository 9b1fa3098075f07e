//! Embedding and namespaced top-k retrieval.
//!
//! The offline embedder is a hashed bag of words: the text is lowercased and
//! split on every non-alphanumeric character, each token is hashed with
//! 64-bit FNV-1a, the count at coordinate `hash % dim` is incremented, and the
//! vector is L2-normalised. Empty text maps to the zero vector, whose cosine
//! with anything is 0.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::http::Endpoint;

pub const DEFAULT_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs.
pub fn hash_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Cosine similarity; 0 when either side is the zero vector.
    pub fn cosine(&self, other: &Vector) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vector>>;

    fn embed_one(&self, text: &str) -> Result<Vector> {
        Ok(self.embed(&[text])?.remove(0))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(HashEmbedder { dim })
    }

    /// Coordinate a lowercased token is counted in.
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn embed_text(&self, text: &str) -> Vector {
        let mut v = vec![0.0f64; self.dim];
        for tok in hash_tokens(text) {
            v[self.bucket(&tok)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Vector(v)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: DEFAULT_DIM }
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vector>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

/// Client for services speaking the common `/embeddings` wire format:
/// request `{"model", "input": [..]}`, response `{"data": [{"index", "embedding"}]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: Endpoint,
    model: String,
    dim: usize,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: Endpoint, model: impl Into<String>, dim: usize) -> Self {
        RemoteEmbedder {
            endpoint,
            model: model.into(),
            dim,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp: EmbeddingResponse = self.endpoint.post_json(&EmbeddingRequest {
            model: &self.model,
            input: texts,
        })?;
        if resp.data.len() != texts.len() {
            return Err(Error::Schema(format!(
                "embedding service returned {} vectors for {} inputs",
                resp.data.len(),
                texts.len()
            )));
        }
        let mut out: Vec<Option<Vector>> = vec![None; texts.len()];
        for (pos, d) in resp.data.into_iter().enumerate() {
            if d.embedding.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: d.embedding.len(),
                });
            }
            let slot = d.index.unwrap_or(pos);
            if slot >= out.len() {
                return Err(Error::Schema(format!("embedding index {slot} out of range")));
            }
            out[slot] = Some(Vector(d.embedding));
        }
        out.into_iter()
            .map(|v| v.ok_or_else(|| Error::Schema("embedding response has gaps".into())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f64,
    pub namespace: String,
}

#[derive(Debug, Clone)]
struct Entry {
    chunk: Chunk,
    vector: Vector,
}

#[derive(Debug, Default)]
struct Namespace {
    entries: BTreeMap<String, Entry>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotRecord {
    namespace: String,
    chunk: Chunk,
    vector: Vector,
}

/// Exhaustive cosine index over named namespaces.
pub struct VectorIndex {
    embedder: Arc<dyn Embedder>,
    namespaces: RwLock<BTreeMap<String, Namespace>>,
}

impl VectorIndex {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        VectorIndex {
            embedder,
            namespaces: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    /// Inserts or replaces chunks. Returns the number of chunks written.
    pub fn upsert(&self, namespace: &str, chunks: &[Chunk]) -> Result<usize> {
        let mut seen = HashSet::new();
        let mut dups: Vec<String> = chunks
            .iter()
            .filter(|c| !seen.insert(c.chunk_id.as_str()))
            .map(|c| c.chunk_id.clone())
            .collect();
        if !dups.is_empty() {
            dups.sort();
            dups.dedup();
            return Err(Error::DuplicateIds(dups));
        }
        let texts: Vec<String> = chunks.iter().map(Chunk::text).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let vectors = self.embedder.embed(&refs)?;
        self.insert_embedded(namespace, chunks.iter().cloned().zip(vectors))
    }

    fn insert_embedded(&self, namespace: &str, items: impl IntoIterator<Item = (Chunk, Vector)>) -> Result<usize> {
        let dim = self.embedder.dim();
        let mut guard = self.namespaces.write().expect("index lock poisoned");
        let ns = guard.entry(namespace.to_string()).or_default();
        let mut n = 0;
        for (chunk, vector) in items {
            if vector.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: vector.dim(),
                });
            }
            ns.entries.insert(chunk.chunk_id.clone(), Entry { chunk, vector });
            n += 1;
        }
        Ok(n)
    }

    pub fn len(&self, namespace: &str) -> Result<usize> {
        let guard = self.namespaces.read().expect("index lock poisoned");
        guard
            .get(namespace)
            .map(|ns| ns.entries.len())
            .ok_or_else(|| Error::UnknownNamespace(namespace.to_string()))
    }

    pub fn namespaces(&self) -> Vec<String> {
        self.namespaces
            .read()
            .expect("index lock poisoned")
            .keys()
            .cloned()
            .collect()
    }

    pub fn get(&self, namespace: &str, chunk_id: &str) -> Option<Chunk> {
        let guard = self.namespaces.read().expect("index lock poisoned");
        guard
            .get(namespace)
            .and_then(|ns| ns.entries.get(chunk_id))
            .map(|e| e.chunk.clone())
    }

    /// `min(k, size)` hits by cosine score descending, ties by chunk id ascending.
    pub fn query_top_k(&self, namespace: &str, query_text: &str, k: usize) -> Result<Vec<RetrievalHit>> {
        if k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        let q = self.embedder.embed_one(query_text)?;
        let guard = self.namespaces.read().expect("index lock poisoned");
        let ns = guard
            .get(namespace)
            .ok_or_else(|| Error::UnknownNamespace(namespace.to_string()))?;
        let mut hits: Vec<RetrievalHit> = ns
            .entries
            .iter()
            .map(|(id, e)| RetrievalHit {
                chunk_id: id.clone(),
                score: q.cosine(&e.vector),
                namespace: namespace.to_string(),
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
        hits.truncate(k);
        Ok(hits)
    }

    /// Top-k hits paired with their chunks.
    pub fn retrieve(&self, namespace: &str, query_text: &str, k: usize) -> Result<Vec<(RetrievalHit, Chunk)>> {
        let hits = self.query_top_k(namespace, query_text, k)?;
        let guard = self.namespaces.read().expect("index lock poisoned");
        let ns = guard
            .get(namespace)
            .ok_or_else(|| Error::UnknownNamespace(namespace.to_string()))?;
        Ok(hits
            .into_iter()
            .map(|h| {
                let chunk = ns.entries[&h.chunk_id].chunk.clone();
                (h, chunk)
            })
            .collect())
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let guard = self.namespaces.read().expect("index lock poisoned");
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        for (name, ns) in guard.iter() {
            for e in ns.entries.values() {
                serde_json::to_writer(
                    &mut w,
                    &SnapshotRecord {
                        namespace: name.clone(),
                        chunk: e.chunk.clone(),
                        vector: e.vector.clone(),
                    },
                )?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Loads records written by [`save_snapshot`](Self::save_snapshot) without re-embedding.
    pub fn load_snapshot(&self, path: &Path) -> Result<usize> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut n = 0;
        for (index, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SnapshotRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                index,
                message: e.to_string(),
            })?;
            n += self.insert_embedded(&rec.namespace, [(rec.chunk, rec.vector)])?;
        }
        Ok(n)
    }
}
