//! Retrieval-augmented generation over a deterministic embedding.
//!
//! The offline flow turns `documents` into an `index`:
//!
//! ```text
//! chunk >> embed_docs >> create_index
//! ```
//!
//! The online flow answers `query` from that index:
//!
//! ```text
//! embed_query >> retrieve >> generate_answer
//! ```
//!
//! An index entry is a map with `id`, `text` and `vector` (a list of
//! integers). Chunk ids are `dddd-cccc`: document ordinal, then chunk
//! ordinal within the document.

use std::sync::Arc;

use super::{require, require_list, require_str, PatternError};
use crate::flow::Flow;
use crate::graph::{Graph, Step};
use crate::node::{Action, BatchNode, Node, NodeError};
use crate::store::SharedStore;
use crate::value::Value;

pub const DIMENSION: usize = 16;
pub const CHUNK_SIZE: usize = 200;
pub const CHUNK_OVERLAP: usize = 40;
pub const TOP_K: usize = 3;

/// Maps text to a fixed-length vector of non-negative counts.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<i64>;
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Counts character bigrams, bucketed by FNV-1a of their UTF-8 bytes.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockEmbedder;

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> Vec<i64> {
        let mut v = vec![0; DIMENSION];
        let chars: Vec<char> = text.chars().collect();
        for pair in chars.windows(2) {
            let bigram: String = pair.iter().collect();
            v[(fnv1a(bigram.as_bytes()) % DIMENSION as u64) as usize] += 1;
        }
        v
    }
}

/// Counts single characters by code point. A second, unrelated embedding.
#[derive(Debug, Default, Clone, Copy)]
pub struct UnigramEmbedder;

impl Embedder for UnigramEmbedder {
    fn embed(&self, text: &str) -> Vec<i64> {
        let mut v = vec![0; DIMENSION];
        for c in text.chars() {
            v[c as usize % DIMENSION] += 1;
        }
        v
    }
}

/// Cosine similarity. Zero when either vector is all zeros.
pub fn cosine(a: &[i64], b: &[i64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
    let norm = |v: &[i64]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Splits `text` into windows of [`CHUNK_SIZE`] characters that overlap by
/// [`CHUNK_OVERLAP`]. Empty text yields no chunks.
pub fn chunk_text(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let stride = CHUNK_SIZE - CHUNK_OVERLAP;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let end = (start + CHUNK_SIZE).min(chars.len());
        chunks.push(chars[start..end].iter().collect());
        if end == chars.len() {
            break;
        }
        start += stride;
    }
    chunks
}

fn vector_value(v: &[i64]) -> Value {
    Value::List(v.iter().map(|x| Value::Int(*x)).collect())
}

fn ints(v: Option<&Value>) -> Result<Vec<i64>, NodeError> {
    v.and_then(Value::as_list)
        .and_then(|xs| xs.iter().map(Value::as_i64).collect())
        .ok_or_else(|| "expected a vector of integers".into())
}

fn text_field<'v>(entry: &'v Value, key: &str) -> Result<&'v str, NodeError> {
    entry
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("entry has no text `{key}`").into())
}

struct ChunkDocuments;

impl Node for ChunkDocuments {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        let docs = require_list(store, "documents")?;
        if docs.iter().any(|d| d.as_str().is_none()) {
            return Err(PatternError::WrongType {
                key: "documents".into(),
                expected: "a list of text",
            }
            .into());
        }
        Ok(Value::List(docs.to_vec()))
    }

    fn exec(&self, docs: &Value) -> Result<Value, NodeError> {
        let mut chunks = Vec::new();
        for (d, doc) in docs.as_list().unwrap_or_default().iter().enumerate() {
            for (c, text) in chunk_text(doc.as_str().unwrap_or_default()).into_iter().enumerate() {
                chunks.push(Value::map([
                    ("id", Value::from(format!("{d:04}-{c:04}"))),
                    ("text", Value::from(text)),
                ]));
            }
        }
        Ok(Value::List(chunks))
    }

    fn post(&self, store: &mut SharedStore, _: Value, chunks: Value) -> Result<Action, NodeError> {
        store.set("chunks", chunks)?;
        Ok(Action::default())
    }
}

struct EmbedDocuments(Arc<dyn Embedder>);

impl BatchNode for EmbedDocuments {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        Ok(require(store, "chunks")?.clone())
    }

    fn exec(&self, chunk: &Value) -> Result<Value, NodeError> {
        let vector = self.0.embed(text_field(chunk, "text")?);
        Ok(Value::map([
            ("id", Value::from(text_field(chunk, "id")?)),
            ("text", Value::from(text_field(chunk, "text")?)),
            ("vector", vector_value(&vector)),
        ]))
    }

    fn post(&self, store: &mut SharedStore, _: Vec<Value>, embedded: Vec<Value>) -> Result<Action, NodeError> {
        store.set("embedded", embedded)?;
        Ok(Action::default())
    }
}

struct CreateIndex;

impl Node for CreateIndex {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        Ok(Value::List(require_list(store, "embedded")?.to_vec()))
    }

    fn exec(&self, embedded: &Value) -> Result<Value, NodeError> {
        let mut entries = embedded.as_list().unwrap_or_default().to_vec();
        entries.sort_by(|a, b| a.get("id").and_then(Value::as_str).cmp(&b.get("id").and_then(Value::as_str)));
        Ok(Value::List(entries))
    }

    fn post(&self, store: &mut SharedStore, _: Value, index: Value) -> Result<Action, NodeError> {
        store.remove("chunks");
        store.remove("embedded");
        store.set("index", index)?;
        Ok(Action::default())
    }
}

struct EmbedQuery(Arc<dyn Embedder>);

impl Node for EmbedQuery {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        Ok(require_str(store, "query")?.into())
    }

    fn exec(&self, query: &Value) -> Result<Value, NodeError> {
        Ok(vector_value(&self.0.embed(query.as_str().unwrap_or_default())))
    }

    fn post(&self, store: &mut SharedStore, _: Value, vector: Value) -> Result<Action, NodeError> {
        store.set("query_vector", vector)?;
        Ok(Action::default())
    }
}

struct Retrieve;

impl Node for Retrieve {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        Ok(Value::map([
            ("query_vector", require(store, "query_vector")?.clone()),
            ("index", Value::List(require_list(store, "index")?.to_vec())),
        ]))
    }

    fn exec(&self, input: &Value) -> Result<Value, NodeError> {
        let query = ints(input.get("query_vector"))?;
        let mut scored = Vec::new();
        for entry in input.get("index").and_then(Value::as_list).unwrap_or_default() {
            let score = cosine(&query, &ints(entry.get("vector"))?);
            scored.push((score, text_field(entry, "id")?.to_owned(), text_field(entry, "text")?.to_owned()));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        Ok(Value::List(
            scored
                .into_iter()
                .take(TOP_K)
                .map(|(score, id, text)| {
                    Value::map([
                        ("id", Value::from(id)),
                        ("score", Value::Float(score)),
                        ("text", Value::from(text)),
                    ])
                })
                .collect(),
        ))
    }

    fn post(&self, store: &mut SharedStore, _: Value, retrieved: Value) -> Result<Action, NodeError> {
        store.set("retrieved", retrieved)?;
        Ok(Action::default())
    }
}

struct GenerateAnswer;

impl Node for GenerateAnswer {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        let top = require_list(store, "retrieved")?
            .first()
            .and_then(|e| e.get("id"))
            .and_then(Value::as_str)
            .unwrap_or_default();
        Ok(Value::map([
            ("query", Value::from(require_str(store, "query")?)),
            ("top", Value::from(top)),
        ]))
    }

    fn exec(&self, input: &Value) -> Result<Value, NodeError> {
        Ok(format!("ANSWER[{}|{}]", text_field(input, "query")?, text_field(input, "top")?).into())
    }

    fn post(&self, store: &mut SharedStore, _: Value, answer: Value) -> Result<Action, NodeError> {
        store.set("answer", answer)?;
        Ok(Action::default())
    }
}

fn linear(id: &str, steps: Vec<(&str, Step)>) -> Flow {
    let mut graph = Graph::new(id);
    let refs: Vec<_> = steps
        .into_iter()
        .map(|(id, step)| graph.add(id, step).expect("distinct ids"))
        .collect();
    graph.chain(&refs).expect("fresh wiring");
    Flow::new(graph, refs[0]).expect("start belongs to graph")
}

pub fn build_rag_offline() -> Flow {
    build_rag_offline_with(Arc::new(MockEmbedder))
}

pub fn build_rag_offline_with(embedder: Arc<dyn Embedder>) -> Flow {
    linear(
        "rag_offline",
        vec![
            ("chunk", Step::from(ChunkDocuments)),
            ("embed_docs", Step::batch(EmbedDocuments(embedder))),
            ("create_index", Step::from(CreateIndex)),
        ],
    )
}

pub fn build_rag_online() -> Flow {
    build_rag_online_with(Arc::new(MockEmbedder))
}

pub fn build_rag_online_with(embedder: Arc<dyn Embedder>) -> Flow {
    linear(
        "rag_online",
        vec![
            ("embed_query", Step::from(EmbedQuery(embedder))),
            ("retrieve", Step::from(Retrieve)),
            ("generate_answer", Step::from(GenerateAnswer)),
        ],
    )
}
