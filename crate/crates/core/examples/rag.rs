//! Retrieval-augmented answering with a deterministic embedding.
//!
//! The offline flow chunks and indexes documents. The online flow embeds a
//! query, ranks chunks by cosine similarity and writes a stub answer naming
//! the best chunk.

use nodeflow::patterns::{build_rag_offline, build_rag_online};
use nodeflow::{SharedStore, Value};

const DOCS: [&str; 3] = [
    "Shared stores carry every piece of state between nodes. Nodes never call each other directly.",
    "Retry policies count total attempts. A node that still fails may fall back to a cached value.",
    "Checkpoints are written after each step, so a crashed run resumes from the last completed node.",
];

fn main() {
    let docs = Value::List(DOCS.iter().map(|d| Value::from(*d)).collect());
    let indexed = build_rag_offline()
        .run(SharedStore::from([("documents", docs)]))
        .unwrap();
    let index = indexed.store.get("index").unwrap().clone();
    println!("indexed {} chunk(s)", index.as_list().unwrap().len());

    let online = build_rag_online();
    for query in ["how does a crashed run resume", "retry policies count attempts before a fallback"] {
        let out = online
            .run(SharedStore::from([("index", index.clone()), ("query", Value::from(query))]))
            .unwrap();
        println!("\nquery: {query}");
        for hit in out.store.get("retrieved").and_then(Value::as_list).unwrap() {
            println!(
                "  {}  {:.3}",
                hit.get("id").and_then(Value::as_str).unwrap(),
                hit.get("score").and_then(Value::as_f64).unwrap()
            );
        }
        println!("  {}", out.store.get_str("answer").unwrap());
    }
}
