//! Loading a JSON workflow document and running it, as the CLI does.

use nodeflow::cli::{emit, parse_document, parse_workflow};
use nodeflow::{SharedStore, Value};

const DOC: &str = r#"{
  "start": "count",
  "nodes": [
    { "id": "count", "kind": "counter", "params": { "key": "n", "limit": 3 } },
    { "id": "say", "kind": "template", "params": { "template": "reached {n}", "target": "message" } }
  ],
  "edges": [
    { "from": "count", "action": "continue", "to": "count" },
    { "from": "count", "action": "done", "to": "say" }
  ]
}"#;

fn main() {
    let doc = parse_document(DOC.as_bytes()).unwrap();
    println!("canonical document: {}", emit(&doc));

    let flow = parse_workflow(DOC.as_bytes()).unwrap();
    let out = flow.run(SharedStore::from([("n", Value::Int(0))])).unwrap();
    print!("{}", out.trace_tsv());
    println!("{}", out.store.to_canonical_string().unwrap());
}
