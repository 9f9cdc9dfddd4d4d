//! JSON workflow documents.
//!
//! ```json
//! {
//!   "start": "greet",
//!   "nodes": [
//!     {"id": "greet", "kind": "template",
//!      "params": {"template": "Hello, {name}!", "target": "greeting"}},
//!     {"id": "mood", "kind": "set", "params": {"key": "mood", "value": "Happy"},
//!      "retry": {"max_retries": 3, "wait_ms": 10}}
//!   ],
//!   "edges": [{"from": "greet", "action": "default", "to": "mood"}],
//!   "flows": []
//! }
//! ```
//!
//! `action` may be omitted and means `"default"`. Each entry of `flows` is a
//! nested document with an `id`, usable wherever a node id is. Ids are unique
//! across a document's nodes and flows, and edges only resolve within the
//! document that declares them.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::registry;
use crate::flow::Flow;
use crate::graph::{Graph, GraphError, NodeRef, Step};
use crate::ndg::{extract_ndg, Ndg};
use crate::retry::RetryPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub start: String,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flows: Vec<WorkflowDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry: Option<RetrySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrySpec {
    pub max_retries: u32,
    #[serde(default)]
    pub wait_ms: u64,
}

fn default_action() -> String {
    "default".to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: String,
    #[serde(default = "default_action")]
    pub action: String,
    pub to: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocumentError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{path}: unknown node kind `{kind}`")]
    UnknownKind { path: String, kind: String },
    #[error("{path}: `{id}` does not name a node or flow")]
    UnresolvedId { path: String, id: String },
    #[error("{path}: id `{id}` is declared twice")]
    DuplicateId { path: String, id: String },
    #[error("{path}: action `{action}` is already bound on `{from}`")]
    DuplicateBinding { path: String, from: String, action: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl DocumentError {
    /// Where in the document the problem is, such as `edges[2].to`.
    pub fn path(&self) -> &str {
        match self {
            DocumentError::Parse { .. } => "document",
            DocumentError::UnknownKind { path, .. }
            | DocumentError::UnresolvedId { path, .. }
            | DocumentError::DuplicateId { path, .. }
            | DocumentError::DuplicateBinding { path, .. }
            | DocumentError::Invalid { path, .. } => path,
        }
    }
}

pub fn parse_document(bytes: &[u8]) -> Result<WorkflowDocument, DocumentError> {
    serde_json::from_slice(bytes).map_err(|e| DocumentError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and builds in one go.
pub fn parse_workflow(bytes: &[u8]) -> Result<Flow, DocumentError> {
    build_flow(&parse_document(bytes)?)
}

/// Canonical form: sorted keys, no whitespace, empty optional parts omitted.
pub fn emit(doc: &WorkflowDocument) -> String {
    let value = serde_json::to_value(doc).expect("document is plain data");
    serde_json::to_string(&value).expect("JSON value serializes")
}

pub fn build_flow(doc: &WorkflowDocument) -> Result<Flow, DocumentError> {
    build_at(doc, doc.id.as_deref().unwrap_or("main"), "")
}

fn build_at(doc: &WorkflowDocument, id: &str, path: &str) -> Result<Flow, DocumentError> {
    let mut graph = Graph::new(id);
    let mut refs: BTreeMap<&str, NodeRef> = BTreeMap::new();

    for (i, node) in doc.nodes.iter().enumerate() {
        let item_path = format!("{path}nodes[{i}]");
        let step = registry::build_step(node, &item_path)?;
        let added = add(&mut graph, &mut refs, &item_path, &node.id, step)?;
        if let Some(retry) = node.retry {
            let policy = RetryPolicy::new(retry.max_retries, Duration::from_millis(retry.wait_ms)).map_err(|e| {
                DocumentError::Invalid {
                    path: format!("{item_path}.retry"),
                    message: e.to_string(),
                }
            })?;
            graph.set_retry(added, policy).expect("node was just added");
        }
    }
    for (i, sub) in doc.flows.iter().enumerate() {
        let item_path = format!("{path}flows[{i}]");
        let sub_id = sub.id.as_deref().ok_or_else(|| DocumentError::Invalid {
            path: item_path.clone(),
            message: "nested flow needs an `id`".into(),
        })?;
        let flow = build_at(sub, sub_id, &format!("{item_path}."))?;
        add(&mut graph, &mut refs, &item_path, sub_id, Step::Flow(flow))?;
    }

    let resolve = |id: &str, at: String| {
        refs.get(id)
            .copied()
            .ok_or_else(|| DocumentError::UnresolvedId { path: at, id: id.to_owned() })
    };
    for (i, edge) in doc.edges.iter().enumerate() {
        let at = format!("{path}edges[{i}]");
        let from = resolve(&edge.from, format!("{at}.from"))?;
        let to = resolve(&edge.to, format!("{at}.to"))?;
        graph.connect_on(from, edge.action.as_str(), to).map_err(|e| match e {
            GraphError::DuplicateBinding { .. } => DocumentError::DuplicateBinding {
                path: at.clone(),
                from: edge.from.clone(),
                action: edge.action.clone(),
            },
            other => graph_error(&at, other),
        })?;
    }
    let start = resolve(&doc.start, format!("{path}start"))?;
    Ok(Flow::new(graph, start).expect("start resolved in this graph"))
}

fn add<'d>(
    graph: &mut Graph,
    refs: &mut BTreeMap<&'d str, NodeRef>,
    path: &str,
    id: &'d str,
    step: Step,
) -> Result<NodeRef, DocumentError> {
    if refs.contains_key(id) {
        return Err(DocumentError::DuplicateId {
            path: path.to_owned(),
            id: id.to_owned(),
        });
    }
    let node = graph.add(id, step).map_err(|e| graph_error(path, e))?;
    refs.insert(id, node);
    Ok(node)
}

fn graph_error(path: &str, e: GraphError) -> DocumentError {
    DocumentError::Invalid {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

/// The document's graph as written, without building any node. Dangling
/// edge endpoints are kept so that validation can report them.
pub fn raw_ndg(doc: &WorkflowDocument) -> Ndg {
    raw_at(doc, doc.id.as_deref().unwrap_or("main"))
}

fn raw_at(doc: &WorkflowDocument, id: &str) -> Ndg {
    let mut ndg = Ndg::new(id);
    ndg.start = Some(doc.start.clone());
    for node in &doc.nodes {
        ndg.add_node(node.id.as_str());
        if let Some(flow) = registry::pattern_flow(node) {
            ndg.nested.insert(node.id.clone(), extract_ndg(&flow));
        }
    }
    for sub in &doc.flows {
        let sub_id = sub.id.clone().unwrap_or_default();
        ndg.add_node(sub_id.as_str());
        ndg.nested.insert(sub_id.clone(), raw_at(sub, &sub_id));
    }
    for edge in &doc.edges {
        ndg.add_edge(edge.from.as_str(), edge.action.as_str(), edge.to.as_str());
    }
    ndg
}
