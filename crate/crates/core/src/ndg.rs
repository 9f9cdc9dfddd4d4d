//! Nested directed graph view of a flow, and static checks over it.
//!
//! An [`Ndg`] records node ids, edges with their action labels, and for each
//! hierarchical node (a nested flow or batch flow) the graph it contains.
//! Several labels can lead along the same edge, so labels are kept as a set
//! per `(from, to)` pair.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::flow::Flow;
use crate::graph::Step;
use crate::store::value_to_canonical_bytes;
use crate::value::Value;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ndg {
    pub id: String,
    pub start: Option<String>,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), BTreeSet<String>>,
    pub nested: BTreeMap<String, Ndg>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NdgError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

impl Ndg {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..Self::default()
        }
    }

    pub fn add_node(&mut self, id: impl Into<String>) {
        self.nodes.insert(id.into());
    }

    pub fn add_edge(&mut self, from: impl Into<String>, label: impl Into<String>, to: impl Into<String>) {
        self.edges
            .entry((from.into(), to.into()))
            .or_default()
            .insert(label.into());
    }

    /// The hierarchical node ids.
    pub fn hierarchical(&self) -> BTreeSet<&str> {
        self.nested.keys().map(String::as_str).collect()
    }

    /// Every action label used on an edge.
    pub fn labels(&self) -> BTreeSet<&str> {
        self.edges.values().flatten().map(String::as_str).collect()
    }

    /// Total number of labeled edges, counting each label separately.
    pub fn labeled_edge_count(&self) -> usize {
        self.edges.values().map(BTreeSet::len).sum()
    }

    fn outgoing<'a>(&'a self, from: &'a str) -> impl Iterator<Item = (&'a str, &'a BTreeSet<String>)> + 'a {
        self.edges
            .iter()
            .filter(move |((f, _), _)| f == from)
            .map(|((_, t), labels)| (t.as_str(), labels))
    }

    fn to_value(&self) -> Value {
        Value::map([
            ("id", Value::from(self.id.as_str())),
            ("start", Value::from(self.start.clone())),
            ("nodes", Value::List(self.nodes.iter().map(|n| Value::from(n.as_str())).collect())),
            (
                "edges",
                Value::List(
                    self.edges
                        .iter()
                        .map(|((f, t), labels)| {
                            Value::List(vec![
                                f.as_str().into(),
                                t.as_str().into(),
                                Value::List(labels.iter().map(|l| Value::from(l.as_str())).collect()),
                            ])
                        })
                        .collect(),
                ),
            ),
            (
                "nested",
                Value::Map(self.nested.iter().map(|(h, g)| (h.clone(), g.to_value())).collect()),
            ),
        ])
    }

    /// Stable SHA-256 over ids, edges, labels, start nodes and nesting.
    pub fn fingerprint(&self) -> String {
        let bytes = value_to_canonical_bytes(&self.to_value(), "ndg").expect("graph description is plain data");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Graphviz rendering; nested graphs become clusters.
    pub fn to_dot(&self) -> String {
        let mut out = format!("digraph {} {{\n", quote(&self.id));
        self.write_dot_body(&mut out, "", 1);
        out.push_str("}\n");
        out
    }

    fn write_dot_body(&self, out: &mut String, prefix: &str, depth: usize) {
        let pad = "  ".repeat(depth);
        for n in &self.nodes {
            let name = format!("{prefix}{n}");
            if let Some(sub) = self.nested.get(n) {
                out.push_str(&format!("{pad}subgraph {} {{\n", quote(&format!("cluster_{name}"))));
                out.push_str(&format!("{pad}  label={};\n", quote(n)));
                out.push_str(&format!("{pad}  {} [shape=box,style=dashed,label={}];\n", quote(&name), quote(n)));
                sub.write_dot_body(out, &format!("{name}/"), depth + 1);
                out.push_str(&format!("{pad}}}\n"));
            } else {
                out.push_str(&format!("{pad}{} [label={}];\n", quote(&name), quote(n)));
            }
        }
        for ((f, t), labels) in &self.edges {
            let label = labels.iter().cloned().collect::<Vec<_>>().join(",");
            out.push_str(&format!(
                "{pad}{} -> {} [label={}];\n",
                quote(&format!("{prefix}{f}")),
                quote(&format!("{prefix}{t}")),
                quote(&label)
            ));
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Builds the NDG of `flow`, recursing into nested flows.
pub fn extract_ndg(flow: &Flow) -> Ndg {
    let graph = flow.graph();
    let mut ndg = Ndg::new(flow.id());
    ndg.start = graph.node_id(flow.start()).map(str::to_owned);
    for (node, id, step) in graph.nodes() {
        ndg.add_node(id);
        for (action, to) in graph.successors(node) {
            ndg.add_edge(id, action.as_str(), graph.node_id(to).expect("successor in graph"));
        }
        match step {
            Step::Flow(sub) => {
                ndg.nested.insert(id.to_owned(), extract_ndg(sub));
            }
            Step::BatchFlow(bflow) => {
                ndg.nested.insert(id.to_owned(), extract_ndg(bflow.inner()));
            }
            _ => {}
        }
    }
    ndg
}

pub fn fingerprint(flow: &Flow) -> String {
    extract_ndg(flow).fingerprint()
}

/// Forward closure from `start` over the edges, ignoring labels.
pub fn reachable(ndg: &Ndg, start: &str) -> Result<BTreeSet<String>, NdgError> {
    if !ndg.nodes.contains(start) {
        return Err(NdgError::UnknownNode(start.to_owned()));
    }
    let mut seen = BTreeSet::from([start.to_owned()]);
    let mut queue = VecDeque::from([start.to_owned()]);
    while let Some(n) = queue.pop_front() {
        for (to, _) in ndg.outgoing(&n) {
            if ndg.nodes.contains(to) && seen.insert(to.to_owned()) {
                queue.push_back(to.to_owned());
            }
        }
    }
    Ok(seen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagnosticCode {
    EmptyGraph,
    UnknownStart,
    UnresolvedEdge,
    DuplicateEdgeLabel,
    UnreachableNode,
    NoTerminal,
}

impl DiagnosticCode {
    pub fn severity(self) -> Severity {
        match self {
            DiagnosticCode::UnreachableNode | DiagnosticCode::NoTerminal => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    /// Node id or `from->to` edge, hierarchical for nested graphs.
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    fn new(code: DiagnosticCode, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: code.severity(),
            code,
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.severity, self.code, self.subject, self.message)
    }
}

/// Lints `ndg` starting from `start`, then each nested graph from its own
/// start. An empty result means the graph is clean.
pub fn validate(ndg: &Ndg, start: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    validate_into(ndg, start, "", &mut out);
    out
}

fn validate_into(ndg: &Ndg, start: &str, prefix: &str, out: &mut Vec<Diagnostic>) {
    use DiagnosticCode::*;
    let at = |s: &str| format!("{prefix}{s}");

    if ndg.nodes.is_empty() {
        out.push(Diagnostic::new(EmptyGraph, at(&ndg.id), "graph has no nodes"));
        return;
    }
    for (f, t) in ndg.edges.keys() {
        for end in [f, t] {
            if !ndg.nodes.contains(end) {
                out.push(Diagnostic::new(
                    UnresolvedEdge,
                    at(&format!("{f}->{t}")),
                    format!("edge endpoint `{end}` is not a node"),
                ));
            }
        }
    }
    let mut by_label: BTreeMap<(&str, &str), Vec<&str>> = BTreeMap::new();
    for ((f, t), labels) in &ndg.edges {
        for l in labels {
            by_label.entry((f, l)).or_default().push(t);
        }
    }
    for ((f, l), targets) in by_label {
        if targets.len() > 1 {
            out.push(Diagnostic::new(
                DuplicateEdgeLabel,
                at(f),
                format!("action `{l}` leads to {}", targets.join(", ")),
            ));
        }
    }

    match reachable(ndg, start) {
        Err(_) => out.push(Diagnostic::new(UnknownStart, at(start), "start node is not in the graph")),
        Ok(seen) => {
            for n in ndg.nodes.difference(&seen) {
                out.push(Diagnostic::new(UnreachableNode, at(n), format!("not reachable from `{start}`")));
            }
            let has_default = |n: &str| ndg.outgoing(n).any(|(_, labels)| labels.contains("default"));
            if seen.iter().all(|n| has_default(n)) {
                out.push(Diagnostic::new(
                    NoTerminal,
                    at(start),
                    "every reachable node has a default successor; the flow may never terminate",
                ));
            }
        }
    }

    for (h, sub) in &ndg.nested {
        let sub_prefix = format!("{prefix}{h}/");
        match &sub.start {
            Some(s) => validate_into(sub, s, &sub_prefix, out),
            None => out.push(Diagnostic::new(UnknownStart, at(h), "nested graph has no start node")),
        }
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::node::FnNode;

    fn chain(ids: &[&str]) -> Ndg {
        let mut g = Ndg::new("g");
        for id in ids {
            g.add_node(*id);
        }
        for w in ids.windows(2) {
            g.add_edge(w[0], "default", w[1]);
        }
        g.start = ids.first().map(|s| s.to_string());
        g
    }

    #[test]
    fn extracts_default_edge() {
        let mut g = Graph::new("greeting");
        let a = g.add("greet", FnNode::new()).unwrap();
        let b = g.add("ask_mood", FnNode::new()).unwrap();
        g.connect_default(a, b).unwrap();
        let ndg = extract_ndg(&Flow::new(g, a).unwrap());
        assert_eq!(ndg.nodes, BTreeSet::from(["greet".to_string(), "ask_mood".to_string()]));
        assert_eq!(ndg.edges.len(), 1);
        assert_eq!(
            ndg.edges[&("greet".to_string(), "ask_mood".to_string())],
            BTreeSet::from(["default".to_string()])
        );
        assert!(ndg.nested.is_empty());
    }

    #[test]
    fn nested_flow_becomes_hierarchical() {
        let mut inner = Graph::new("process_data");
        let n = inner.add("clean", FnNode::new()).unwrap();
        let process = Flow::new(inner, n).unwrap();
        let mut g = Graph::new("data_pipeline");
        let p = g.add("process_data_flow", process.clone()).unwrap();
        let a = g.add("analyze_results", FnNode::new()).unwrap();
        g.connect_default(p, a).unwrap();
        let ndg = extract_ndg(&Flow::new(g, p).unwrap());
        assert_eq!(ndg.hierarchical(), BTreeSet::from(["process_data_flow"]));
        assert_eq!(ndg.nested["process_data_flow"], extract_ndg(&process));
    }

    #[test]
    fn single_unwired_node() {
        let mut g = Graph::new("one");
        let n = g.add("n", FnNode::new()).unwrap();
        let ndg = extract_ndg(&Flow::new(g, n).unwrap());
        assert_eq!(ndg.nodes.len(), 1);
        assert!(ndg.edges.is_empty() && ndg.nested.is_empty());
        assert!(validate(&ndg, "n").is_empty());
    }

    #[test]
    fn linear_flow_is_clean() {
        assert!(validate(&chain(&["a", "b", "c"]), "a").is_empty());
    }

    #[test]
    fn island_is_unreachable() {
        let mut g = chain(&["a", "b"]);
        g.add_node("x");
        g.add_node("y");
        g.add_edge("x", "default", "y");
        let d = validate(&g, "a");
        let codes: Vec<_> = d.iter().map(|d| (d.code, d.subject.as_str())).collect();
        assert_eq!(
            codes,
            vec![(DiagnosticCode::UnreachableNode, "x"), (DiagnosticCode::UnreachableNode, "y")]
        );
        assert!(!has_errors(&d));
    }

    #[test]
    fn default_self_loop_has_no_terminal() {
        let mut g = Ndg::new("loop");
        g.add_node("spin");
        g.add_edge("spin", "default", "spin");
        let d = validate(&g, "spin");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::NoTerminal);
        assert_eq!(d[0].severity, Severity::Warning);
    }

    #[test]
    fn labeled_self_loop_is_fine() {
        let mut g = Ndg::new("hinter");
        g.add_node("hinter");
        g.add_edge("hinter", "continue", "hinter");
        assert!(validate(&g, "hinter").is_empty());
    }

    #[test]
    fn unresolved_and_duplicate_labels_are_errors() {
        let mut g = chain(&["a", "b"]);
        g.add_edge("a", "x", "ghost");
        g.add_node("c");
        g.add_edge("a", "default", "c");
        let d = validate(&g, "a");
        assert!(d.iter().any(|d| d.code == DiagnosticCode::UnresolvedEdge && d.subject == "a->ghost"));
        assert!(d.iter().any(|d| d.code == DiagnosticCode::DuplicateEdgeLabel && d.subject == "a"));
        assert!(has_errors(&d));
    }

    #[test]
    fn empty_graph() {
        let d = validate(&Ndg::new("nothing"), "x");
        assert_eq!(d[0].code, DiagnosticCode::EmptyGraph);
    }

    #[test]
    fn diagnostic_line_format() {
        let d = Diagnostic::new(DiagnosticCode::UnreachableNode, "x", "not reachable from `a`");
        assert_eq!(d.to_string(), "WARNING\tUnreachableNode\tx\tnot reachable from `a`");
    }

    #[test]
    fn reachable_walks_forward_only() {
        let g = chain(&["a", "b", "c"]);
        assert_eq!(reachable(&g, "a").unwrap().len(), 3);
        assert_eq!(reachable(&g, "c").unwrap(), BTreeSet::from(["c".to_string()]));
        assert_eq!(reachable(&g, "zz"), Err(NdgError::UnknownNode("zz".into())));
    }

    /// Plain BFS over an adjacency list, independent of `Ndg`.
    fn bfs_oracle(adj: &[(usize, usize)], n: usize, start: usize) -> BTreeSet<usize> {
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(a, b) in adj {
                if a == u && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        (0..n).filter(|&i| seen[i]).collect()
    }

    #[test]
    fn branching_cycle_matches_oracle() {
        // 0 -> 1, 0 -> 2, 2 -> 3, 3 -> 0 (cycle), 4 -> 5 (island)
        let adj = [(0, 1), (0, 2), (2, 3), (3, 0), (4, 5)];
        let mut g = Ndg::new("g");
        for i in 0..6 {
            g.add_node(format!("n{i}"));
        }
        for (k, (a, b)) in adj.iter().enumerate() {
            g.add_edge(format!("n{a}"), format!("l{k}"), format!("n{b}"));
        }
        for start in 0..6 {
            let expected: BTreeSet<String> = bfs_oracle(&adj, 6, start).into_iter().map(|i| format!("n{i}")).collect();
            assert_eq!(reachable(&g, &format!("n{start}")).unwrap(), expected);
        }
    }

    #[test]
    fn fingerprint_tracks_structure() {
        let a = chain(&["a", "b"]);
        let mut b = chain(&["a", "b"]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.add_edge("b", "again", "a");
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut c = chain(&["a", "b"]);
        c.start = Some("b".into());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn dot_output_mentions_edges_and_clusters() {
        let mut g = chain(&["a", "b"]);
        g.nested.insert("b".into(), chain(&["x"]));
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph \"g\" {"));
        assert!(dot.contains("\"a\" -> \"b\" [label=\"default\"];"));
        assert!(dot.contains("subgraph \"cluster_b\""));
        assert!(dot.contains("\"b/x\""));
    }
}
