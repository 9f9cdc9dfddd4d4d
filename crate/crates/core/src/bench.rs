//! Micro-benchmarks for the operations that should not depend on graph size:
//! successor lookup, flow construction and a single step transition.
//!
//! Each size is measured as the median over many samples, where a sample
//! times a batch of operations and divides by the batch length.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::flow::{Flow, Runner};
use crate::graph::{Graph, NodeRef};
use crate::node::{Action, FnNode};
use crate::store::SharedStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchKind {
    /// `next_node` on a node with `size` labeled successors.
    BranchLookup,
    /// `Flow::new` over a pre-wired graph of `size` nodes.
    FlowCreation,
    /// Running a flow whose start node has `size` successors, one step deep.
    StepTransition,
}

impl BenchKind {
    pub const ALL: [BenchKind; 3] = [BenchKind::BranchLookup, BenchKind::FlowCreation, BenchKind::StepTransition];

    pub fn name(self) -> &'static str {
        match self {
            BenchKind::BranchLookup => "branch_lookup",
            BenchKind::FlowCreation => "flow_creation",
            BenchKind::StepTransition => "step_transition",
        }
    }
}

impl fmt::Display for BenchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BenchError::UnknownKind(s.to_owned()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("unknown benchmark kind `{0}` (expected branch_lookup, flow_creation or step_transition)")]
    UnknownKind(String),
    #[error("sizes must be positive and strictly increasing")]
    BadSizes,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub samples: usize,
    pub batch: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            batch: 100,
            warmup: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub median_ns: f64,
}

/// Renders rows as `size<TAB>median_ns` lines.
pub fn rows_to_tsv(rows: &[BenchRow]) -> String {
    rows.iter().map(|r| format!("{}\t{:.1}\n", r.size, r.median_ns)).collect()
}

/// Largest median over smallest median.
pub fn spread(rows: &[BenchRow]) -> f64 {
    let max = rows.iter().map(|r| r.median_ns).fold(f64::MIN, f64::max);
    let min = rows.iter().map(|r| r.median_ns).fold(f64::MAX, f64::min);
    max / min.max(f64::MIN_POSITIVE)
}

/// Runs `trial` `repetitions` times and reports whether most runs passed.
pub fn majority<F: FnMut() -> bool>(repetitions: usize, mut trial: F) -> bool {
    let passed = (0..repetitions).filter(|_| trial()).count();
    passed * 2 > repetitions
}

pub fn bench_scaling(kind: BenchKind, sizes: &[usize]) -> Result<Vec<BenchRow>, BenchError> {
    bench_scaling_with(kind, sizes, BenchConfig::default())
}

pub fn bench_scaling_with(kind: BenchKind, sizes: &[usize], config: BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::BadSizes);
    }
    Ok(sizes
        .iter()
        .map(|&size| BenchRow {
            size,
            median_ns: match kind {
                BenchKind::BranchLookup => branch_lookup(size, config),
                BenchKind::FlowCreation => flow_creation(size, config),
                BenchKind::StepTransition => step_transition(size, config),
            },
        })
        .collect())
}

fn median_per_op<F: FnMut()>(config: BenchConfig, mut op: F) -> f64 {
    for _ in 0..config.warmup * config.batch {
        op();
    }
    let mut samples: Vec<f64> = (0..config.samples.max(1))
        .map(|_| {
            let t = Instant::now();
            for _ in 0..config.batch {
                op();
            }
            t.elapsed().as_nanos() as f64 / config.batch as f64
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

fn noop() -> FnNode {
    FnNode::new()
}

/// A node with `fanout` successors labeled `a0..`, each a distinct no-op.
fn fan_graph(fanout: usize, source: FnNode) -> (Graph, NodeRef) {
    let mut graph = Graph::new("bench");
    let hub = graph.add("hub", source).expect("fresh graph");
    for i in 0..fanout {
        let leaf = graph.add(format!("n{i}"), noop()).expect("distinct ids");
        graph.connect_on(hub, format!("a{i}"), leaf).expect("distinct labels");
    }
    (graph, hub)
}

fn labels(fanout: usize, count: usize) -> Vec<Action> {
    let mut rng = StdRng::seed_from_u64(fanout as u64);
    (0..count).map(|_| Action::new(format!("a{}", rng.gen_range(0..fanout)))).collect()
}

fn branch_lookup(fanout: usize, config: BenchConfig) -> f64 {
    let (graph, hub) = fan_graph(fanout, noop());
    let actions = labels(fanout, 1024);
    let mut i = 0;
    median_per_op(config, || {
        let action = &actions[i & 1023];
        i += 1;
        black_box(graph.next_node(black_box(hub), black_box(action.as_str())));
    })
}

fn flow_creation(nodes: usize, config: BenchConfig) -> f64 {
    let mut graph = Graph::new("bench");
    let refs: Vec<_> = (0..nodes)
        .map(|i| graph.add(format!("n{i}"), noop()).expect("distinct ids"))
        .collect();
    graph.chain(&refs).expect("fresh wiring");
    let graph = Arc::new(graph);
    let start = refs[0];
    median_per_op(config, || {
        black_box(Flow::new(black_box(Arc::clone(&graph)), start).expect("valid start"));
    })
}

fn step_transition(fanout: usize, config: BenchConfig) -> f64 {
    let chosen = Action::new(format!("a{}", fanout / 2));
    let source = FnNode::new().post(move |_, _, _| Ok(chosen.clone()));
    let (graph, hub) = fan_graph(fanout, source);
    let flow = Flow::new(graph, hub).expect("valid start");
    let runner = Runner::new();
    median_per_op(config, || {
        black_box(runner.run(&flow, SharedStore::new()).expect("no-op flow"));
    })
}
