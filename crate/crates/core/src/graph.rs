//! Declarative wiring of nodes into an action-labeled graph.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::batch::BatchFlow;
use crate::flow::Flow;
use crate::node::{Action, AsyncNode, BatchNode, Node};
use crate::retry::RetryPolicy;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node `{node}` already has a successor for action `{label}`")]
    DuplicateBinding { node: String, label: String },
    #[error("action labels must be non-empty")]
    EmptyLabel,
    #[error("node id `{0}` is already used in this graph")]
    DuplicateId(String),
    #[error("invalid node id `{0}` (ids are non-empty and contain no `/`)")]
    InvalidId(String),
    #[error("node reference {0} does not belong to this graph")]
    UnknownRef(usize),
}

/// Index of a node inside the [`Graph`] that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef(pub(crate) usize);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a batch node spreads its per-element execs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Sequential,
    /// Up to `max_concurrency` elements at once; `None` means one worker per element.
    Parallel { max_concurrency: Option<usize> },
}

/// Anything that can occupy a position in a graph.
#[derive(Clone)]
pub enum Step {
    Node(Arc<dyn Node>),
    Async(Arc<dyn AsyncNode>),
    Batch(Arc<dyn BatchNode>, BatchMode),
    Flow(Flow),
    BatchFlow(BatchFlow),
}

impl Step {
    pub fn shared(node: Arc<dyn Node>) -> Self {
        Step::Node(node)
    }

    pub fn non_blocking(node: impl AsyncNode + 'static) -> Self {
        Step::Async(Arc::new(node))
    }

    pub fn batch(node: impl BatchNode + 'static) -> Self {
        Step::Batch(Arc::new(node), BatchMode::Sequential)
    }

    pub fn parallel_batch(node: impl BatchNode + 'static, max_concurrency: Option<usize>) -> Self {
        Step::Batch(Arc::new(node), BatchMode::Parallel { max_concurrency })
    }

    /// True for positions that contain a nested graph.
    pub fn is_hierarchical(&self) -> bool {
        matches!(self, Step::Flow(_) | Step::BatchFlow(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Step::Node(_) => "node",
            Step::Async(_) => "async",
            Step::Batch(_, BatchMode::Sequential) => "batch",
            Step::Batch(_, BatchMode::Parallel { .. }) => "parallel_batch",
            Step::Flow(_) => "flow",
            Step::BatchFlow(_) => "batch_flow",
        }
    }
}

impl<N: Node + 'static> From<N> for Step {
    fn from(node: N) -> Self {
        Step::Node(Arc::new(node))
    }
}

impl From<Flow> for Step {
    fn from(flow: Flow) -> Self {
        Step::Flow(flow)
    }
}

impl From<BatchFlow> for Step {
    fn from(flow: BatchFlow) -> Self {
        Step::BatchFlow(flow)
    }
}

impl fmt::Debug for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Flow(flow) => write!(f, "Flow({})", flow.id()),
            Step::BatchFlow(flow) => write!(f, "BatchFlow({})", flow.id()),
            other => f.write_str(other.kind()),
        }
    }
}

pub(crate) struct Slot {
    pub(crate) id: String,
    pub(crate) step: Step,
    pub(crate) retry: RetryPolicy,
    pub(crate) successors: HashMap<Action, NodeRef>,
}

/// An arena of nodes and the action-labeled edges between them.
///
/// Cycles are allowed. Nesting is acyclic by construction: a flow can only
/// embed flows that were already built.
pub struct Graph {
    id: String,
    slots: Vec<Slot>,
    index: HashMap<String, NodeRef>,
}

impl Graph {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            slots: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn add(&mut self, id: impl Into<String>, step: impl Into<Step>) -> Result<NodeRef, GraphError> {
        let id = id.into();
        if id.is_empty() || id.contains('/') {
            return Err(GraphError::InvalidId(id));
        }
        if self.index.contains_key(&id) {
            return Err(GraphError::DuplicateId(id));
        }
        let r = NodeRef(self.slots.len());
        self.index.insert(id.clone(), r);
        self.slots.push(Slot {
            id,
            step: step.into(),
            retry: RetryPolicy::default(),
            successors: HashMap::new(),
        });
        Ok(r)
    }

    /// Adds a node under a generated id of the form `<graph id>#<ordinal>`.
    pub fn add_anon(&mut self, step: impl Into<Step>) -> NodeRef {
        let step = step.into();
        let mut ordinal = self.slots.len();
        loop {
            let id = format!("{}#{ordinal}", self.id.replace('/', "_"));
            if !self.index.contains_key(&id) {
                return self.add(id, step).expect("generated id is unique and valid");
            }
            ordinal += 1;
        }
    }

    pub fn set_retry(&mut self, node: NodeRef, policy: RetryPolicy) -> Result<(), GraphError> {
        self.slot_mut(node)?.retry = policy;
        Ok(())
    }

    /// `from >> to`: binds the `"default"` action.
    pub fn connect_default(&mut self, from: NodeRef, to: NodeRef) -> Result<(), GraphError> {
        self.connect_on(from, Action::DEFAULT, to)
    }

    /// `from - action >> to`. Each label can be bound once per node.
    pub fn connect_on(&mut self, from: NodeRef, action: impl Into<Action>, to: NodeRef) -> Result<(), GraphError> {
        let action = action.into();
        if action.as_str().is_empty() {
            return Err(GraphError::EmptyLabel);
        }
        self.check(to)?;
        let slot = self.slot_mut(from)?;
        if slot.successors.contains_key(&action) {
            return Err(GraphError::DuplicateBinding {
                node: slot.id.clone(),
                label: action.as_str().to_owned(),
            });
        }
        slot.successors.insert(action, to);
        Ok(())
    }

    /// Wires `nodes` into a default-action chain.
    pub fn chain(&mut self, nodes: &[NodeRef]) -> Result<(), GraphError> {
        for pair in nodes.windows(2) {
            self.connect_default(pair[0], pair[1])?;
        }
        Ok(())
    }

    /// Exact label first, then `"default"`, else `None` (terminal).
    pub fn next_node(&self, current: NodeRef, action: &str) -> Option<NodeRef> {
        let successors = &self.slots.get(current.0)?.successors;
        successors
            .get(action)
            .or_else(|| successors.get(Action::DEFAULT))
            .copied()
    }

    pub fn lookup(&self, id: &str) -> Option<NodeRef> {
        self.index.get(id).copied()
    }

    pub fn node_id(&self, node: NodeRef) -> Option<&str> {
        self.slots.get(node.0).map(|s| s.id.as_str())
    }

    pub fn step(&self, node: NodeRef) -> Option<&Step> {
        self.slots.get(node.0).map(|s| &s.step)
    }

    pub fn retry(&self, node: NodeRef) -> Option<RetryPolicy> {
        self.slots.get(node.0).map(|s| s.retry)
    }

    /// The successor bindings of `node`, sorted by label.
    pub fn successors(&self, node: NodeRef) -> Vec<(&Action, NodeRef)> {
        let mut out: Vec<_> = self
            .slots
            .get(node.0)
            .map(|s| s.successors.iter().map(|(a, r)| (a, *r)).collect())
            .unwrap_or_default();
        out.sort();
        out
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeRef, &str, &Step)> {
        self.slots
            .iter()
            .enumerate()
            .map(|(i, s)| (NodeRef(i), s.id.as_str(), &s.step))
    }

    pub(crate) fn slot(&self, node: NodeRef) -> &Slot {
        &self.slots[node.0]
    }

    fn check(&self, node: NodeRef) -> Result<(), GraphError> {
        if node.0 < self.slots.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownRef(node.0))
        }
    }

    fn slot_mut(&mut self, node: NodeRef) -> Result<&mut Slot, GraphError> {
        self.slots.get_mut(node.0).ok_or(GraphError::UnknownRef(node.0))
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("id", &self.id)
            .field("nodes", &self.slots.iter().map(|s| &s.id).collect::<Vec<_>>())
            .finish()
    }
}
