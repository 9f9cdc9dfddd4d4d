//! Flows and the execution loop.
//!
//! A [`Flow`] is a graph plus a start node. Running it executes the start
//! node, looks up the successor for the returned action, and repeats until an
//! action has no successor. That last action is the flow's terminal action,
//! which is also what a nested flow reports to its parent.
//!
//! There is one engine. [`Runner::run`] drives it to completion on the
//! calling thread; [`Runner::run_nonblocking`] hands back the future so that
//! several flows can be interleaved on one executor.

use std::fmt;
use std::sync::Arc;

use futures::future::BoxFuture;
use thiserror::Error;

use crate::batch::{self, BatchFlow};
use crate::durability::{Checkpoint, CheckpointSink, SinkError};
use crate::graph::{Graph, GraphError, NodeRef, Step};
use crate::node::{Action, AsyncNode, Node, NodeError};
use crate::retry::{self, ExecFailure, RetryPolicy, ThreadSleep, WaitProvider};
use crate::store::{CanonicalError, SharedStore};

/// A graph with a designated start node. Cheap to clone; the graph is shared.
#[derive(Clone)]
pub struct Flow {
    graph: Arc<Graph>,
    start: NodeRef,
}

impl Flow {
    /// Stores the start reference. Constant time regardless of graph size.
    pub fn new(graph: impl Into<Arc<Graph>>, start: NodeRef) -> Result<Self, GraphError> {
        let graph = graph.into();
        if start.0 >= graph.len() {
            return Err(GraphError::UnknownRef(start.0));
        }
        Ok(Self { graph, start })
    }

    pub fn id(&self) -> &str {
        self.graph.id()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn start(&self) -> NodeRef {
        self.start
    }

    /// Runs with the default [`Runner`].
    pub fn run(&self, store: SharedStore) -> Result<FlowOutcome, RunError> {
        Runner::new().run(self, store)
    }
}

impl fmt::Debug for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Flow")
            .field("id", &self.id())
            .field("start", &self.graph.node_id(self.start))
            .finish()
    }
}

/// Bound on node executions in one run, nested executions included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLimits {
    max_steps: usize,
}

impl RunLimits {
    pub const DEFAULT_MAX_STEPS: usize = 10_000;

    /// # Panics
    /// If `max_steps` is zero.
    pub fn new(max_steps: usize) -> Self {
        assert!(max_steps > 0, "max_steps must be positive");
        Self { max_steps }
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }
}

impl Default for RunLimits {
    fn default() -> Self {
        Self::new(Self::DEFAULT_MAX_STEPS)
    }
}

/// One executed node: its step index, hierarchical id and returned action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: usize,
    pub node: String,
    pub action: Action,
}

/// Renders a trace as `step<TAB>node<TAB>action` lines.
pub fn trace_to_tsv(trace: &[TraceEntry]) -> String {
    let mut out = String::new();
    for e in trace {
        out.push_str(&format!("{}\t{}\t{}\n", e.step, e.node, e.action));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub store: SharedStore,
    pub terminal_action: Action,
    pub trace: Vec<TraceEntry>,
}

impl FlowOutcome {
    pub fn trace_tsv(&self) -> String {
        trace_to_tsv(&self.trace)
    }

    pub fn visited(&self, node: &str) -> bool {
        self.trace.iter().any(|e| e.node == node)
    }
}

fn at_index(index: &Option<usize>) -> String {
    index.map(|i| format!(" (element {i})")).unwrap_or_default()
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("prep failed in `{node}`: {source}")]
    Prep { node: String, source: NodeError },
    #[error("exec failed in `{node}`{} after {attempts} attempt(s): {source}", at_index(.index))]
    ExecExhausted {
        node: String,
        index: Option<usize>,
        attempts: u32,
        source: NodeError,
    },
    #[error("exec fallback failed in `{node}`{}: {source}", at_index(.index))]
    FallbackFailed {
        node: String,
        index: Option<usize>,
        source: NodeError,
    },
    #[error("post failed in `{node}`: {source}")]
    Post { node: String, source: NodeError },
    #[error("`{node}` returned an empty action")]
    EmptyAction { node: String },
    #[error("batch node `{node}` prep returned {found}, expected a list")]
    PrepNotAList { node: String, found: &'static str },
    #[error("step limit of {max_steps} exceeded")]
    StepLimitExceeded { max_steps: usize },
    #[error("batch flow `{node}` failed in iteration {iteration}: {source}")]
    BatchIteration {
        node: String,
        iteration: usize,
        source: Box<FlowError>,
    },
    #[error("cannot checkpoint after `{node}`: {source}")]
    Unserializable { node: String, source: CanonicalError },
    #[error("checkpoint sink failed after `{node}`: {source}")]
    Sink { node: String, source: SinkError },
    #[error("checkpoint belongs to graph {expected}, this flow is {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("checkpointed node `{0}` does not exist in this flow")]
    UnknownCheckpointNode(String),
    #[error("checkpoint store is unreadable: {0}")]
    Restore(CanonicalError),
}

impl FlowError {
    /// The underlying error, looking through batch-flow iteration wrappers.
    pub fn root(&self) -> &FlowError {
        match self {
            FlowError::BatchIteration { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn from_exec(node: &str, index: Option<usize>, failure: ExecFailure) -> Self {
        match failure {
            ExecFailure::Exhausted { attempts, source } => FlowError::ExecExhausted {
                node: node.to_owned(),
                index,
                attempts,
                source,
            },
            ExecFailure::FallbackFailed { source } => FlowError::FallbackFailed {
                node: node.to_owned(),
                index,
                source,
            },
        }
    }
}

/// A failed run: the error, the trace up to the failure and the store as it
/// was left.
#[derive(Debug)]
pub struct RunError {
    pub error: FlowError,
    pub trace: Vec<TraceEntry>,
    pub store: SharedStore,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} step(s))", self.error, self.trace.len())
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Execution settings: step budget, retry wait source and run id.
#[derive(Clone)]
pub struct Runner {
    pub(crate) limits: RunLimits,
    pub(crate) waiter: Arc<dyn WaitProvider>,
    pub(crate) run_id: Option<String>,
}

impl Default for Runner {
    fn default() -> Self {
        Self {
            limits: RunLimits::default(),
            waiter: Arc::new(ThreadSleep),
            run_id: None,
        }
    }
}

impl fmt::Debug for Runner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Runner")
            .field("limits", &self.limits)
            .field("run_id", &self.run_id)
            .finish()
    }
}

impl Runner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn limits(mut self, limits: RunLimits) -> Self {
        self.limits = limits;
        self
    }

    /// # Panics
    /// If `max_steps` is zero.
    pub fn max_steps(self, max_steps: usize) -> Self {
        self.limits(RunLimits::new(max_steps))
    }

    pub fn waiter(mut self, waiter: Arc<dyn WaitProvider>) -> Self {
        self.waiter = waiter;
        self
    }

    /// Id recorded in emitted checkpoints. Generated when unset.
    pub fn run_id(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = Some(run_id.into());
        self
    }

    pub fn run(&self, flow: &Flow, store: SharedStore) -> Result<FlowOutcome, RunError> {
        futures::executor::block_on(self.run_nonblocking(flow, store))
    }

    /// Same semantics as [`Runner::run`]; non-blocking nodes suspend instead of
    /// blocking the executor.
    pub async fn run_nonblocking(&self, flow: &Flow, store: SharedStore) -> Result<FlowOutcome, RunError> {
        let engine = Engine::new(self, None);
        engine.start(flow, store).await
    }
}

pub(crate) struct Checkpointer<'s> {
    pub(crate) sink: &'s mut dyn CheckpointSink,
    pub(crate) run_id: String,
    pub(crate) fingerprint: String,
    pub(crate) next_step: u64,
}

/// Per-run mutable state.
pub(crate) struct Engine<'r, 's> {
    limits: RunLimits,
    waiter: &'r dyn WaitProvider,
    steps: usize,
    trace: Vec<TraceEntry>,
    checkpoints: Option<Checkpointer<'s>>,
    // >0 while inside a batch flow iteration, where checkpoints are not emitted
    suppress_checkpoints: usize,
}

impl<'r, 's> Engine<'r, 's> {
    pub(crate) fn new(runner: &'r Runner, checkpoints: Option<Checkpointer<'s>>) -> Self {
        Self {
            limits: runner.limits,
            waiter: runner.waiter.as_ref(),
            steps: 0,
            trace: Vec::new(),
            checkpoints,
            suppress_checkpoints: 0,
        }
    }

    pub(crate) async fn start(mut self, flow: &Flow, mut store: SharedStore) -> Result<FlowOutcome, RunError> {
        let result = self.run_graph(flow, flow.start(), &mut store, String::new()).await;
        self.finish(result, store)
    }

    /// Continues a run after the node at `path` returned `action`.
    pub(crate) async fn resume(
        mut self,
        flow: &Flow,
        path: &[String],
        action: Action,
        mut store: SharedStore,
    ) -> Result<FlowOutcome, RunError> {
        let result = self.resume_graph(flow, path, action, &mut store, String::new()).await;
        self.finish(result, store)
    }

    fn finish(self, result: Result<Action, FlowError>, store: SharedStore) -> Result<FlowOutcome, RunError> {
        match result {
            Ok(terminal_action) => Ok(FlowOutcome {
                store,
                terminal_action,
                trace: self.trace,
            }),
            Err(error) => Err(RunError {
                error,
                trace: self.trace,
                store,
            }),
        }
    }

    fn run_graph<'a>(
        &'a mut self,
        flow: &'a Flow,
        start: NodeRef,
        store: &'a mut SharedStore,
        prefix: String,
    ) -> BoxFuture<'a, Result<Action, FlowError>> {
        Box::pin(async move {
            let mut current = start;
            loop {
                let action = self.run_step(flow.graph(), current, store, &prefix).await?;
                match flow.graph().next_node(current, action.as_str()) {
                    Some(next) => current = next,
                    None => return Ok(action),
                }
            }
        })
    }

    fn resume_graph<'a>(
        &'a mut self,
        flow: &'a Flow,
        path: &'a [String],
        action: Action,
        store: &'a mut SharedStore,
        prefix: String,
    ) -> BoxFuture<'a, Result<Action, FlowError>> {
        Box::pin(async move {
            let unknown = || FlowError::UnknownCheckpointNode(format!("{prefix}{}", path.join("/")));
            let (head, rest) = path.split_first().ok_or_else(unknown)?;
            let node = flow.graph().lookup(head).ok_or_else(unknown)?;
            let action = if rest.is_empty() {
                action
            } else {
                match flow.graph().step(node) {
                    Some(Step::Flow(sub)) => {
                        self.resume_graph(sub, rest, action, store, format!("{prefix}{head}/"))
                            .await?
                    }
                    _ => return Err(unknown()),
                }
            };
            match flow.graph().next_node(node, action.as_str()) {
                Some(next) => self.run_graph(flow, next, store, prefix).await,
                None => Ok(action),
            }
        })
    }

    async fn run_step(
        &mut self,
        graph: &Graph,
        node: NodeRef,
        store: &mut SharedStore,
        prefix: &str,
    ) -> Result<Action, FlowError> {
        let slot = graph.slot(node);
        let path = format!("{prefix}{}", slot.id);
        match &slot.step {
            Step::Flow(sub) => self.run_graph(sub, sub.start(), store, format!("{path}/")).await,
            Step::BatchFlow(bflow) => self.run_batch_flow(bflow, store, path).await,
            Step::Node(n) => {
                self.charge_step()?;
                let action = run_node(n.as_ref(), &slot.retry, store, self.waiter, &path)?;
                self.complete(path, action, store)
            }
            Step::Async(n) => {
                self.charge_step()?;
                let action = run_async_node(n.as_ref(), &slot.retry, store, self.waiter, &path).await?;
                self.complete(path, action, store)
            }
            Step::Batch(n, mode) => {
                self.charge_step()?;
                let action = batch::run_batch_step(n.as_ref(), *mode, &slot.retry, store, self.waiter, &path)?;
                self.complete(path, action, store)
            }
        }
    }

    async fn run_batch_flow(&mut self, bflow: &BatchFlow, store: &mut SharedStore, path: String) -> Result<Action, FlowError> {
        let params = bflow
            .logic()
            .params(store)
            .map_err(|source| FlowError::Prep { node: path.clone(), source })?;
        let inner = bflow.inner();
        let mut actions = Vec::with_capacity(params.len());
        self.suppress_checkpoints += 1;
        for (iteration, param_set) in params.into_iter().enumerate() {
            let saved = param_set.apply(store);
            let result = self
                .run_graph(inner, inner.start(), store, format!("{path}[{iteration}]/"))
                .await;
            param_set.restore(store, saved);
            match result {
                Ok(action) => actions.push(action),
                Err(source) => {
                    self.suppress_checkpoints -= 1;
                    return Err(FlowError::BatchIteration {
                        node: path,
                        iteration,
                        source: Box::new(source),
                    });
                }
            }
        }
        self.suppress_checkpoints -= 1;
        let action = bflow
            .logic()
            .collect(store, actions)
            .map_err(|source| FlowError::Post { node: path.clone(), source })?;
        if action.as_str().is_empty() {
            return Err(FlowError::EmptyAction { node: path });
        }
        self.checkpoint(&path, &action, store)?;
        Ok(action)
    }

    fn charge_step(&mut self) -> Result<(), FlowError> {
        if self.steps >= self.limits.max_steps() {
            return Err(FlowError::StepLimitExceeded {
                max_steps: self.limits.max_steps(),
            });
        }
        self.steps += 1;
        Ok(())
    }

    fn complete(&mut self, path: String, action: Action, store: &SharedStore) -> Result<Action, FlowError> {
        if action.as_str().is_empty() {
            return Err(FlowError::EmptyAction { node: path });
        }
        self.trace.push(TraceEntry {
            step: self.trace.len(),
            node: path.clone(),
            action: action.clone(),
        });
        self.checkpoint(&path, &action, store)?;
        Ok(action)
    }

    fn checkpoint(&mut self, path: &str, action: &Action, store: &SharedStore) -> Result<(), FlowError> {
        if self.suppress_checkpoints > 0 {
            return Ok(());
        }
        let Some(cp) = self.checkpoints.as_mut() else {
            return Ok(());
        };
        let store_bytes = store.to_canonical_bytes().map_err(|source| FlowError::Unserializable {
            node: path.to_owned(),
            source,
        })?;
        let checkpoint = Checkpoint {
            run_id: cp.run_id.clone(),
            step_index: cp.next_step,
            completed_node_id: path.to_owned(),
            returned_action: action.clone(),
            store_bytes,
            flow_fingerprint: cp.fingerprint.clone(),
        };
        cp.sink.write(&checkpoint).map_err(|source| FlowError::Sink {
            node: path.to_owned(),
            source,
        })?;
        cp.next_step += 1;
        Ok(())
    }
}

fn run_node(
    node: &dyn Node,
    policy: &RetryPolicy,
    store: &mut SharedStore,
    waiter: &dyn WaitProvider,
    path: &str,
) -> Result<Action, FlowError> {
    let prep_res = node.prep(store).map_err(|source| FlowError::Prep {
        node: path.to_owned(),
        source,
    })?;
    let exec_res = retry::exec_with_retry(node, policy, &prep_res, waiter)
        .map_err(|failure| FlowError::from_exec(path, None, failure))?;
    node.post(store, prep_res, exec_res).map_err(|source| FlowError::Post {
        node: path.to_owned(),
        source,
    })
}

async fn run_async_node(
    node: &dyn AsyncNode,
    policy: &RetryPolicy,
    store: &mut SharedStore,
    waiter: &dyn WaitProvider,
    path: &str,
) -> Result<Action, FlowError> {
    let prep_res = node.prep(store).await.map_err(|source| FlowError::Prep {
        node: path.to_owned(),
        source,
    })?;
    let exec_res = retry::exec_with_retry_async(node, policy, &prep_res, waiter)
        .await
        .map_err(|failure| FlowError::from_exec(path, None, failure))?;
    node.post(store, prep_res, exec_res).await.map_err(|source| FlowError::Post {
        node: path.to_owned(),
        source,
    })
}

/// Runs a single node outside any flow and returns its action.
pub fn execute_node(node: &dyn Node, policy: &RetryPolicy, store: &mut SharedStore, waiter: &dyn WaitProvider) -> Result<Action, FlowError> {
    let action = run_node(node, policy, store, waiter, "node")?;
    if action.as_str().is_empty() {
        return Err(FlowError::EmptyAction { node: "node".into() });
    }
    Ok(action)
}
