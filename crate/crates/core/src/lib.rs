//! Minimal workflow orchestration.
//!
//! Work is split into [`Node`]s with a three-phase lifecycle (prep, exec,
//! post). Nodes are wired into a [`Graph`] by action labels, and a [`Flow`]
//! runs the graph from a start node until an action has no successor. A flow
//! can sit anywhere a node can, which gives hierarchical composition for
//! free. Around that core sit retry and fallback for exec, batch and parallel
//! batch variants, non-blocking nodes, per-step checkpoints with resume, and
//! static analysis of the wired graph.
//!
//! ```
//! use nodeflow::{FnNode, Flow, Graph, SharedStore, Value};
//!
//! let greet = FnNode::new()
//!     .prep(|s| Ok(s.get("name").cloned().unwrap_or_else(|| "World".into())))
//!     .exec(|name| Ok(format!("Hello, {}!", name.as_str().unwrap_or("World")).into()))
//!     .post(|s, _, greeting| {
//!         s.set("greeting", greeting)?;
//!         Ok("default".into())
//!     });
//!
//! let mut graph = Graph::new("greeting");
//! let start = graph.add("greet", greet).unwrap();
//! let flow = Flow::new(graph, start).unwrap();
//!
//! let outcome = flow.run(SharedStore::from([("name", Value::from("Alice"))])).unwrap();
//! assert_eq!(outcome.store.get_str("greeting"), Some("Hello, Alice!"));
//! ```
//!
//! Runnable walkthroughs of each capability live in the crate's `examples/`
//! directory.

pub mod batch;
pub mod bench;
pub mod cli;
pub mod durability;
pub mod flow;
pub mod graph;
pub mod ndg;
pub mod node;
pub mod patterns;
pub mod retry;
pub mod store;
pub mod tm;
pub mod value;

pub use batch::{run_batch_node, run_parallel_batch_node, BatchFlow, BatchFlowLogic, ParamSet};
pub use durability::{Checkpoint, CheckpointSink, FileSink, MemorySink, SinkError};
pub use flow::{execute_node, Flow, FlowError, FlowOutcome, RunError, RunLimits, Runner, TraceEntry};
pub use graph::{BatchMode, Graph, GraphError, NodeRef, Step};
pub use ndg::{extract_ndg, Diagnostic, Ndg};
pub use node::{Action, AsyncNode, BatchNode, FnNode, Node, NodeError};
pub use retry::{exec_with_retry, RecordingWait, RetryPolicy, ThreadSleep, WaitProvider};
pub use store::{CanonicalError, SharedStore, StoreError};
pub use value::{Handle, Queue, Value};
