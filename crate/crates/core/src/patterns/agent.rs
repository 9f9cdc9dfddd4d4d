//! A decide/tool loop driven by a scripted decision list.
//!
//! Store keys:
//!
//! | key            | role                                                  |
//! |----------------|-------------------------------------------------------|
//! | `task`         | text the agent works on                               |
//! | `script`       | list of decisions, each `"tool"` or `"answer"`        |
//! | `script_pos`   | next script position (absent means 0)                 |
//! | `observations` | list the tool node appends to                         |
//! | `answer`       | written when the agent answers                        |
//!
//! `decide` returns `"tool"` or `"answer"`. Only `"tool"` is wired, to the
//! tool node, which loops back to `decide`. Once `max_tool_calls`
//! observations exist, `decide` answers without consulting the script.

use super::{require_list, require_str, PatternError};
use crate::flow::Flow;
use crate::graph::Graph;
use crate::node::{Action, Node, NodeError};
use crate::store::SharedStore;
use crate::value::Value;

pub const TOOL: &str = "tool";
pub const ANSWER: &str = "answer";

fn observation_count(store: &SharedStore) -> usize {
    store.get("observations").and_then(Value::as_list).map_or(0, <[Value]>::len)
}

struct Decide {
    max_tool_calls: usize,
}

impl Node for Decide {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        let task = require_str(store, "task")?;
        let observations = observation_count(store);
        let pos = store.get_i64("script_pos").unwrap_or(0).max(0) as usize;
        let decision = if observations >= self.max_tool_calls {
            ANSWER.to_owned()
        } else {
            let script = require_list(store, "script")?;
            let entry = script.get(pos).ok_or(PatternError::ScriptExhausted)?;
            entry.as_str().unwrap_or_default().to_owned()
        };
        Ok(Value::map([
            ("decision", Value::from(decision)),
            ("task", Value::from(task)),
            ("observations", Value::Int(observations as i64)),
        ]))
    }

    fn exec(&self, input: &Value) -> Result<Value, NodeError> {
        let decision = input.get("decision").and_then(Value::as_str).unwrap_or_default();
        match decision {
            TOOL => Ok(Value::Null),
            ANSWER => {
                let task = input.get("task").and_then(Value::as_str).unwrap_or_default();
                let n = input.get("observations").and_then(Value::as_i64).unwrap_or(0);
                Ok(format!("ANSWER[{task}|{n} observation(s)]").into())
            }
            other => Err(PatternError::UnknownDecision(other.to_owned()).into()),
        }
    }

    fn post(&self, store: &mut SharedStore, _: Value, answer: Value) -> Result<Action, NodeError> {
        let pos = store.get_i64("script_pos").unwrap_or(0);
        store.set("script_pos", pos + 1)?;
        if answer.is_null() {
            Ok(TOOL.into())
        } else {
            store.set("answer", answer)?;
            Ok(ANSWER.into())
        }
    }
}

struct Tool;

impl Node for Tool {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        Ok(Value::map([
            ("task", Value::from(require_str(store, "task")?)),
            ("n", Value::Int(observation_count(store) as i64)),
        ]))
    }

    fn exec(&self, input: &Value) -> Result<Value, NodeError> {
        let task = input.get("task").and_then(Value::as_str).unwrap_or_default();
        let n = input.get("n").and_then(Value::as_i64).unwrap_or(0);
        Ok(format!("observation {} for {task}", n + 1).into())
    }

    fn post(&self, store: &mut SharedStore, _: Value, observation: Value) -> Result<Action, NodeError> {
        store.push("observations", observation)?;
        Ok(Action::default())
    }
}

/// `decide -"tool">> tool`, `tool >> decide`, starting at `decide`.
pub fn build_agent_loop(max_tool_calls: usize) -> Flow {
    let mut graph = Graph::new("agent");
    let decide = graph.add("decide", Decide { max_tool_calls }).expect("fresh graph");
    let tool = graph.add("tool", Tool).expect("fresh graph");
    graph.connect_on(decide, TOOL, tool).expect("fresh wiring");
    graph.connect_default(tool, decide).expect("fresh wiring");
    Flow::new(graph, decide).expect("start belongs to graph")
}

/// Initial store for a scripted run.
pub fn agent_store(task: &str, script: &[&str]) -> SharedStore {
    SharedStore::from([
        ("task", Value::from(task)),
        ("script", Value::List(script.iter().map(|s| Value::from(*s)).collect())),
    ])
}
