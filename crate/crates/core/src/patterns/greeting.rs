//! The two-node greeting flow: greet, then ask for a mood.

use crate::flow::Flow;
use crate::graph::Graph;
use crate::node::{Action, Node, NodeError};
use crate::store::SharedStore;
use crate::value::Value;

/// Reads `name` (defaulting to `"World"`) and writes `greeting`.
#[derive(Debug, Default, Clone, Copy)]
pub struct GreetNode;

impl Node for GreetNode {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        match store.get("name") {
            None => Ok("World".into()),
            Some(Value::Text(name)) => Ok(name.as_str().into()),
            Some(other) => Err(format!("`name` must be text, found {}", other.kind()).into()),
        }
    }

    fn exec(&self, name: &Value) -> Result<Value, NodeError> {
        Ok(format!("Hello, {}!", name.as_str().unwrap_or_default()).into())
    }

    fn post(&self, store: &mut SharedStore, _: Value, greeting: Value) -> Result<Action, NodeError> {
        store.set("greeting", greeting)?;
        Ok(Action::default())
    }
}

/// Records a fixed mood under `mood`.
#[derive(Debug, Clone)]
pub struct AskMoodNode {
    mood: String,
}

impl AskMoodNode {
    pub fn new(mood: impl Into<String>) -> Self {
        Self { mood: mood.into() }
    }
}

impl Default for AskMoodNode {
    fn default() -> Self {
        Self::new("Happy")
    }
}

impl Node for AskMoodNode {
    fn exec(&self, _: &Value) -> Result<Value, NodeError> {
        Ok(self.mood.as_str().into())
    }

    fn post(&self, store: &mut SharedStore, _: Value, mood: Value) -> Result<Action, NodeError> {
        store.set("mood", mood)?;
        Ok(Action::default())
    }
}

/// `greet >> ask_mood`, starting at `greet`.
pub fn build_greeting_flow() -> Flow {
    let mut graph = Graph::new("greeting");
    let greet = graph.add("greet", GreetNode).expect("fresh graph");
    let ask_mood = graph.add("ask_mood", AskMoodNode::default()).expect("fresh graph");
    graph.connect_default(greet, ask_mood).expect("unbound label");
    Flow::new(graph, greet).expect("start belongs to graph")
}
