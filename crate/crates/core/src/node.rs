//! The node contract.
//!
//! A node runs in three phases. `prep` reads what it needs from the store,
//! `exec` computes on the prepared input alone (it never sees the store, so it
//! is safe to retry), and `post` writes results back and picks the outgoing
//! action. Nothing else about a node is visible to the engine.

use std::borrow::Borrow;
use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;

use crate::store::SharedStore;
use crate::value::Value;

/// Errors raised by node callbacks.
pub type NodeError = Box<dyn std::error::Error + Send + Sync + 'static>;

/// The label returned by `post` and used to pick the next node.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(String);

impl Action {
    pub const DEFAULT: &'static str = "default";

    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_default(&self) -> bool {
        self.0 == Self::DEFAULT
    }
}

impl Default for Action {
    fn default() -> Self {
        Self(Self::DEFAULT.to_owned())
    }
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Action {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for Action {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl Borrow<str> for Action {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl PartialEq<str> for Action {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for Action {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// A blocking node.
pub trait Node: Send + Sync {
    fn prep(&self, _store: &SharedStore) -> Result<Value, NodeError> {
        Ok(Value::Null)
    }

    fn exec(&self, _prep_res: &Value) -> Result<Value, NodeError> {
        Ok(Value::Null)
    }

    /// Called once every exec attempt has failed. `None` means the node has
    /// no fallback and the failure propagates.
    fn exec_fallback(&self, _prep_res: &Value, _error: &NodeError) -> Option<Result<Value, NodeError>> {
        None
    }

    fn post(&self, _store: &mut SharedStore, _prep_res: Value, _exec_res: Value) -> Result<Action, NodeError> {
        Ok(Action::default())
    }
}

/// A node whose phases may suspend (for example while waiting on a queue).
#[async_trait]
pub trait AsyncNode: Send + Sync {
    async fn prep(&self, _store: &SharedStore) -> Result<Value, NodeError> {
        Ok(Value::Null)
    }

    async fn exec(&self, _prep_res: &Value) -> Result<Value, NodeError> {
        Ok(Value::Null)
    }

    async fn exec_fallback(&self, _prep_res: &Value, _error: &NodeError) -> Option<Result<Value, NodeError>> {
        None
    }

    async fn post(&self, _store: &mut SharedStore, _prep_res: Value, _exec_res: Value) -> Result<Action, NodeError> {
        Ok(Action::default())
    }
}

/// A node whose `exec` is applied to each element of the list `prep` returns.
/// `post` receives the per-element results in input order.
pub trait BatchNode: Send + Sync {
    /// Must return [`Value::List`].
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError>;

    fn exec(&self, item: &Value) -> Result<Value, NodeError>;

    fn exec_fallback(&self, _item: &Value, _error: &NodeError) -> Option<Result<Value, NodeError>> {
        None
    }

    fn post(&self, _store: &mut SharedStore, _items: Vec<Value>, _results: Vec<Value>) -> Result<Action, NodeError> {
        Ok(Action::default())
    }
}

type PrepFn = dyn Fn(&SharedStore) -> Result<Value, NodeError> + Send + Sync;
type ExecFn = dyn Fn(&Value) -> Result<Value, NodeError> + Send + Sync;
type FallbackFn = dyn Fn(&Value, &NodeError) -> Result<Value, NodeError> + Send + Sync;
type PostFn = dyn Fn(&mut SharedStore, Value, Value) -> Result<Action, NodeError> + Send + Sync;

/// A node assembled from closures. Unset phases use the trait defaults.
///
/// ```
/// use nodeflow::{FnNode, SharedStore, Value};
///
/// let double = FnNode::new()
///     .prep(|s| Ok(s.get("x").cloned().unwrap_or_default()))
///     .exec(|v| Ok(Value::Int(v.as_i64().unwrap_or(0) * 2)))
///     .post(|s, _, out| {
///         s.set("x", out)?;
///         Ok("default".into())
///     });
/// # let _ = double;
/// ```
#[derive(Clone, Default)]
pub struct FnNode {
    prep: Option<Arc<PrepFn>>,
    exec: Option<Arc<ExecFn>>,
    fallback: Option<Arc<FallbackFn>>,
    post: Option<Arc<PostFn>>,
}

impl FnNode {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn prep<F>(mut self, f: F) -> Self
    where
        F: Fn(&SharedStore) -> Result<Value, NodeError> + Send + Sync + 'static,
    {
        self.prep = Some(Arc::new(f));
        self
    }

    pub fn exec<F>(mut self, f: F) -> Self
    where
        F: Fn(&Value) -> Result<Value, NodeError> + Send + Sync + 'static,
    {
        self.exec = Some(Arc::new(f));
        self
    }

    pub fn fallback<F>(mut self, f: F) -> Self
    where
        F: Fn(&Value, &NodeError) -> Result<Value, NodeError> + Send + Sync + 'static,
    {
        self.fallback = Some(Arc::new(f));
        self
    }

    pub fn post<F>(mut self, f: F) -> Self
    where
        F: Fn(&mut SharedStore, Value, Value) -> Result<Action, NodeError> + Send + Sync + 'static,
    {
        self.post = Some(Arc::new(f));
        self
    }
}

impl Node for FnNode {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        match &self.prep {
            Some(f) => f(store),
            None => Ok(Value::Null),
        }
    }

    fn exec(&self, prep_res: &Value) -> Result<Value, NodeError> {
        match &self.exec {
            Some(f) => f(prep_res),
            None => Ok(Value::Null),
        }
    }

    fn exec_fallback(&self, prep_res: &Value, error: &NodeError) -> Option<Result<Value, NodeError>> {
        self.fallback.as_ref().map(|f| f(prep_res, error))
    }

    fn post(&self, store: &mut SharedStore, prep_res: Value, exec_res: Value) -> Result<Action, NodeError> {
        match &self.post {
            Some(f) => f(store, prep_res, exec_res),
            None => Ok(Action::default()),
        }
    }
}

impl fmt::Debug for FnNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnNode")
            .field("prep", &self.prep.is_some())
            .field("exec", &self.exec.is_some())
            .field("fallback", &self.fallback.is_some())
            .field("post", &self.post.is_some())
            .finish()
    }
}
