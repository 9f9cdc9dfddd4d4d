//! Reference workflows assembled from the engine's primitives.
//!
//! Each pattern stands in deterministic code for what would normally be a
//! model or API call, so their outputs can be checked exactly.

use thiserror::Error;

use crate::store::SharedStore;
use crate::value::Value;

pub mod agent;
pub mod greeting;
pub mod order;
pub mod rag;
pub mod word_game;

pub use agent::build_agent_loop;
pub use greeting::{build_greeting_flow, AskMoodNode, GreetNode};
pub use order::build_order_pipeline;
pub use rag::{build_rag_offline, build_rag_offline_with, build_rag_online, build_rag_online_with, Embedder, MockEmbedder};
pub use word_game::{build_word_game, WordGame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("required store key `{0}` is missing")]
    MissingKey(String),
    #[error("store key `{key}` should hold {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("the decision script ran out before an answer")]
    ScriptExhausted,
    #[error("unknown decision `{0}` in script")]
    UnknownDecision(String),
}

pub(crate) fn require<'s>(store: &'s SharedStore, key: &str) -> Result<&'s Value, PatternError> {
    store.get(key).ok_or_else(|| PatternError::MissingKey(key.to_owned()))
}

pub(crate) fn require_str<'s>(store: &'s SharedStore, key: &str) -> Result<&'s str, PatternError> {
    require(store, key)?.as_str().ok_or_else(|| PatternError::WrongType {
        key: key.to_owned(),
        expected: "text",
    })
}

pub(crate) fn require_list<'s>(store: &'s SharedStore, key: &str) -> Result<&'s [Value], PatternError> {
    require(store, key)?.as_list().ok_or_else(|| PatternError::WrongType {
        key: key.to_owned(),
        expected: "a list",
    })
}
