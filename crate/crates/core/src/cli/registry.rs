//! Built-in node kinds available to workflow documents.
//!
//! | kind             | params                                   | actions                |
//! |------------------|------------------------------------------|------------------------|
//! | `noop`           | `action`?                                | `action` or `default`  |
//! | `set`            | `key`, `value`                           | `default`              |
//! | `template`       | `template`, `target`, `defaults`?        | `default`              |
//! | `branch`         | `key`, `cases`, `otherwise`?             | a case or `otherwise`  |
//! | `append`         | `key`, `value`                           | `default`              |
//! | `counter`        | `key`, `limit`                           | `continue`, `done`     |
//! | `fail_n`         | `n`, `key`?, `value`?, `fallback`?       | `default`              |
//! | `sleep`          | `ms`                                     | `default`              |
//! | `greet`          |                                          | `default`              |
//! | `ask_mood`       | `mood`?                                  | `default`              |
//! | `word_game`      | `timeout_ms`?                            | `won`, `lost`          |
//! | `rag_offline`    |                                          | sub-flow               |
//! | `rag_online`     |                                          | sub-flow               |
//! | `agent_loop`     | `max_tool_calls`?                        | sub-flow               |
//! | `order_pipeline` |                                          | sub-flow               |
//!
//! `template` replaces each `{key}` with the store value under `key` (text
//! as-is, anything else as canonical JSON), falling back to `defaults`.
//! `branch` looks up the store value under `key` in `cases`, a map from text
//! to action; non-text values are matched by their canonical JSON and an
//! absent key matches `"null"`. `fail_n` fails its first `n` exec attempts
//! in this process, then writes `value` under `key`. The last four kinds embed
//! the corresponding pattern as a nested flow.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde_json::Value as Json;

use super::document::{DocumentError, NodeSpec};
use crate::flow::{Flow, Runner};
use crate::graph::Step;
use crate::node::{Action, FnNode, Node, NodeError};
use crate::patterns;
use crate::store::{from_json, value_to_canonical_bytes, SharedStore};
use crate::value::Value;

pub const KINDS: &[&str] = &[
    "noop",
    "set",
    "template",
    "branch",
    "append",
    "counter",
    "fail_n",
    "sleep",
    "greet",
    "ask_mood",
    "word_game",
    "rag_offline",
    "rag_online",
    "agent_loop",
    "order_pipeline",
];

struct Params<'a> {
    node: &'a NodeSpec,
    path: &'a str,
}

impl<'a> Params<'a> {
    fn invalid(&self, message: String) -> DocumentError {
        DocumentError::Invalid {
            path: format!("{}.params", self.path),
            message,
        }
    }

    fn raw(&self, name: &str) -> Option<&'a Json> {
        self.node.params.get(name)
    }

    fn value(&self, name: &str) -> Result<Value, DocumentError> {
        let raw = self.raw(name).ok_or_else(|| self.invalid(format!("missing `{name}`")))?;
        from_json(raw.clone()).map_err(|e| self.invalid(format!("`{name}`: {e}")))
    }

    fn opt_value(&self, name: &str) -> Result<Option<Value>, DocumentError> {
        self.raw(name).map(|_| self.value(name)).transpose()
    }

    fn text(&self, name: &str) -> Result<String, DocumentError> {
        match self.raw(name) {
            Some(Json::String(s)) if !s.is_empty() => Ok(s.clone()),
            Some(_) => Err(self.invalid(format!("`{name}` must be non-empty text"))),
            None => Err(self.invalid(format!("missing `{name}`"))),
        }
    }

    fn opt_text(&self, name: &str) -> Result<Option<String>, DocumentError> {
        self.raw(name).map(|_| self.text(name)).transpose()
    }

    fn count(&self, name: &str) -> Result<u64, DocumentError> {
        self.raw(name)
            .ok_or_else(|| self.invalid(format!("missing `{name}`")))?
            .as_u64()
            .ok_or_else(|| self.invalid(format!("`{name}` must be a non-negative integer")))
    }

    fn opt_count(&self, name: &str) -> Result<Option<u64>, DocumentError> {
        self.raw(name).map(|_| self.count(name)).transpose()
    }
}

/// Text for substitution and matching: text as-is, other values as JSON.
fn render(value: Option<&Value>) -> String {
    match value {
        Some(Value::Text(s)) => s.clone(),
        Some(v) => value_to_canonical_bytes(v, "value")
            .map(|b| String::from_utf8_lossy(&b).into_owned())
            .unwrap_or_else(|_| format!("{v:?}")),
        None => "null".to_owned(),
    }
}

fn placeholders(template: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                if !name.is_empty() && !name.contains('{') {
                    out.push(name.to_owned());
                }
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

fn setter(key: String, value: Value) -> FnNode {
    FnNode::new().post(move |store, _, _| {
        store.set(key.as_str(), value.clone())?;
        Ok(Action::default())
    })
}

fn template(p: &Params) -> Result<FnNode, DocumentError> {
    let template = p.text("template")?;
    let target = p.text("target")?;
    let defaults = match p.opt_value("defaults")? {
        None => Default::default(),
        Some(Value::Map(m)) => m,
        Some(_) => return Err(p.invalid("`defaults` must be a map".into())),
    };
    let names = placeholders(&template);
    Ok(FnNode::new()
        .prep(move |store| {
            let mut bound = Vec::new();
            for name in &names {
                let value = store
                    .get(name)
                    .or_else(|| defaults.get(name))
                    .ok_or_else(|| format!("template needs `{name}`, which is neither in the store nor defaulted"))?;
                bound.push((name.clone(), Value::from(render(Some(value)))));
            }
            Ok(Value::map(bound))
        })
        .exec(move |bound| {
            let mut text = template.clone();
            for (name, value) in bound.as_map().into_iter().flatten() {
                text = text.replace(&format!("{{{name}}}"), value.as_str().unwrap_or_default());
            }
            Ok(text.into())
        })
        .post(move |store, _, text| {
            store.set(target.as_str(), text)?;
            Ok(Action::default())
        }))
}

fn branch(p: &Params) -> Result<FnNode, DocumentError> {
    let key = p.text("key")?;
    let cases = match p.raw("cases") {
        Some(Json::Object(m)) => m
            .iter()
            .map(|(k, v)| match v {
                Json::String(a) if !a.is_empty() => Ok((k.clone(), a.clone())),
                _ => Err(p.invalid(format!("case `{k}` must map to a non-empty action"))),
            })
            .collect::<Result<std::collections::BTreeMap<_, _>, _>>()?,
        _ => return Err(p.invalid("`cases` must be a map from value to action".into())),
    };
    let otherwise = p.opt_text("otherwise")?.unwrap_or_else(|| Action::DEFAULT.to_owned());
    Ok(FnNode::new()
        .prep(move |store| Ok(render(store.get(&key)).into()))
        .post(move |_, seen, _| {
            let seen = seen.as_str().unwrap_or_default();
            Ok(Action::new(cases.get(seen).unwrap_or(&otherwise).as_str()))
        }))
}

fn counter(p: &Params) -> Result<FnNode, DocumentError> {
    let key = p.text("key")?;
    let limit = p.count("limit")? as i64;
    let read = key.clone();
    Ok(FnNode::new()
        .prep(move |store| match store.get(&read) {
            None => Ok(Value::Int(0)),
            Some(Value::Int(n)) => Ok(Value::Int(*n)),
            Some(other) => Err(format!("counter `{read}` holds {}, not an integer", other.kind()).into()),
        })
        .exec(|n| Ok(Value::Int(n.as_i64().unwrap_or(0) + 1)))
        .post(move |store, _, next| {
            let done = next.as_i64().unwrap_or(0) >= limit;
            store.set(key.as_str(), next)?;
            Ok(if done { "done" } else { "continue" }.into())
        }))
}

/// Fails the first `n` exec attempts made on this instance.
struct FailN {
    n: u64,
    attempts: AtomicU64,
    key: String,
    value: Value,
    fallback: Option<Value>,
}

impl Node for FailN {
    fn exec(&self, _: &Value) -> Result<Value, NodeError> {
        let attempt = self.attempts.fetch_add(1, Ordering::SeqCst) + 1;
        if attempt <= self.n {
            Err(format!("injected failure {attempt} of {}", self.n).into())
        } else {
            Ok(self.value.clone())
        }
    }

    fn exec_fallback(&self, _: &Value, _: &NodeError) -> Option<Result<Value, NodeError>> {
        self.fallback.clone().map(Ok)
    }

    fn post(&self, store: &mut SharedStore, _: Value, result: Value) -> Result<Action, NodeError> {
        store.set(self.key.as_str(), result)?;
        Ok(Action::default())
    }
}

fn word_game_node(p: &Params) -> Result<FnNode, DocumentError> {
    let timeout = Duration::from_millis(p.opt_count("timeout_ms")?.unwrap_or(5000));
    Ok(FnNode::new()
        .prep(|store| {
            let texts = |key: &str| -> Result<Value, NodeError> {
                let list = store.get(key).and_then(Value::as_list).unwrap_or_default();
                if list.iter().all(|v| v.as_str().is_some()) {
                    Ok(Value::List(list.to_vec()))
                } else {
                    Err(format!("`{key}` must be a list of text").into())
                }
            };
            Ok(Value::map([
                ("target_word", Value::from(store.get_str("target_word").ok_or("missing `target_word`")?)),
                ("forbidden", texts("forbidden")?),
                ("guesses", texts("guesses")?),
            ]))
        })
        .exec(move |input| {
            let strings = |key: &str| -> Vec<&str> {
                input.get(key).and_then(Value::as_list).unwrap_or_default().iter().filter_map(Value::as_str).collect()
            };
            let target = input.get("target_word").and_then(Value::as_str).unwrap_or_default();
            let game = patterns::build_word_game(target, &strings("forbidden"), &strings("guesses"));
            let out = game.play(Runner::new(), timeout)?;
            Ok(Value::map([
                ("hints", Value::Int(out.hints)),
                ("outcome", Value::from(out.guesser.terminal_action.as_str())),
            ]))
        })
        .post(|store, _, result| {
            let outcome = result.get("outcome").and_then(Value::as_str).unwrap_or("lost").to_owned();
            store.set("hints", result.get("hints").cloned().unwrap_or_default())?;
            store.set("outcome", outcome.as_str())?;
            Ok(Action::new(outcome))
        }))
}

/// The nested flow behind a pattern kind, if `node` is one.
pub fn pattern_flow(node: &NodeSpec) -> Option<Flow> {
    Some(match node.kind.as_str() {
        "rag_offline" => patterns::build_rag_offline(),
        "rag_online" => patterns::build_rag_online(),
        "agent_loop" => {
            let max = node.params.get("max_tool_calls").and_then(Json::as_u64).unwrap_or(8);
            patterns::build_agent_loop(max as usize)
        }
        "order_pipeline" => patterns::build_order_pipeline(),
        _ => return None,
    })
}

pub fn build_step(node: &NodeSpec, path: &str) -> Result<Step, DocumentError> {
    let p = Params { node, path };
    if let Some(flow) = pattern_flow(node) {
        p.opt_count("max_tool_calls")?;
        return Ok(Step::Flow(flow));
    }
    let step = match node.kind.as_str() {
        "noop" => {
            let action = p.opt_text("action")?.unwrap_or_else(|| Action::DEFAULT.to_owned());
            Step::from(FnNode::new().post(move |_, _, _| Ok(Action::new(action.as_str()))))
        }
        "set" => Step::from(setter(p.text("key")?, p.value("value")?)),
        "template" => Step::from(template(&p)?),
        "branch" => Step::from(branch(&p)?),
        "append" => {
            let key = p.text("key")?;
            let value = p.value("value")?;
            Step::from(FnNode::new().post(move |store, _, _| {
                store.push(&key, value.clone())?;
                Ok(Action::default())
            }))
        }
        "counter" => Step::from(counter(&p)?),
        "fail_n" => Step::from(FailN {
            n: p.count("n")?,
            attempts: AtomicU64::new(0),
            key: p.opt_text("key")?.unwrap_or_else(|| "result".to_owned()),
            value: p.opt_value("value")?.unwrap_or_else(|| "ok".into()),
            fallback: p.opt_value("fallback")?,
        }),
        "sleep" => {
            let ms = p.count("ms")?;
            Step::from(FnNode::new().exec(move |_| {
                std::thread::sleep(Duration::from_millis(ms));
                Ok(Value::Null)
            }))
        }
        "greet" => Step::from(patterns::GreetNode),
        "ask_mood" => Step::from(patterns::AskMoodNode::new(p.opt_text("mood")?.unwrap_or_else(|| "Happy".into()))),
        "word_game" => Step::from(word_game_node(&p)?),
        other => {
            return Err(DocumentError::UnknownKind {
                path: path.to_owned(),
                kind: other.to_owned(),
            })
        }
    };
    Ok(step)
}
