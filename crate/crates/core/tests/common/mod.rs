#![allow(dead_code)]

use nodeflow::{Action, FnNode, Flow, Graph, SharedStore, Value};
use proptest::prelude::*;

/// Handle-free values with finite floats, nested up to three levels.
pub fn arb_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        (-1.0e12f64..1.0e12).prop_map(Value::Float),
        "[a-zA-Z0-9 _\\-\"\\\\\u{e9}\u{1F600}]{0,12}".prop_map(Value::Text),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
            prop::collection::btree_map("[a-z]{1,4}", inner, 0..4).prop_map(Value::Map),
        ]
    })
}

pub fn arb_key() -> impl Strategy<Value = String> {
    "[a-e]{1,2}"
}

pub fn arb_store() -> impl Strategy<Value = SharedStore> {
    prop::collection::btree_map(arb_key(), arb_value(), 0..6).prop_map(|m| {
        let mut store = SharedStore::new();
        for (k, v) in m {
            store.set(k, v).unwrap();
        }
        store
    })
}

/// A node that writes `value` under `key` and returns `action`.
pub fn writer(key: &'static str, value: impl Into<Value>, action: &'static str) -> FnNode {
    let value = value.into();
    FnNode::new().post(move |store, _, _| {
        store.set(key, value.clone())?;
        Ok(Action::new(action))
    })
}

/// A node that appends its own name to `log`.
pub fn logger(name: &'static str) -> FnNode {
    FnNode::new().post(move |store, _, _| {
        store.push("log", name)?;
        Ok(Action::default())
    })
}

pub fn log_of(store: &SharedStore) -> Vec<String> {
    store
        .get("log")
        .and_then(Value::as_list)
        .unwrap_or_default()
        .iter()
        .filter_map(Value::as_str)
        .map(str::to_owned)
        .collect()
}

/// `n0 >> n1 >> ...`, each a [`logger`].
pub fn logging_chain(id: &str, names: &[&'static str]) -> Flow {
    let mut g = Graph::new(id);
    let refs: Vec<_> = names.iter().map(|n| g.add(*n, logger(n)).unwrap()).collect();
    g.chain(&refs).unwrap();
    Flow::new(g, refs[0]).unwrap()
}

pub fn single(id: &str, step: impl Into<nodeflow::Step>) -> Flow {
    let mut g = Graph::new(id);
    let n = g.add(id, step).unwrap();
    Flow::new(g, n).unwrap()
}
