//! Routing on action labels.
//!
//! `review` returns `"approve"`, `"reject"` or anything else. The first two
//! have their own successors; everything else falls back to the `"default"`
//! edge, and `escalate` returns a label nobody handles, so the flow ends there
//! and reports that label as its terminal action.

use nodeflow::{Action, FnNode, Flow, Graph, SharedStore, Value};

fn tag(key: &'static str, value: &'static str) -> FnNode {
    FnNode::new().post(move |store, _, _| {
        store.set(key, value)?;
        Ok(Action::default())
    })
}

fn build() -> Flow {
    let review = FnNode::new()
        .prep(|store| Ok(store.get("score").cloned().unwrap_or(Value::Int(0))))
        .post(|_, score, _| {
            Ok(match score.as_i64().unwrap_or(0) {
                80.. => "approve".into(),
                ..=20 => "reject".into(),
                _ => "unsure".into(),
            })
        });

    let mut g = Graph::new("review");
    let review = g.add("review", review).unwrap();
    let approve = g.add("approve", tag("status", "approved")).unwrap();
    let reject = g.add("reject", tag("status", "rejected")).unwrap();
    let escalate = g
        .add(
            "escalate",
            FnNode::new().post(|store, _, _| {
                store.set("status", "escalated")?;
                Ok("needs_human".into())
            }),
        )
        .unwrap();

    g.connect_on(review, "approve", approve).unwrap();
    g.connect_on(review, "reject", reject).unwrap();
    g.connect_default(review, escalate).unwrap();
    Flow::new(g, review).unwrap()
}

fn main() {
    let flow = build();
    for score in [95, 10, 50] {
        let out = flow.run(SharedStore::from([("score", Value::Int(score))])).unwrap();
        println!(
            "score {score:>3}: status={:<9} terminal action={}",
            out.store.get_str("status").unwrap(),
            out.terminal_action
        );
    }
}
