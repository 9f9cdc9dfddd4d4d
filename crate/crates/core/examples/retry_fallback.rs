//! Retries with a fixed wait, then a fallback once every attempt has failed.
//!
//! The wait provider is swapped for a recorder so the example runs instantly
//! and can show exactly which waits would have happened.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use nodeflow::{Flow, FlowError, Graph, Node, NodeError, RecordingWait, RetryPolicy, Runner, SharedStore, Value};

/// Fails the first `failures` calls to exec.
struct Flaky {
    failures: u32,
    calls: AtomicU32,
    fallback: Option<&'static str>,
}

impl Node for Flaky {
    fn exec(&self, _: &Value) -> Result<Value, NodeError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if call <= self.failures {
            Err(format!("upstream timeout on call {call}").into())
        } else {
            Ok("fresh data".into())
        }
    }

    fn exec_fallback(&self, _: &Value, error: &NodeError) -> Option<Result<Value, NodeError>> {
        self.fallback.map(|v| {
            println!("  fallback after: {error}");
            Ok(v.into())
        })
    }

    fn post(&self, store: &mut SharedStore, _: Value, result: Value) -> Result<nodeflow::Action, NodeError> {
        store.set("data", result)?;
        Ok(Default::default())
    }
}

fn attempt(label: &str, failures: u32, max_retries: u32, fallback: Option<&'static str>) {
    println!("{label}");
    let mut g = Graph::new("fetch");
    let node = g
        .add(
            "fetch",
            Flaky {
                failures,
                calls: AtomicU32::new(0),
                fallback,
            },
        )
        .unwrap();
    g.set_retry(node, RetryPolicy::new(max_retries, Duration::from_millis(250)).unwrap())
        .unwrap();
    let flow = Flow::new(g, node).unwrap();

    let waits = Arc::new(RecordingWait::new());
    let runner = Runner::new().waiter(waits.clone());
    match runner.run(&flow, SharedStore::new()) {
        Ok(out) => println!("  data = {:?}", out.store.get_str("data").unwrap()),
        Err(e) => match &e.error {
            FlowError::ExecExhausted { attempts, .. } => println!("  gave up after {attempts} attempts"),
            other => println!("  failed: {other}"),
        },
    }
    println!("  waits: {:?}", waits.waits());
}

fn main() {
    attempt("two failures, three attempts allowed", 2, 3, None);
    attempt("two failures, two attempts allowed", 2, 2, None);
    attempt("always failing, with a cached fallback", u32::MAX, 3, Some("cached data"));
}
