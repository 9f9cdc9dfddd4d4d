//! Parallel batch execution with bounded concurrency.
//!
//! Twenty slow elements finish in roughly the time of one when all run at
//! once, and the results stay aligned with the inputs either way.

use std::time::{Duration, Instant};

use nodeflow::{run_parallel_batch_node, Action, BatchNode, NodeError, RetryPolicy, SharedStore, ThreadSleep, Value};

struct SlowSquare;

impl BatchNode for SlowSquare {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        Ok(store.get("inputs").cloned().unwrap_or(Value::List(vec![])))
    }

    fn exec(&self, item: &Value) -> Result<Value, NodeError> {
        std::thread::sleep(Duration::from_millis(50));
        let n = item.as_i64().ok_or("inputs must be integers")?;
        Ok(Value::Int(n * n))
    }

    fn post(&self, store: &mut SharedStore, _: Vec<Value>, results: Vec<Value>) -> Result<Action, NodeError> {
        store.set("squares", Value::List(results))?;
        Ok(Action::default())
    }
}

fn main() {
    let inputs = Value::List((0..20).map(Value::Int).collect());
    let policy = RetryPolicy::default();

    for workers in [1, 4, 20] {
        let mut store = SharedStore::from([("inputs", inputs.clone())]);
        let started = Instant::now();
        run_parallel_batch_node(&SlowSquare, &policy, &mut store, &ThreadSleep, workers).unwrap();
        let squares: Vec<i64> = store
            .get("squares")
            .and_then(Value::as_list)
            .unwrap()
            .iter()
            .filter_map(Value::as_i64)
            .collect();
        println!("{workers:>2} worker(s): {:>5} ms  {squares:?}", started.elapsed().as_millis());
    }
}
