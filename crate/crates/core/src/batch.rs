//! Batch nodes and batch flows.
//!
//! A batch node maps its exec over the list returned by prep, either one
//! element at a time or on a bounded pool of worker threads. Results always
//! reach post in input order. A batch flow runs an inner flow once per
//! parameter set, overlaying the set's keys on the store for that iteration.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::flow::{FlowError, Flow};
use crate::graph::BatchMode;
use crate::node::{Action, BatchNode, NodeError};
use crate::retry::{retry_exec, ExecFailure, RetryPolicy, WaitProvider};
use crate::store::{SharedStore, StoreError};
use crate::value::Value;

pub(crate) fn run_batch_step(
    node: &dyn BatchNode,
    mode: BatchMode,
    policy: &RetryPolicy,
    store: &mut SharedStore,
    waiter: &dyn WaitProvider,
    path: &str,
) -> Result<Action, FlowError> {
    let items = match node.prep(store) {
        Ok(Value::List(items)) => items,
        Ok(other) => {
            return Err(FlowError::PrepNotAList {
                node: path.to_owned(),
                found: other.kind(),
            })
        }
        Err(source) => {
            return Err(FlowError::Prep {
                node: path.to_owned(),
                source,
            })
        }
    };
    let results = match mode {
        BatchMode::Sequential => map_sequential(node, policy, waiter, &items),
        BatchMode::Parallel { max_concurrency } => {
            map_parallel(node, policy, waiter, &items, max_concurrency.unwrap_or(items.len()))
        }
    }
    .map_err(|(index, failure)| FlowError::from_exec(path, Some(index), failure))?;
    node.post(store, items, results).map_err(|source| FlowError::Post {
        node: path.to_owned(),
        source,
    })
}

/// Runs a batch node sequentially against `store`.
pub fn run_batch_node(
    node: &dyn BatchNode,
    policy: &RetryPolicy,
    store: &mut SharedStore,
    waiter: &dyn WaitProvider,
) -> Result<Action, FlowError> {
    run_batch_step(node, BatchMode::Sequential, policy, store, waiter, "batch")
}

/// Runs a batch node with up to `max_concurrency` elements in flight.
///
/// The first element to fail (after its retries) stops workers from picking
/// up further elements; elements already running are allowed to finish.
pub fn run_parallel_batch_node(
    node: &dyn BatchNode,
    policy: &RetryPolicy,
    store: &mut SharedStore,
    waiter: &dyn WaitProvider,
    max_concurrency: usize,
) -> Result<Action, FlowError> {
    let mode = BatchMode::Parallel {
        max_concurrency: Some(max_concurrency),
    };
    run_batch_step(node, mode, policy, store, waiter, "batch")
}

type ElementFailure = (usize, ExecFailure);

fn exec_element(node: &dyn BatchNode, policy: &RetryPolicy, waiter: &dyn WaitProvider, item: &Value) -> Result<Value, ExecFailure> {
    retry_exec(policy, waiter, || node.exec(item), |e| node.exec_fallback(item, e))
}

fn map_sequential(
    node: &dyn BatchNode,
    policy: &RetryPolicy,
    waiter: &dyn WaitProvider,
    items: &[Value],
) -> Result<Vec<Value>, ElementFailure> {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| exec_element(node, policy, waiter, item).map_err(|f| (i, f)))
        .collect()
}

fn map_parallel(
    node: &dyn BatchNode,
    policy: &RetryPolicy,
    waiter: &dyn WaitProvider,
    items: &[Value],
    max_concurrency: usize,
) -> Result<Vec<Value>, ElementFailure> {
    let workers = max_concurrency.max(1).min(items.len());
    if workers <= 1 {
        return map_sequential(node, policy, waiter, items);
    }
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<ElementFailure>> = Mutex::new(None);
    let slots: Vec<Mutex<Option<Value>>> = items.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                match exec_element(node, policy, waiter, &items[i]) {
                    Ok(v) => *slots[i].lock().unwrap() = Some(v),
                    Err(f) => {
                        stop.store(true, Ordering::SeqCst);
                        failure.lock().unwrap().get_or_insert((i, f));
                        break;
                    }
                }
            });
        }
    });

    if let Some(f) = failure.into_inner().unwrap() {
        return Err(f);
    }
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every element settled"))
        .collect())
}

/// Keys overlaid on the store for one batch-flow iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet(BTreeMap<String, Value>);

impl ParamSet {
    pub fn new<K, I>(entries: I) -> Result<Self, StoreError>
    where
        K: Into<String>,
        I: IntoIterator<Item = (K, Value)>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in entries {
            let k = k.into();
            if k.is_empty() {
                return Err(StoreError::EmptyKey);
            }
            map.insert(k, v);
        }
        Ok(Self(map))
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Overlays the parameters and returns the bindings they shadowed.
    pub(crate) fn apply(&self, store: &mut SharedStore) -> Vec<(String, Option<Value>)> {
        self.0
            .iter()
            .map(|(k, v)| {
                let prior = store.remove(k);
                store.set(k.clone(), v.clone()).expect("param keys are non-empty");
                (k.clone(), prior)
            })
            .collect()
    }

    pub(crate) fn restore(&self, store: &mut SharedStore, saved: Vec<(String, Option<Value>)>) {
        for (k, prior) in saved.into_iter().rev() {
            match prior {
                Some(v) => store.set(k, v).expect("param keys are non-empty"),
                None => {
                    store.remove(&k);
                }
            }
        }
    }
}

/// Supplies the parameter sets of a batch flow and folds the inner flow's
/// terminal actions into the batch flow's own action.
pub trait BatchFlowLogic: Send + Sync {
    fn params(&self, store: &SharedStore) -> Result<Vec<ParamSet>, NodeError>;

    fn collect(&self, _store: &mut SharedStore, _actions: Vec<Action>) -> Result<Action, NodeError> {
        Ok(Action::default())
    }
}

/// Runs `inner` once per parameter set, sequentially and in order.
#[derive(Clone)]
pub struct BatchFlow {
    id: String,
    inner: Flow,
    logic: Arc<dyn BatchFlowLogic>,
}

impl BatchFlow {
    pub fn new(id: impl Into<String>, inner: Flow, logic: impl BatchFlowLogic + 'static) -> Self {
        Self {
            id: id.into(),
            inner,
            logic: Arc::new(logic),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn inner(&self) -> &Flow {
        &self.inner
    }

    pub(crate) fn logic(&self) -> &dyn BatchFlowLogic {
        self.logic.as_ref()
    }
}

impl fmt::Debug for BatchFlow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BatchFlow")
            .field("id", &self.id)
            .field("inner", &self.inner)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retry::RecordingWait;
    use std::sync::atomic::AtomicU32;
    use std::time::{Duration, Instant};

    struct Doubler;

    impl BatchNode for Doubler {
        fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
            Ok(store.get("items").cloned().unwrap_or(Value::Null))
        }

        fn exec(&self, item: &Value) -> Result<Value, NodeError> {
            Ok(Value::Int(item.as_i64().ok_or("not an int")? * 2))
        }

        fn post(&self, store: &mut SharedStore, _: Vec<Value>, results: Vec<Value>) -> Result<Action, NodeError> {
            store.set("results", results)?;
            Ok("done".into())
        }
    }

    fn ints(xs: &[i64]) -> Value {
        Value::List(xs.iter().map(|&x| Value::Int(x)).collect())
    }

    #[test]
    fn doubles_elementwise() {
        let mut store = SharedStore::from([("items", ints(&[1, 2, 3]))]);
        let action = run_batch_node(&Doubler, &RetryPolicy::default(), &mut store, &RecordingWait::new()).unwrap();
        assert_eq!(action, "done");
        assert_eq!(store.get("results"), Some(&ints(&[2, 4, 6])));
    }

    #[test]
    fn empty_batch_still_posts() {
        let mut store = SharedStore::from([("items", ints(&[]))]);
        let action = run_batch_node(&Doubler, &RetryPolicy::default(), &mut store, &RecordingWait::new()).unwrap();
        assert_eq!(action, "done");
        assert_eq!(store.get("results"), Some(&ints(&[])));
    }

    #[test]
    fn non_list_prep_is_rejected() {
        let mut store = SharedStore::from([("items", Value::Int(3))]);
        let err = run_batch_node(&Doubler, &RetryPolicy::default(), &mut store, &RecordingWait::new()).unwrap_err();
        assert!(matches!(err, FlowError::PrepNotAList { found: "int", .. }));
    }

    /// Element with value `bad` always fails; counts calls per element.
    struct FailsAt {
        bad: i64,
        calls: Vec<AtomicU32>,
    }

    impl BatchNode for FailsAt {
        fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
            Ok(store.get("items").cloned().unwrap())
        }

        fn exec(&self, item: &Value) -> Result<Value, NodeError> {
            let x = item.as_i64().unwrap();
            self.calls[x as usize - 1].fetch_add(1, Ordering::SeqCst);
            if x == self.bad {
                Err("persistent".into())
            } else {
                Ok(item.clone())
            }
        }
    }

    #[test]
    fn persistent_element_failure_aborts_the_batch() {
        // elements 1..=10; the 7th (index 6) always fails
        let node = FailsAt {
            bad: 7,
            calls: (0..10).map(|_| AtomicU32::new(0)).collect(),
        };
        let mut store = SharedStore::from([("items", Value::List((1..=10).map(Value::Int).collect()))]);
        let policy = RetryPolicy::attempts(2).unwrap();
        let err = run_batch_node(&node, &policy, &mut store, &RecordingWait::new()).unwrap_err();
        match err {
            FlowError::ExecExhausted { index, attempts, .. } => {
                assert_eq!(index, Some(6));
                assert_eq!(attempts, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        let calls: Vec<u32> = node.calls.iter().map(|c| c.load(Ordering::SeqCst)).collect();
        assert_eq!(calls, vec![1, 1, 1, 1, 1, 1, 2, 0, 0, 0]);
        assert!(!store.contains("results"));
    }

    /// Sleeps for the element's value in milliseconds.
    struct Sleeper;

    impl BatchNode for Sleeper {
        fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
            Ok(store.get("items").cloned().unwrap())
        }

        fn exec(&self, item: &Value) -> Result<Value, NodeError> {
            let ms = item.as_i64().unwrap();
            std::thread::sleep(Duration::from_millis(ms as u64));
            Ok(Value::Int(ms * 10))
        }

        fn post(&self, store: &mut SharedStore, _: Vec<Value>, results: Vec<Value>) -> Result<Action, NodeError> {
            store.set("results", results)?;
            Ok(Action::default())
        }
    }

    #[test]
    fn parallel_results_follow_input_order() {
        // the first element finishes last
        let mut store = SharedStore::from([("items", ints(&[30, 10, 20]))]);
        run_parallel_batch_node(&Sleeper, &RetryPolicy::default(), &mut store, &RecordingWait::new(), 3).unwrap();
        assert_eq!(store.get("results"), Some(&ints(&[300, 100, 200])));
    }

    #[test]
    fn parallel_overlaps_latency() {
        let mut store = SharedStore::from([("items", Value::List(vec![Value::Int(50); 20]))]);
        let started = Instant::now();
        run_parallel_batch_node(&Sleeper, &RetryPolicy::default(), &mut store, &RecordingWait::new(), 20).unwrap();
        assert!(started.elapsed() < Duration::from_millis(300), "{:?}", started.elapsed());
    }

    #[test]
    fn parallel_failure_reports_the_element() {
        let node = FailsAt {
            bad: 3,
            calls: (0..6).map(|_| AtomicU32::new(0)).collect(),
        };
        let mut store = SharedStore::from([("items", Value::List((1..=6).map(Value::Int).collect()))]);
        let err = run_parallel_batch_node(&node, &RetryPolicy::default(), &mut store, &RecordingWait::new(), 4).unwrap_err();
        assert!(matches!(err, FlowError::ExecExhausted { index: Some(2), .. }));
    }

    #[test]
    fn param_set_overlay_is_restored() {
        let mut store = SharedStore::from([("k", Value::Int(0))]);
        let ps = ParamSet::new([("k", Value::Int(1)), ("fresh", Value::Bool(true))]).unwrap();
        let saved = ps.apply(&mut store);
        assert_eq!(store.get_i64("k"), Some(1));
        assert!(store.contains("fresh"));
        ps.restore(&mut store, saved);
        assert_eq!(store.get_i64("k"), Some(0));
        assert!(!store.contains("fresh"));
        assert!(ParamSet::new([("", Value::Null)]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn parallel_matches_sequential(xs in proptest::collection::vec(-1000i64..1000, 0..40), conc in 1usize..8) {
            let mut seq = SharedStore::from([("items", ints(&xs))]);
            let mut par = seq.clone();
            run_batch_node(&Doubler, &RetryPolicy::default(), &mut seq, &RecordingWait::new()).unwrap();
            run_parallel_batch_node(&Doubler, &RetryPolicy::default(), &mut par, &RecordingWait::new(), conc).unwrap();
            proptest::prop_assert_eq!(seq, par);
        }
    }
}
