//! Retry and fallback for the exec phase.

use std::future::Future;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use futures::future::BoxFuture;
use thiserror::Error;

use crate::node::{AsyncNode, Node, NodeError};
use crate::value::Value;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("max_retries must be at least 1 (it counts total attempts)")]
pub struct InvalidRetryPolicy;

/// How often exec is attempted and how long to wait between attempts.
///
/// `max_retries` is the total attempt count, so `1` means a single try.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    max_retries: u32,
    wait: Duration,
}

impl RetryPolicy {
    pub fn new(max_retries: u32, wait: Duration) -> Result<Self, InvalidRetryPolicy> {
        if max_retries == 0 {
            return Err(InvalidRetryPolicy);
        }
        Ok(Self { max_retries, wait })
    }

    pub fn attempts(max_retries: u32) -> Result<Self, InvalidRetryPolicy> {
        Self::new(max_retries, Duration::ZERO)
    }

    pub fn max_retries(&self) -> u32 {
        self.max_retries
    }

    pub fn wait(&self) -> Duration {
        self.wait
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 1,
            wait: Duration::ZERO,
        }
    }
}

/// Source of the delay between exec attempts. Injected so tests run without
/// real sleeps.
pub trait WaitProvider: Send + Sync {
    fn wait(&self, duration: Duration);

    /// Suspending variant used by non-blocking nodes. The default blocks.
    fn wait_async(&self, duration: Duration) -> BoxFuture<'_, ()> {
        self.wait(duration);
        Box::pin(futures::future::ready(()))
    }
}

/// Real delays. The async variant parks a helper thread instead of the
/// caller, so cooperatively scheduled flows keep running.
#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleep;

impl WaitProvider for ThreadSleep {
    fn wait(&self, duration: Duration) {
        if !duration.is_zero() {
            std::thread::sleep(duration);
        }
    }

    fn wait_async(&self, duration: Duration) -> BoxFuture<'_, ()> {
        if duration.is_zero() {
            return Box::pin(futures::future::ready(()));
        }
        let (tx, rx) = futures::channel::oneshot::channel();
        std::thread::spawn(move || {
            std::thread::sleep(duration);
            let _ = tx.send(());
        });
        Box::pin(async move {
            let _ = rx.await;
        })
    }
}

/// Records requested waits without sleeping.
#[derive(Debug, Default)]
pub struct RecordingWait {
    count: AtomicUsize,
    waits: Mutex<Vec<Duration>>,
}

impl RecordingWait {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn waits(&self) -> Vec<Duration> {
        self.waits.lock().unwrap().clone()
    }
}

impl WaitProvider for RecordingWait {
    fn wait(&self, duration: Duration) {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.waits.lock().unwrap().push(duration);
    }
}

/// Why exec produced no value.
#[derive(Debug, Error)]
pub enum ExecFailure {
    #[error("exec failed after {attempts} attempt(s): {source}")]
    Exhausted { attempts: u32, source: NodeError },
    #[error("exec fallback failed: {source}")]
    FallbackFailed { source: NodeError },
}

/// Runs `exec` up to `policy.max_retries()` times, waiting between failed
/// attempts. Once every attempt has failed, `fallback` gets the last error;
/// returning `None` from it means there is no fallback.
pub fn retry_exec<E, F>(policy: &RetryPolicy, waiter: &dyn WaitProvider, mut exec: E, fallback: F) -> Result<Value, ExecFailure>
where
    E: FnMut() -> Result<Value, NodeError>,
    F: FnOnce(&NodeError) -> Option<Result<Value, NodeError>>,
{
    let mut attempt = 0;
    loop {
        attempt += 1;
        match exec() {
            Ok(v) => return Ok(v),
            Err(_) if attempt < policy.max_retries => waiter.wait(policy.wait),
            Err(e) => {
                let fb = fallback(&e);
                return settle(attempt, e, fb);
            }
        }
    }
}

fn settle(attempts: u32, last: NodeError, fallback: Option<Result<Value, NodeError>>) -> Result<Value, ExecFailure> {
    match fallback {
        None => Err(ExecFailure::Exhausted { attempts, source: last }),
        Some(Ok(v)) => Ok(v),
        Some(Err(source)) => Err(ExecFailure::FallbackFailed { source }),
    }
}

/// Async counterpart of [`retry_exec`].
pub async fn retry_exec_async<E, Fut, F, FFut>(
    policy: &RetryPolicy,
    waiter: &dyn WaitProvider,
    mut exec: E,
    fallback: F,
) -> Result<Value, ExecFailure>
where
    E: FnMut() -> Fut,
    Fut: Future<Output = Result<Value, NodeError>>,
    F: FnOnce(NodeError) -> FFut,
    FFut: Future<Output = (NodeError, Option<Result<Value, NodeError>>)>,
{
    let mut attempt = 0;
    loop {
        attempt += 1;
        match exec().await {
            Ok(v) => return Ok(v),
            Err(_) if attempt < policy.max_retries => waiter.wait_async(policy.wait).await,
            Err(e) => {
                let (last, fb) = fallback(e).await;
                return settle(attempt, last, fb);
            }
        }
    }
}

/// Runs a node's exec phase under `policy`.
pub fn exec_with_retry(node: &dyn Node, policy: &RetryPolicy, prep_res: &Value, waiter: &dyn WaitProvider) -> Result<Value, ExecFailure> {
    retry_exec(policy, waiter, || node.exec(prep_res), |e| node.exec_fallback(prep_res, e))
}

pub async fn exec_with_retry_async(
    node: &dyn AsyncNode,
    policy: &RetryPolicy,
    prep_res: &Value,
    waiter: &dyn WaitProvider,
) -> Result<Value, ExecFailure> {
    retry_exec_async(
        policy,
        waiter,
        || node.exec(prep_res),
        |e| async move {
            let fb = node.exec_fallback(prep_res, &e).await;
            (e, fb)
        },
    )
    .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    /// Fails the first `failures` calls, then echoes its input.
    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        fallback: Option<Value>,
    }

    impl Flaky {
        fn new(failures: u32) -> Self {
            Self {
                failures,
                calls: AtomicU32::new(0),
                fallback: None,
            }
        }
    }

    impl Node for Flaky {
        fn exec(&self, prep_res: &Value) -> Result<Value, NodeError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(format!("failure {}", n + 1).into())
            } else {
                Ok(prep_res.clone())
            }
        }

        fn exec_fallback(&self, _: &Value, _: &NodeError) -> Option<Result<Value, NodeError>> {
            self.fallback.clone().map(Ok)
        }
    }

    #[test]
    fn zero_attempts_is_rejected() {
        assert_eq!(RetryPolicy::attempts(0), Err(InvalidRetryPolicy));
    }

    #[test]
    fn succeeds_on_third_attempt() {
        let node = Flaky::new(2);
        let waiter = RecordingWait::new();
        let policy = RetryPolicy::new(3, Duration::from_millis(10)).unwrap();
        let out = exec_with_retry(&node, &policy, &Value::Int(7), &waiter).unwrap();
        assert_eq!(out, Value::Int(7));
        assert_eq!(node.calls.load(Ordering::SeqCst), 3);
        assert_eq!(waiter.count(), 2);
        assert_eq!(waiter.waits(), vec![Duration::from_millis(10); 2]);
    }

    #[test]
    fn single_attempt_without_fallback_is_exhausted() {
        let node = Flaky::new(1);
        let waiter = RecordingWait::new();
        let err = exec_with_retry(&node, &RetryPolicy::default(), &Value::Null, &waiter).unwrap_err();
        assert!(matches!(err, ExecFailure::Exhausted { attempts: 1, .. }));
        assert_eq!(waiter.count(), 0);
    }

    #[test]
    fn fallback_value_replaces_failure() {
        let mut node = Flaky::new(u32::MAX);
        node.fallback = Some(Value::from("sentinel"));
        let waiter = RecordingWait::new();
        let policy = RetryPolicy::attempts(2).unwrap();
        let out = exec_with_retry(&node, &policy, &Value::Null, &waiter).unwrap();
        assert_eq!(out, Value::from("sentinel"));
        assert_eq!(node.calls.load(Ordering::SeqCst), 2);
        // no wait before the fallback
        assert_eq!(waiter.count(), 1);
    }

    #[test]
    fn failing_fallback_is_reported() {
        let policy = RetryPolicy::default();
        let err = retry_exec(&policy, &RecordingWait::new(), || Err("boom".into()), |_| Some(Err("fallback boom".into())))
            .unwrap_err();
        match err {
            ExecFailure::FallbackFailed { source } => assert_eq!(source.to_string(), "fallback boom"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn last_error_is_kept() {
        let node = Flaky::new(5);
        let err = exec_with_retry(&node, &RetryPolicy::attempts(3).unwrap(), &Value::Null, &RecordingWait::new()).unwrap_err();
        match err {
            ExecFailure::Exhausted { attempts, source } => {
                assert_eq!(attempts, 3);
                assert_eq!(source.to_string(), "failure 3");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn async_retry_matches_sync_counts() {
        let waiter = RecordingWait::new();
        let calls = AtomicU32::new(0);
        let policy = RetryPolicy::attempts(3).unwrap();
        let out = futures::executor::block_on(retry_exec_async(
            &policy,
            &waiter,
            || {
                let n = calls.fetch_add(1, Ordering::SeqCst);
                async move {
                    if n < 2 {
                        Err::<Value, NodeError>("no".into())
                    } else {
                        Ok(Value::Int(1))
                    }
                }
            },
            |e| async move { (e, None) },
        ))
        .unwrap();
        assert_eq!(out, Value::Int(1));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert_eq!(waiter.count(), 2);
    }

    proptest::proptest! {
        #[test]
        fn attempt_and_wait_counts(failures in 0u32..8, max in 1u32..8) {
            let node = Flaky::new(failures);
            let waiter = RecordingWait::new();
            let policy = RetryPolicy::attempts(max).unwrap();
            let result = exec_with_retry(&node, &policy, &Value::Null, &waiter);
            let invocations = node.calls.load(Ordering::SeqCst);
            proptest::prop_assert_eq!(invocations, (failures + 1).min(max));
            proptest::prop_assert_eq!(waiter.count() as u32, invocations - 1);
            proptest::prop_assert_eq!(result.is_ok(), failures < max);
        }
    }
}
