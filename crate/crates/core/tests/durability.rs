mod common;

use common::*;
use nodeflow::durability::{last_checkpoint, read_last_checkpoint};
use nodeflow::{
    Action, Checkpoint, CheckpointSink, FileSink, FnNode, Flow, FlowError, Graph, MemorySink, Runner, SharedStore,
    SinkError, Value,
};

/// Six nodes with a data dependency between each pair, so any replayed or
/// skipped step changes the final store.
fn six_step_flow() -> Flow {
    let mut g = Graph::new("ledger");
    let open = g.add("open", writer("balance", 100, "default")).unwrap();
    let mut prev = open;
    let mut refs = vec![open];
    for (i, delta) in [(1, 25i64), (2, -40), (3, 7), (4, 13)] {
        let id = format!("post_{i}");
        let node = FnNode::new()
            .prep(|s| Ok(Value::Int(s.get_i64("balance").unwrap_or(0))))
            .exec(move |b| Ok(Value::Int(b.as_i64().unwrap() * 2 + delta)))
            .post(move |s, _, b| {
                s.push("history", b.clone())?;
                s.set("balance", b)?;
                Ok(Action::default())
            });
        let r = g.add(id, node).unwrap();
        g.connect_default(prev, r).unwrap();
        prev = r;
        refs.push(r);
    }
    let close = g
        .add(
            "close",
            FnNode::new()
                .prep(|s| Ok(s.get("history").cloned().unwrap_or_default()))
                .exec(|h| Ok(Value::Int(h.as_list().unwrap().iter().filter_map(Value::as_i64).sum())))
                .post(|s, _, total| {
                    s.set("total", total)?;
                    Ok("closed".into())
                }),
        )
        .unwrap();
    g.connect_default(prev, close).unwrap();
    Flow::new(g, open).unwrap()
}

/// Accepts `keep` checkpoints, then fails like a process dying right after
/// the last durable write.
struct CrashAfter {
    keep: usize,
    written: Vec<Checkpoint>,
}

impl CheckpointSink for CrashAfter {
    fn write(&mut self, checkpoint: &Checkpoint) -> Result<(), SinkError> {
        if self.written.len() == self.keep {
            return Err(SinkError::Other("simulated crash".into()));
        }
        self.written.push(checkpoint.clone());
        Ok(())
    }
}

#[test]
fn crash_at_every_step_then_resume_matches_a_clean_run() {
    let flow = six_step_flow();
    let clean = Runner::new().run(&flow, SharedStore::new()).unwrap();
    let golden = clean.store.to_canonical_bytes().unwrap();
    assert_eq!(clean.trace.len(), 6);

    for crash_step in 0..6 {
        let mut sink = CrashAfter {
            keep: crash_step + 1,
            written: Vec::new(),
        };
        let result = Runner::new().run_id("r").run_checkpointed(&flow, SharedStore::new(), &mut sink);
        let last = sink.written.last().cloned().unwrap();
        assert_eq!(last.step_index, crash_step as u64);

        let mut rest = MemorySink::new();
        let resumed = Runner::new().resume(&flow, &last, &mut rest).unwrap();
        assert_eq!(resumed.store.to_canonical_bytes().unwrap(), golden, "crash after step {crash_step}");
        assert_eq!(resumed.terminal_action, "closed");
        assert_eq!(resumed.trace.len(), 5 - crash_step);

        if crash_step < 5 {
            assert!(matches!(result.unwrap_err().error, FlowError::Sink { .. }));
            let steps: Vec<u64> = rest.checkpoints.iter().map(|c| c.step_index).collect();
            assert_eq!(steps, ((crash_step as u64 + 1)..6).collect::<Vec<_>>());
            assert!(rest.checkpoints.iter().all(|c| c.run_id == "r"));
        }
    }
}

#[test]
fn one_checkpoint_per_step_with_matching_stores() {
    let flow = six_step_flow();
    let mut sink = MemorySink::new();
    let out = Runner::new().run_checkpointed(&flow, SharedStore::new(), &mut sink).unwrap();
    assert_eq!(sink.checkpoints.len(), out.trace.len());
    for (cp, entry) in sink.checkpoints.iter().zip(&out.trace) {
        assert_eq!(cp.completed_node_id, entry.node);
        assert_eq!(cp.returned_action, entry.action);
        assert_eq!(cp.step_index, entry.step as u64);
    }
    assert_eq!(sink.last().unwrap().store().unwrap(), out.store);
}

#[test]
fn nested_steps_checkpoint_with_hierarchical_ids_and_resume() {
    let inner = logging_chain("inner", &["i1", "i2"]);
    let mut g = Graph::new("outer");
    let a = g.add("a", logger("a")).unwrap();
    let sub = g.add("inner", inner).unwrap();
    let z = g.add("z", logger("z")).unwrap();
    g.chain(&[a, sub, z]).unwrap();
    let flow = Flow::new(g, a).unwrap();

    let mut sink = MemorySink::new();
    let clean = Runner::new().run_checkpointed(&flow, SharedStore::new(), &mut sink).unwrap();
    let ids: Vec<_> = sink.checkpoints.iter().map(|c| c.completed_node_id.as_str()).collect();
    assert_eq!(ids, ["a", "inner/i1", "inner/i2", "z"]);

    for cp in &sink.checkpoints {
        let out = Runner::new().resume(&flow, cp, &mut MemorySink::new()).unwrap();
        assert_eq!(out.store, clean.store, "resume after {}", cp.completed_node_id);
    }
}

#[test]
fn resuming_a_finished_run_executes_nothing() {
    let flow = six_step_flow();
    let mut sink = MemorySink::new();
    let clean = Runner::new().run_checkpointed(&flow, SharedStore::new(), &mut sink).unwrap();
    let out = Runner::new().resume(&flow, sink.last().unwrap(), &mut MemorySink::new()).unwrap();
    assert!(out.trace.is_empty());
    assert_eq!(out.store, clean.store);
    assert_eq!(out.terminal_action, "closed");
}

#[test]
fn a_structurally_different_flow_is_refused() {
    let flow = six_step_flow();
    let mut sink = MemorySink::new();
    Runner::new().run_checkpointed(&flow, SharedStore::new(), &mut sink).unwrap();
    let other = logging_chain("ledger", &["open", "close"]);
    let err = Runner::new().resume(&other, &sink.checkpoints[0], &mut MemorySink::new()).unwrap_err();
    assert!(matches!(err.error, FlowError::FingerprintMismatch { .. }));
}

#[test]
fn file_sink_survives_a_torn_final_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    let flow = six_step_flow();
    let mut sink = FileSink::append(&path).unwrap();
    Runner::new().run_checkpointed(&flow, SharedStore::new(), &mut CrashAfterFile { inner: &mut sink, keep: 3 }).unwrap_err();

    let mut text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    text.push_str("{\"action\":\"def");
    std::fs::write(&path, &text).unwrap();

    let last = read_last_checkpoint(&path).unwrap();
    assert_eq!(last.step_index, 2);
    assert_eq!(last_checkpoint(&text).unwrap(), last);
    let out = Runner::new().resume(&flow, &last, &mut FileSink::append(&path).unwrap()).unwrap();
    assert_eq!(out.store, Runner::new().run(&flow, SharedStore::new()).unwrap().store);
}

struct CrashAfterFile<'a> {
    inner: &'a mut FileSink,
    keep: usize,
}

impl CheckpointSink for CrashAfterFile<'_> {
    fn write(&mut self, checkpoint: &Checkpoint) -> Result<(), SinkError> {
        if self.keep == 0 {
            return Err(SinkError::Other("simulated crash".into()));
        }
        self.keep -= 1;
        self.inner.write(checkpoint)
    }
}

#[test]
fn stores_with_handles_cannot_be_checkpointed() {
    let flow = single("q", writer("inbox", Value::Handle(nodeflow::Queue::handle()), "default"));
    let err = Runner::new()
        .run_checkpointed(&flow, SharedStore::new(), &mut MemorySink::new())
        .unwrap_err();
    assert!(matches!(err.error, FlowError::Unserializable { .. }));
}
