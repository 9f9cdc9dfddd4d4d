//! Checkpointing every step and resuming after a crash.
//!
//! The first run of `transform` fails. The checkpoints written up to that
//! point are enough to resume with a repaired node, and the resumed run ends
//! with exactly the store a clean run produces.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nodeflow::durability::read_last_checkpoint;
use nodeflow::{Action, FileSink, FnNode, Flow, Graph, Runner, SharedStore, Value};

fn pipeline(broken: Arc<AtomicBool>) -> Flow {
    let mut g = Graph::new("etl");
    let extract = g
        .add(
            "extract",
            FnNode::new().post(|s, _, _| {
                s.set("rows", Value::List(vec![3.into(), 1.into(), 2.into()]))?;
                Ok(Action::default())
            }),
        )
        .unwrap();
    let transform = g
        .add(
            "transform",
            FnNode::new()
                .prep(|s| Ok(s.get("rows").cloned().unwrap_or_default()))
                .exec(move |rows| {
                    if broken.load(Ordering::SeqCst) {
                        return Err("disk full".into());
                    }
                    let mut xs: Vec<i64> = rows.as_list().unwrap_or_default().iter().filter_map(Value::as_i64).collect();
                    xs.sort();
                    Ok(Value::List(xs.into_iter().map(Value::Int).collect()))
                })
                .post(|s, _, sorted| {
                    s.set("sorted", sorted)?;
                    Ok(Action::default())
                }),
        )
        .unwrap();
    let load = g
        .add(
            "load",
            FnNode::new().post(|s, _, _| {
                s.set("loaded", true)?;
                Ok(Action::default())
            }),
        )
        .unwrap();
    g.chain(&[extract, transform, load]).unwrap();
    Flow::new(g, extract).unwrap()
}

fn main() {
    let dir = std::env::temp_dir().join(format!("nodeflow-resume-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("etl.ckpt");
    let _ = std::fs::remove_file(&path);

    let broken = Arc::new(AtomicBool::new(true));
    let flow = pipeline(broken.clone());
    let runner = Runner::new().run_id("etl-1");

    let mut sink = FileSink::append(&path).unwrap();
    let crash = runner.run_checkpointed(&flow, SharedStore::new(), &mut sink).unwrap_err();
    println!("first run failed: {}", crash.error);
    println!("checkpoint file:\n{}", std::fs::read_to_string(&path).unwrap());

    broken.store(false, Ordering::SeqCst);
    let last = read_last_checkpoint(&path).unwrap();
    println!("resuming after step {} (`{}`)", last.step_index, last.completed_node_id);
    let resumed = runner.resume(&flow, &last, &mut sink).unwrap();
    print!("{}", resumed.trace_tsv());

    let clean = Runner::new().run(&flow, SharedStore::new()).unwrap();
    let (a, b) = (resumed.store.to_canonical_bytes().unwrap(), clean.store.to_canonical_bytes().unwrap());
    println!("resumed store: {}", String::from_utf8_lossy(&a));
    println!("matches a clean run: {}", a == b);
    let _ = std::fs::remove_dir_all(&dir);
}
