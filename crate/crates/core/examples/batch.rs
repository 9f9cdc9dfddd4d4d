//! Batch nodes and batch flows.
//!
//! A batch node maps exec over the list its prep returns. A batch flow runs a
//! whole inner flow once per parameter set, overlaying the parameters on the
//! store for that iteration and restoring whatever they shadowed afterwards.

use nodeflow::{
    Action, BatchFlow, BatchFlowLogic, BatchNode, FnNode, Flow, Graph, NodeError, ParamSet, SharedStore, Step, Value,
};

struct WordCounts;

impl BatchNode for WordCounts {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        Ok(store.get("files").cloned().unwrap_or(Value::List(vec![])))
    }

    fn exec(&self, file: &Value) -> Result<Value, NodeError> {
        let text = file.as_str().ok_or("file contents must be text")?;
        Ok(Value::Int(text.split_whitespace().count() as i64))
    }

    fn post(&self, store: &mut SharedStore, _: Vec<Value>, counts: Vec<Value>) -> Result<Action, NodeError> {
        store.set("counts", Value::List(counts))?;
        Ok(Action::default())
    }
}

/// One iteration per entry of `languages`, bound to the key `lang`.
struct PerLanguage;

impl BatchFlowLogic for PerLanguage {
    fn params(&self, store: &SharedStore) -> Result<Vec<ParamSet>, NodeError> {
        let langs = store.get("languages").and_then(Value::as_list).unwrap_or_default();
        langs
            .iter()
            .map(|l| ParamSet::new([("lang", l.clone())]).map_err(|e| e.to_string().into()))
            .collect()
    }
}

fn translate_flow() -> Flow {
    let translate = FnNode::new()
        .prep(|store| {
            let lang = store.get_str("lang").ok_or("no `lang` bound")?;
            Ok(Value::from(lang))
        })
        .exec(|lang| Ok(format!("readme.{}.md", lang.as_str().unwrap_or("?")).into()))
        .post(|store, _, file| {
            store.push("written", file)?;
            Ok(Action::default())
        });
    let mut g = Graph::new("translate");
    let n = g.add("translate", translate).unwrap();
    Flow::new(g, n).unwrap()
}

fn main() {
    let mut g = Graph::new("docs");
    let count = g.add("count_words", Step::batch(WordCounts)).unwrap();
    let translate = g
        .add("translate_all", BatchFlow::new("translate_all", translate_flow(), PerLanguage))
        .unwrap();
    g.chain(&[count, translate]).unwrap();
    let flow = Flow::new(g, count).unwrap();

    let store = SharedStore::from([
        (
            "files",
            Value::List(vec!["one two three".into(), "four".into(), "".into()]),
        ),
        ("languages", Value::List(vec!["de".into(), "fr".into(), "ja".into()])),
        ("lang", Value::from("en")),
    ]);
    let out = flow.run(store).unwrap();
    print!("{}", out.trace_tsv());
    println!("{}", out.store.to_canonical_string().unwrap());
    assert_eq!(out.store.get_str("lang"), Some("en"), "overlay is restored");
}
