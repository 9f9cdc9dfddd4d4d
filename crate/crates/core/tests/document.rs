use nodeflow::cli::document::{build_flow, EdgeSpec, NodeSpec, RetrySpec};
use nodeflow::cli::{emit, parse_document, raw_ndg, DocumentError, WorkflowDocument};
use nodeflow::{extract_ndg, SharedStore};
use proptest::prelude::*;
use serde_json::json;

fn node(id: String, kind_pick: u8, retry: Option<(u32, u64)>) -> NodeSpec {
    let (kind, params) = match kind_pick % 3 {
        0 => ("noop", json!({})),
        1 => ("set", json!({ "key": id.clone(), "value": [1, "two", { "x": null }] })),
        _ => ("append", json!({ "key": "log", "value": id.clone() })),
    };
    NodeSpec {
        id,
        kind: kind.into(),
        params: params.as_object().unwrap().clone(),
        retry: retry.map(|(max_retries, wait_ms)| RetrySpec { max_retries, wait_ms }),
    }
}

/// A document of `n` nodes named `{prefix}n0..`, wired by `wiring`, with an
/// optional nested flow appended as one more id.
fn arb_flat(prefix: &'static str) -> impl Strategy<Value = WorkflowDocument> {
    (1usize..6).prop_flat_map(move |n| {
        (
            prop::collection::vec((any::<u8>(), prop::option::of((1u32..4, 0u64..20))), n),
            prop::collection::btree_map(
                (0..n, prop_oneof![Just("default".to_owned()), "[a-c]{1,3}"]),
                0..n,
                0..(2 * n),
            ),
            0..n,
        )
            .prop_map(move |(nodes, wiring, start)| WorkflowDocument {
                id: None,
                start: format!("{prefix}n{start}"),
                nodes: nodes
                    .into_iter()
                    .enumerate()
                    .map(|(i, (kind, retry))| node(format!("{prefix}n{i}"), kind, retry))
                    .collect(),
                edges: wiring
                    .into_iter()
                    .map(|((from, action), to)| EdgeSpec {
                        from: format!("{prefix}n{from}"),
                        action,
                        to: format!("{prefix}n{to}"),
                    })
                    .collect(),
                flows: vec![],
            })
    })
}

fn arb_document() -> impl Strategy<Value = WorkflowDocument> {
    (arb_flat(""), prop::option::of(arb_flat("sub_")), any::<bool>()).prop_map(|(mut doc, sub, link)| {
        if let Some(mut sub) = sub {
            sub.id = Some("sub".into());
            if link {
                doc.edges.retain(|e| !(e.from == "n0" && e.action == "into_sub"));
                doc.edges.push(EdgeSpec {
                    from: "n0".into(),
                    action: "into_sub".into(),
                    to: "sub".into(),
                });
            }
            doc.flows.push(sub);
        }
        doc
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn emit_then_parse_preserves_the_graph(doc in arb_document()) {
        let text = emit(&doc);
        let reparsed = parse_document(text.as_bytes()).unwrap();
        prop_assert_eq!(&reparsed, &doc);
        prop_assert_eq!(emit(&reparsed), text);

        let built = build_flow(&doc).unwrap();
        let rebuilt = build_flow(&reparsed).unwrap();
        prop_assert_eq!(extract_ndg(&built), extract_ndg(&rebuilt));
        prop_assert_eq!(raw_ndg(&doc), extract_ndg(&built));
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = parse_document(&bytes);
    }
}

#[test]
fn set_then_template_renders() {
    let doc = br#"{
        "start": "who",
        "nodes": [
            {"id": "who", "kind": "set", "params": {"key": "name", "value": "Ada"}},
            {"id": "say", "kind": "template", "params": {"template": "Hi {name}, {n} new", "target": "msg"}}
        ],
        "edges": [{"from": "who", "to": "say"}]
    }"#;
    let flow = nodeflow::cli::parse_workflow(doc).unwrap();
    let out = flow.run(SharedStore::from([("n", 3.into())])).unwrap();
    assert_eq!(out.store.get_str("msg"), Some("Hi Ada, 3 new"));
}

#[test]
fn errors_point_at_the_offending_entry() {
    type Case = (&'static str, fn(&DocumentError) -> bool);
    let cases: [Case; 5] = [
        (
            r#"{"start":"a","nodes":[{"id":"a","kind":"noop"}],"edges":[{"from":"a","to":"b"}]}"#,
            |e| matches!(e, DocumentError::UnresolvedId { path, id } if path == "edges[0].to" && id == "b"),
        ),
        (
            r#"{"start":"a","nodes":[{"id":"a","kind":"teleport"}]}"#,
            |e| matches!(e, DocumentError::UnknownKind { path, .. } if path == "nodes[0]"),
        ),
        (
            r#"{"start":"a","nodes":[{"id":"a","kind":"noop"},{"id":"a","kind":"noop"}]}"#,
            |e| matches!(e, DocumentError::DuplicateId { .. }),
        ),
        (
            r#"{"start":"a","nodes":[{"id":"a","kind":"noop"}],"edges":[{"from":"a","to":"a"},{"from":"a","action":"default","to":"a"}]}"#,
            |e| matches!(e, DocumentError::DuplicateBinding { .. }),
        ),
        (
            "{\"start\":\"a\",\n\"nodes\": [}",
            |e| matches!(e, DocumentError::Parse { line: 2, .. }),
        ),
    ];
    for (doc, check) in cases {
        let err = nodeflow::cli::parse_workflow(doc.as_bytes()).unwrap_err();
        assert!(check(&err), "{doc}: {err:?}");
    }
}

#[test]
fn nested_flow_is_hierarchical() {
    let doc = br#"{
        "start": "inner",
        "flows": [{"id": "inner", "start": "x", "nodes": [{"id": "x", "kind": "noop"}]}],
        "nodes": [{"id": "after", "kind": "noop"}],
        "edges": [{"from": "inner", "to": "after"}]
    }"#;
    let flow = nodeflow::cli::parse_workflow(doc).unwrap();
    let ndg = extract_ndg(&flow);
    assert!(ndg.hierarchical().contains("inner"));
    let out = flow.run(SharedStore::new()).unwrap();
    assert_eq!(out.trace.iter().map(|e| e.node.as_str()).collect::<Vec<_>>(), ["inner/x", "after"]);
}

#[test]
fn shipped_workflows_parse_and_round_trip() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("workflows");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        let doc = parse_document(&bytes).unwrap();
        let flow = build_flow(&doc).unwrap();
        let again = parse_document(emit(&doc).as_bytes()).unwrap();
        assert_eq!(extract_ndg(&build_flow(&again).unwrap()), extract_ndg(&flow));
        seen += 1;
    }
    assert!(seen >= 8);
}
