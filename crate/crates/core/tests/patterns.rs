use std::sync::Arc;
use std::time::{Duration, Instant};

use nodeflow::patterns::agent::agent_store;
use nodeflow::patterns::order::order_store;
use nodeflow::patterns::rag::{chunk_text, cosine, MockEmbedder, UnigramEmbedder, CHUNK_OVERLAP, CHUNK_SIZE};
use nodeflow::patterns::word_game::make_hint;
use nodeflow::patterns::{
    build_agent_loop, build_greeting_flow, build_order_pipeline, build_rag_offline, build_rag_offline_with,
    build_rag_online, build_rag_online_with, build_word_game, Embedder,
};
use nodeflow::{extract_ndg, Runner, SharedStore, Value};

#[test]
fn greeting_for_alice() {
    let started = Instant::now();
    let out = build_greeting_flow()
        .run(SharedStore::from([("name", Value::from("Alice"))]))
        .unwrap();
    assert_eq!(out.store.get_str("greeting"), Some("Hello, Alice!"));
    assert_eq!(out.store.get_str("name"), Some("Alice"));
    assert!(started.elapsed() < Duration::from_secs(1));
}

/// Expected chunk count from the window arithmetic alone.
fn expected_chunks(len: usize) -> usize {
    if len == 0 {
        0
    } else if len <= CHUNK_SIZE {
        1
    } else {
        let stride = CHUNK_SIZE - CHUNK_OVERLAP;
        1 + (len - CHUNK_SIZE).div_ceil(stride)
    }
}

#[test]
fn chunk_counts_follow_window_arithmetic() {
    for len in [0, 1, 199, 200, 201, 360, 361, 400, 1000] {
        let text: String = "abcdefghij".chars().cycle().take(len).collect();
        let chunks = chunk_text(&text);
        assert_eq!(chunks.len(), expected_chunks(len), "length {len}");
        if let Some(last) = chunks.last() {
            assert!(text.ends_with(last.as_str()));
        }
    }
    assert_eq!(expected_chunks(400), 3);
}

fn four_hundred_chars() -> String {
    let words = ["graph", "node", "edge", "store", "flow", "batch", "retry", "queue"];
    let mut text = String::new();
    let mut i = 0;
    while text.chars().count() < 400 {
        text.push_str(words[i % words.len()]);
        text.push_str(if i % 3 == 0 { ". " } else { " " });
        i += 7;
    }
    text.chars().take(400).collect()
}

#[test]
fn offline_index_then_online_retrieval() {
    let doc = four_hundred_chars();
    let indexed = build_rag_offline()
        .run(SharedStore::from([("documents", Value::List(vec![doc.clone().into()]))]))
        .unwrap();
    let index = indexed.store.get("index").unwrap().clone();
    let entries = index.as_list().unwrap();
    assert_eq!(entries.len(), 3);
    assert!(!indexed.store.contains("chunks"));

    for (i, entry) in entries.iter().enumerate() {
        let query = entry.get("text").and_then(Value::as_str).unwrap();
        let out = build_rag_online()
            .run(SharedStore::from([("index", index.clone()), ("query", Value::from(query))]))
            .unwrap();
        let retrieved = out.store.get("retrieved").and_then(Value::as_list).unwrap();
        let top = retrieved[0].get("id").and_then(Value::as_str).unwrap();
        assert_eq!(top, format!("0000-{i:04}"));

        let q = MockEmbedder.embed(query);
        let oracle = cosine(&q, &MockEmbedder.embed(query));
        assert!((retrieved[0].get("score").and_then(Value::as_f64).unwrap() - oracle).abs() < 1e-12);
        let scores: Vec<f64> = retrieved.iter().map(|r| r.get("score").and_then(Value::as_f64).unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn swapping_the_embedder_keeps_the_graph() {
    let unigram: Arc<dyn Embedder> = Arc::new(UnigramEmbedder);
    assert_eq!(extract_ndg(&build_rag_offline()), extract_ndg(&build_rag_offline_with(unigram.clone())));
    assert_eq!(extract_ndg(&build_rag_online()), extract_ndg(&build_rag_online_with(unigram)));
}

#[test]
fn word_game_with_target_third_takes_three_hints() {
    let game = build_word_game("apple", &["fruit"], &["pear", "plum", "apple", "kiwi"]);
    let out = game.play(Runner::new(), Duration::from_secs(5)).unwrap();
    assert!(out.won);
    assert_eq!(out.hints, 3);
    assert_eq!(out.guesser.terminal_action, "won");
    assert_eq!(out.hinter.terminal_action, "end");
    assert_eq!(
        out.hinter.store.get("past_guesses"),
        Some(&Value::List(vec!["pear".into(), "plum".into()]))
    );
}

#[test]
fn word_game_loss_and_first_guess_win() {
    let first = build_word_game("sun", &[], &["sun"]).play(Runner::new(), Duration::from_secs(5)).unwrap();
    assert!(first.won);
    assert_eq!(first.hints, 1);

    let lost = build_word_game("moon", &[], &["a", "b"]).play(Runner::new(), Duration::from_secs(5)).unwrap();
    assert!(!lost.won);
    assert_eq!(lost.guesser.terminal_action, "lost");
    assert_eq!(lost.hints, 3);
}

#[test]
fn hints_never_leak_forbidden_words() {
    let hint = make_hint("treehouse", 9, &["tree", "house"]);
    assert!(!hint.contains("tree") && !hint.contains("house"), "{hint}");
}

#[test]
fn order_paths() {
    let pipeline = build_order_pipeline();

    let happy = pipeline.run(order_store(2500, &[("widget", 2)], &[("widget", 5)])).unwrap();
    assert!(happy.store.get_str("shipping_label").is_some());
    assert_eq!(happy.terminal_action, "default");

    let invalid = pipeline.run(order_store(0, &[("widget", 1)], &[("widget", 5)])).unwrap();
    assert_eq!(invalid.terminal_action, "invalid");
    assert!(!invalid.trace.iter().any(|e| e.node.starts_with("inventory/")));

    let backorder = pipeline.run(order_store(100, &[("widget", 1)], &[("widget", 0)])).unwrap();
    assert_eq!(backorder.terminal_action, "backorder");
    assert!(!backorder.store.contains("shipping_label"));
}

#[test]
fn order_pipeline_is_three_nested_sub_flows() {
    let ndg = extract_ndg(&build_order_pipeline());
    let hierarchical: Vec<_> = ndg.hierarchical().into_iter().collect();
    assert_eq!(hierarchical, ["inventory", "payment", "shipping"]);
}

#[test]
fn agent_loop_follows_its_script_and_cap() {
    let out = build_agent_loop(8).run(agent_store("map the repo", &["tool", "tool", "tool", "answer"])).unwrap();
    assert_eq!(out.store.get("observations").and_then(Value::as_list).unwrap().len(), 3);
    assert_eq!(out.store.get_str("answer"), Some("ANSWER[map the repo|3 observation(s)]"));

    let capped = build_agent_loop(2).run(agent_store("t", &["tool"; 10])).unwrap();
    assert_eq!(capped.store.get("observations").and_then(Value::as_list).unwrap().len(), 2);
    assert!(capped.store.contains("answer"));
}
