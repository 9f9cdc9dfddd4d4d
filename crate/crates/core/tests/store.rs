mod common;

use common::*;
use nodeflow::{CanonicalError, Queue, SharedStore, Value};
use proptest::prelude::*;

#[test]
fn thousand_entries_round_trip_byte_for_byte() {
    let mut store = SharedStore::new();
    for i in 0..1000i64 {
        let value = match i % 5 {
            0 => Value::Int(i * 7919 - 3_000_000),
            1 => Value::Float(i as f64 / 7.0),
            2 => Value::from(format!("entry \"{i}\"\n\u{e9}")),
            3 => Value::List(vec![Value::Bool(i % 2 == 0), Value::Null]),
            _ => Value::map([("n", Value::Int(i)), ("half", Value::Float(i as f64 * 0.5))]),
        };
        store.set(format!("key{i:04}"), value).unwrap();
    }
    let bytes = store.to_canonical_bytes().unwrap();
    let back = SharedStore::from_canonical_bytes(&bytes).unwrap();
    assert_eq!(back, store);
    assert_eq!(back.to_canonical_bytes().unwrap(), bytes);
}

#[test]
fn keys_are_sorted_and_output_is_compact() {
    let store = SharedStore::from([
        ("zeta", Value::Int(1)),
        ("alpha", Value::map([("y", Value::Null), ("b", Value::Bool(true))])),
    ]);
    assert_eq!(store.to_canonical_string().unwrap(), r#"{"alpha":{"b":true,"y":null},"zeta":1}"#);
}

#[test]
fn integers_and_floats_keep_their_kind() {
    let store = SharedStore::from([("i", Value::Int(2)), ("f", Value::Float(2.0))]);
    let back = SharedStore::from_canonical_bytes(&store.to_canonical_bytes().unwrap()).unwrap();
    assert_eq!(back.get("i"), Some(&Value::Int(2)));
    assert_eq!(back.get("f"), Some(&Value::Float(2.0)));
}

#[test]
fn handles_are_refused_with_their_path() {
    let store = SharedStore::from([("inbox", Value::List(vec![Value::Int(1), Value::Handle(Queue::handle())]))]);
    assert_eq!(
        store.to_canonical_bytes(),
        Err(CanonicalError::UnserializableHandle { path: "inbox[1]".into() })
    );
}

#[test]
fn non_finite_floats_are_refused() {
    let store = SharedStore::from([("x", Value::Float(f64::NAN))]);
    assert!(matches!(store.to_canonical_bytes(), Err(CanonicalError::NonFiniteFloat { .. })));
}

#[test]
fn malformed_documents_are_rejected() {
    for doc in ["", "[1]", "{\"a\":", "{\"\":1}"] {
        assert!(SharedStore::from_canonical_bytes(doc.as_bytes()).is_err(), "{doc:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn round_trip(store in arb_store()) {
        let bytes = store.to_canonical_bytes().unwrap();
        let back = SharedStore::from_canonical_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &store);
        prop_assert_eq!(back.to_canonical_bytes().unwrap(), bytes);
    }

    #[test]
    fn equal_stores_encode_identically(entries in prop::collection::vec((arb_key(), arb_value()), 0..8)) {
        let forward: SharedStore = entries.iter().cloned().collect();
        let mut reversed = SharedStore::new();
        let mut seen = std::collections::BTreeSet::new();
        for (k, v) in entries.iter().rev() {
            if seen.insert(k.clone()) {
                reversed.set(k.clone(), v.clone()).unwrap();
            }
        }
        prop_assert_eq!(&forward, &reversed);
        prop_assert_eq!(forward.to_canonical_bytes().unwrap(), reversed.to_canonical_bytes().unwrap());
    }
}
