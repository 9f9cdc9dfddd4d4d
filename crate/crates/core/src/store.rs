//! The shared key-value store and its canonical JSON encoding.
//!
//! The canonical form is compact JSON with object keys sorted by UTF-8 byte
//! order, integers as decimal literals and floats as the shortest decimal
//! that round-trips (always carrying a `.` or exponent, so the kind survives
//! decoding). This exact byte sequence is what checkpoints persist.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::value::{Queue, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("store keys must be non-empty")]
    EmptyKey,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonicalError {
    #[error("value at `{path}` is a runtime handle and cannot be serialized")]
    UnserializableHandle { path: String },
    #[error("float at `{path}` is not finite")]
    NonFiniteFloat { path: String },
    #[error("malformed document at line {line}, column {column}: {message}")]
    MalformedDocument {
        line: usize,
        column: usize,
        message: String,
    },
}

impl CanonicalError {
    fn malformed(message: impl Into<String>) -> Self {
        CanonicalError::MalformedDocument {
            line: 0,
            column: 0,
            message: message.into(),
        }
    }
}

/// The mutable state threaded through a flow run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SharedStore {
    entries: BTreeMap<String, Value>,
}

impl SharedStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut Value> {
        self.entries.get_mut(key)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) -> Result<(), StoreError> {
        let key = key.into();
        if key.is_empty() {
            return Err(StoreError::EmptyKey);
        }
        self.entries.insert(key, value.into());
        Ok(())
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }

    pub fn get_i64(&self, key: &str) -> Option<i64> {
        self.get(key).and_then(Value::as_i64)
    }

    /// Returns the queue stored under `key`, if that entry is a queue handle.
    pub fn queue(&self, key: &str) -> Option<&Queue> {
        self.get(key)?.as_handle()?.downcast::<Queue>()
    }

    /// Appends to the list stored under `key`, creating it if absent.
    pub fn push(&mut self, key: &str, value: impl Into<Value>) -> Result<(), StoreError> {
        if key.is_empty() {
            return Err(StoreError::EmptyKey);
        }
        let slot = self
            .entries
            .entry(key.to_owned())
            .or_insert_with(|| Value::List(Vec::new()));
        match slot {
            Value::List(items) => items.push(value.into()),
            other => *other = Value::List(vec![value.into()]),
        }
        Ok(())
    }

    /// Encodes the store as a canonical JSON object.
    pub fn to_canonical_bytes(&self) -> Result<Vec<u8>, CanonicalError> {
        let mut object = serde_json::Map::new();
        for (key, value) in &self.entries {
            object.insert(key.clone(), to_json(value, key)?);
        }
        Ok(serde_json::to_vec(&serde_json::Value::Object(object)).expect("in-memory JSON encoding"))
    }

    pub fn to_canonical_string(&self) -> Result<String, CanonicalError> {
        self.to_canonical_bytes()
            .map(|b| String::from_utf8(b).expect("JSON output is UTF-8"))
    }

    /// Decodes a store from a JSON object document.
    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CanonicalError> {
        let doc: serde_json::Value = serde_json::from_slice(bytes).map_err(json_error)?;
        let serde_json::Value::Object(object) = doc else {
            return Err(CanonicalError::malformed("top-level document must be an object"));
        };
        let mut entries = BTreeMap::new();
        for (key, value) in object {
            if key.is_empty() {
                return Err(CanonicalError::malformed("empty store key"));
            }
            let value = from_json(value)?;
            entries.insert(key, value);
        }
        Ok(Self { entries })
    }
}

impl FromIterator<(String, Value)> for SharedStore {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().filter(|(k, _)| !k.is_empty()).collect(),
        }
    }
}

impl<K: Into<String>, const N: usize> From<[(K, Value); N]> for SharedStore {
    fn from(pairs: [(K, Value); N]) -> Self {
        pairs.into_iter().map(|(k, v)| (k.into(), v)).collect()
    }
}

/// Encodes a single value canonically. `path` names the value in errors.
pub fn value_to_canonical_bytes(value: &Value, path: &str) -> Result<Vec<u8>, CanonicalError> {
    let json = to_json(value, path)?;
    Ok(serde_json::to_vec(&json).expect("in-memory JSON encoding"))
}

/// Parses any JSON value into a [`Value`].
pub fn value_from_json_bytes(bytes: &[u8]) -> Result<Value, CanonicalError> {
    let doc: serde_json::Value = serde_json::from_slice(bytes).map_err(json_error)?;
    from_json(doc)
}

fn json_error(e: serde_json::Error) -> CanonicalError {
    CanonicalError::MalformedDocument {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub(crate) fn to_json(value: &Value, path: &str) -> Result<serde_json::Value, CanonicalError> {
    Ok(match value {
        Value::Null => serde_json::Value::Null,
        Value::Bool(b) => serde_json::Value::Bool(*b),
        Value::Int(i) => serde_json::Value::from(*i),
        Value::Float(x) => match serde_json::Number::from_f64(*x) {
            Some(n) => serde_json::Value::Number(n),
            None => return Err(CanonicalError::NonFiniteFloat { path: path.to_owned() }),
        },
        Value::Text(s) => serde_json::Value::String(s.clone()),
        Value::List(items) => serde_json::Value::Array(
            items
                .iter()
                .enumerate()
                .map(|(i, v)| to_json(v, &format!("{path}[{i}]")))
                .collect::<Result<_, _>>()?,
        ),
        Value::Map(m) => {
            let mut object = serde_json::Map::new();
            for (k, v) in m {
                object.insert(k.clone(), to_json(v, &format!("{path}.{k}"))?);
            }
            serde_json::Value::Object(object)
        }
        Value::Handle(_) => {
            return Err(CanonicalError::UnserializableHandle { path: path.to_owned() })
        }
    })
}

pub(crate) fn from_json(doc: serde_json::Value) -> Result<Value, CanonicalError> {
    Ok(match doc {
        serde_json::Value::Null => Value::Null,
        serde_json::Value::Bool(b) => Value::Bool(b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::Int(i)
            } else if n.is_u64() {
                return Err(CanonicalError::malformed(format!("integer {n} out of 64-bit signed range")));
            } else {
                Value::Float(n.as_f64().ok_or_else(|| CanonicalError::malformed("bad number"))?)
            }
        }
        serde_json::Value::String(s) => Value::Text(s),
        serde_json::Value::Array(items) => {
            Value::List(items.into_iter().map(from_json).collect::<Result<_, _>>()?)
        }
        serde_json::Value::Object(object) => Value::Map(
            object
                .into_iter()
                .map(|(k, v)| from_json(v).map(|v| (k, v)))
                .collect::<Result<_, _>>()?,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Queue;

    fn parse(text: &str) -> SharedStore {
        SharedStore::from_canonical_bytes(text.as_bytes()).unwrap()
    }

    #[test]
    fn get_returns_bound_value() {
        let store = SharedStore::from([("name", Value::from("Alice"))]);
        assert_eq!(store.get("name"), Some(&Value::from("Alice")));
        assert_eq!(SharedStore::new().get("x"), None);
        let nested = parse(r#"{"a":{"b":[1,2]}}"#);
        assert_eq!(
            nested.get("a"),
            Some(&Value::map([("b", Value::List(vec![1.into(), 2.into()]))]))
        );
    }

    #[test]
    fn set_overwrites_and_rejects_empty_key() {
        let mut store = SharedStore::new();
        store.set("greeting", "Hello, Alice!").unwrap();
        assert_eq!(store.get_str("greeting"), Some("Hello, Alice!"));
        store.set("k", 1).unwrap();
        store.set("k", 2).unwrap();
        assert_eq!(store.get_i64("k"), Some(2));
        assert_eq!(store.set("", 1), Err(StoreError::EmptyKey));
    }

    #[test]
    fn handle_identity_is_preserved_by_the_store() {
        let handle = Queue::handle();
        let mut store = SharedStore::new();
        store.set("q", handle.clone()).unwrap();
        assert_eq!(store.get("q").unwrap().as_handle().unwrap().id(), handle.id());
        assert!(store.queue("q").is_some());
    }

    #[test]
    fn empty_store_encodes_as_empty_object() {
        assert_eq!(SharedStore::new().to_canonical_bytes().unwrap(), b"{}");
    }

    #[test]
    fn key_order_does_not_matter() {
        let mut a = SharedStore::new();
        a.set("b", 1).unwrap();
        a.set("a", 2).unwrap();
        let mut b = SharedStore::new();
        b.set("a", 2).unwrap();
        b.set("b", 1).unwrap();
        assert_eq!(a.to_canonical_bytes().unwrap(), b.to_canonical_bytes().unwrap());
        assert_eq!(a.to_canonical_string().unwrap(), r#"{"a":2,"b":1}"#);
    }

    #[test]
    fn nested_map_keys_are_sorted() {
        let store = SharedStore::from([("m", Value::map([("z", Value::Int(1)), ("a", Value::Null)]))]);
        assert_eq!(store.to_canonical_string().unwrap(), r#"{"m":{"a":null,"z":1}}"#);
    }

    #[test]
    fn handle_anywhere_is_rejected_with_its_path() {
        let store = SharedStore::from([("q", Value::from(Queue::handle()))]);
        assert_eq!(
            store.to_canonical_bytes(),
            Err(CanonicalError::UnserializableHandle { path: "q".into() })
        );
        let deep = SharedStore::from([(
            "a",
            Value::map([("b", Value::List(vec![Value::Null, Queue::handle().into()]))]),
        )]);
        assert_eq!(
            deep.to_canonical_bytes(),
            Err(CanonicalError::UnserializableHandle { path: "a.b[1]".into() })
        );
    }

    #[test]
    fn non_finite_floats_are_rejected() {
        let store = SharedStore::from([("x", Value::Float(f64::INFINITY))]);
        assert!(matches!(
            store.to_canonical_bytes(),
            Err(CanonicalError::NonFiniteFloat { .. })
        ));
    }

    #[test]
    fn floats_keep_their_kind() {
        let store = SharedStore::from([
            ("whole", Value::Float(1.0)),
            ("big", Value::Float(1e20)),
            ("neg_zero", Value::Float(-0.0)),
            ("int", Value::Int(1)),
        ]);
        let text = store.to_canonical_string().unwrap();
        assert_eq!(text, r#"{"big":1e+20,"int":1,"neg_zero":-0.0,"whole":1.0}"#);
        assert_eq!(parse(&text), store);
    }

    #[test]
    fn round_trip_of_mixed_list() {
        let store = SharedStore::from([(
            "x",
            Value::List(vec![1.into(), 2.5.into(), true.into(), Value::Null]),
        )]);
        let bytes = store.to_canonical_bytes().unwrap();
        assert_eq!(bytes, br#"{"x":[1,2.5,true,null]}"#);
        assert_eq!(SharedStore::from_canonical_bytes(&bytes).unwrap(), store);
    }

    #[test]
    fn truncated_input_is_malformed() {
        let err = SharedStore::from_canonical_bytes(br#"{"x":[1,2"#).unwrap_err();
        assert!(matches!(err, CanonicalError::MalformedDocument { .. }));
        assert!(SharedStore::from_canonical_bytes(b"[1]").is_err());
        assert!(SharedStore::from_canonical_bytes(br#"{"":1}"#).is_err());
        assert!(SharedStore::from_canonical_bytes(br#"{"x":18446744073709551615}"#).is_err());
    }

    #[test]
    fn strings_escape_deterministically() {
        let store = SharedStore::from([("s", Value::from("a\"b\\c\n\u{1}é"))]);
        let text = store.to_canonical_string().unwrap();
        assert_eq!(text, "{\"s\":\"a\\\"b\\\\c\\n\\u0001é\"}");
        assert_eq!(parse(&text), store);
    }

    #[test]
    fn push_creates_and_appends() {
        let mut store = SharedStore::new();
        store.push("xs", 1).unwrap();
        store.push("xs", 2).unwrap();
        assert_eq!(store.get("xs"), Some(&Value::List(vec![1.into(), 2.into()])));
    }
}
