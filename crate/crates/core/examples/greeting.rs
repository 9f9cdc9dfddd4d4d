//! The smallest useful flow: greet someone, then record a mood.
//!
//! ```text
//! cargo run --example greeting -- Alice
//! ```

use nodeflow::patterns::build_greeting_flow;
use nodeflow::{SharedStore, Value};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "Alice".to_owned());
    let flow = build_greeting_flow();

    let outcome = flow
        .run(SharedStore::from([("name", Value::from(name))]))
        .expect("greeting flow cannot fail on text input");

    print!("{}", outcome.trace_tsv());
    println!("{}", outcome.store.to_canonical_string().unwrap());
}
