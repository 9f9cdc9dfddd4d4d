//! An order pipeline made of payment, inventory and shipping sub-flows.

use nodeflow::patterns::build_order_pipeline;
use nodeflow::patterns::order::order_store;

fn main() {
    let pipeline = build_order_pipeline();
    let cases = [
        ("happy path", order_store(2500, &[("widget", 2)], &[("widget", 5)])),
        ("zero amount", order_store(0, &[("widget", 1)], &[("widget", 5)])),
        ("out of stock", order_store(900, &[("widget", 3)], &[("widget", 1)])),
    ];
    for (label, store) in cases {
        let out = pipeline.run(store).unwrap();
        println!("== {label}: terminal action `{}`", out.terminal_action);
        print!("{}", out.trace_tsv());
        println!(
            "status={} label={}\n",
            out.store.get_str("order_status").unwrap_or("-"),
            out.store.get_str("shipping_label").unwrap_or("-")
        );
    }
}
