//! An order pipeline built from three nested sub-flows.
//!
//! ```text
//! payment >> inventory >> shipping
//! payment   -"invalid">>   reject_order
//! inventory -"backorder">> hold_order
//! ```
//!
//! `payment` is `validate -"valid">> charge >> record_ledger`. `validate`
//! returns `"invalid"` for a non-positive amount, which ends the sub-flow
//! with that action. `inventory` is `check_stock -"in_stock">> reserve`, where
//! `check_stock` returns `"backorder"` when any item is short. `shipping` is
//! `calculate_cost >> generate_label >> schedule_pickup`.
//!
//! Input: `order` is `{amount, items: [{sku, qty}]}` and `stock` maps sku to
//! quantity on hand.

use std::collections::BTreeMap;

use super::{require, PatternError};
use crate::flow::Flow;
use crate::graph::Graph;
use crate::node::{Action, FnNode, NodeError};
use crate::store::SharedStore;
use crate::value::Value;

fn order(store: &SharedStore) -> Result<Value, NodeError> {
    let order = require(store, "order")?;
    if order.as_map().is_none() {
        return Err(PatternError::WrongType {
            key: "order".into(),
            expected: "a map",
        }
        .into());
    }
    Ok(order.clone())
}

fn items(order: &Value) -> Vec<(String, i64)> {
    order
        .get("items")
        .and_then(Value::as_list)
        .unwrap_or_default()
        .iter()
        .map(|item| {
            let sku = item.get("sku").and_then(Value::as_str).unwrap_or_default().to_owned();
            (sku, item.get("qty").and_then(Value::as_i64).unwrap_or(1))
        })
        .collect()
}

fn set_status(store: &mut SharedStore, status: &str) -> Result<(), NodeError> {
    store.set("order_status", status)?;
    Ok(())
}

fn sub_flow(id: &str, nodes: Vec<(&str, FnNode)>, wiring: &[(usize, &str, usize)]) -> Flow {
    let mut graph = Graph::new(id);
    let refs: Vec<_> = nodes
        .into_iter()
        .map(|(id, node)| graph.add(id, node).expect("distinct ids"))
        .collect();
    for &(from, action, to) in wiring {
        graph.connect_on(refs[from], action, refs[to]).expect("fresh wiring");
    }
    Flow::new(graph, refs[0]).expect("start belongs to graph")
}

fn payment_flow() -> Flow {
    let validate = FnNode::new()
        .prep(order)
        .exec(|order| {
            let amount = order.get("amount").and_then(Value::as_i64).unwrap_or(0);
            Ok(Value::from(if amount > 0 { "valid" } else { "invalid" }))
        })
        .post(|store, _, verdict| {
            if verdict.as_str() == Some("invalid") {
                set_status(store, "payment_invalid")?;
            }
            Ok(Action::new(verdict.as_str().unwrap_or("invalid")))
        });
    let charge = FnNode::new()
        .prep(order)
        .exec(|order| Ok(Value::from(format!("txn-{}", order.get("amount").and_then(Value::as_i64).unwrap_or(0)))))
        .post(|store, _, txn| {
            store.set("transaction", txn)?;
            Ok(Action::default())
        });
    let ledger = FnNode::new()
        .prep(|store| Ok(require(store, "transaction")?.clone()))
        .post(|store, txn, _| {
            store.push("ledger", txn)?;
            set_status(store, "paid")?;
            Ok(Action::default())
        });
    sub_flow(
        "payment",
        vec![("validate", validate), ("charge", charge), ("record_ledger", ledger)],
        &[(0, "valid", 1), (1, "default", 2)],
    )
}

fn inventory_flow() -> Flow {
    let check = FnNode::new()
        .prep(|store| {
            let stock = store.get("stock").cloned().unwrap_or_else(|| Value::Map(BTreeMap::new()));
            Ok(Value::map([("order", order(store)?), ("stock", stock)]))
        })
        .exec(|input| {
            let order = input.get("order").cloned().unwrap_or_default();
            let stock = input.get("stock").cloned().unwrap_or_default();
            let short = items(&order)
                .into_iter()
                .any(|(sku, qty)| stock.get(&sku).and_then(Value::as_i64).unwrap_or(0) < qty);
            Ok(Value::from(if short { "backorder" } else { "in_stock" }))
        })
        .post(|_, _, verdict| Ok(Action::new(verdict.as_str().unwrap_or("backorder"))));
    let reserve = FnNode::new().prep(order).post(|store, order, _| {
        for (sku, qty) in items(&order) {
            let on_hand = store.get("stock").and_then(|s| s.get(&sku)).and_then(Value::as_i64).unwrap_or(0);
            if let Some(Value::Map(stock)) = store.get_mut("stock") {
                stock.insert(sku.clone(), Value::Int(on_hand - qty));
            }
            store.push("reserved", Value::map([("qty", Value::Int(qty)), ("sku", Value::from(sku))]))?;
        }
        set_status(store, "reserved")?;
        Ok(Action::default())
    });
    sub_flow("inventory", vec![("check_stock", check), ("reserve", reserve)], &[(0, "in_stock", 1)])
}

fn shipping_flow() -> Flow {
    let cost = FnNode::new()
        .prep(order)
        .exec(|order| {
            let units: i64 = items(order).iter().map(|(_, q)| q).sum();
            Ok(Value::Int(500 + 100 * units))
        })
        .post(|store, _, cost| {
            store.set("shipping_cost", cost)?;
            Ok(Action::default())
        });
    let label = FnNode::new()
        .prep(|store| {
            let order = order(store)?;
            Ok(Value::map([
                ("id", order.get("id").cloned().unwrap_or_else(|| Value::from("order"))),
                ("cost", require(store, "shipping_cost")?.clone()),
            ]))
        })
        .exec(|input| {
            let id = match input.get("id") {
                Some(Value::Text(t)) => t.clone(),
                Some(other) => format!("{other:?}"),
                None => String::new(),
            };
            Ok(Value::from(format!("LABEL-{id}-{}", input.get("cost").and_then(Value::as_i64).unwrap_or(0))))
        })
        .post(|store, _, label| {
            store.set("shipping_label", label)?;
            Ok(Action::default())
        });
    let pickup = FnNode::new().post(|store, _, _| {
        store.set("pickup", "scheduled")?;
        set_status(store, "shipped")?;
        Ok(Action::default())
    });
    sub_flow(
        "shipping",
        vec![("calculate_cost", cost), ("generate_label", label), ("schedule_pickup", pickup)],
        &[(0, "default", 1), (1, "default", 2)],
    )
}

/// Builds the pipeline. Terminal actions: `"default"` when shipped,
/// `"invalid"` for a rejected payment, `"backorder"` for missing stock.
pub fn build_order_pipeline() -> Flow {
    let mut graph = Graph::new("order");
    let payment = graph.add("payment", payment_flow()).expect("fresh graph");
    let inventory = graph.add("inventory", inventory_flow()).expect("fresh graph");
    let shipping = graph.add("shipping", shipping_flow()).expect("fresh graph");
    let reject = graph
        .add(
            "reject_order",
            FnNode::new().post(|store, _, _| {
                set_status(store, "rejected")?;
                Ok("invalid".into())
            }),
        )
        .expect("fresh graph");
    let hold = graph
        .add(
            "hold_order",
            FnNode::new().post(|store, _, _| {
                set_status(store, "backordered")?;
                Ok("backorder".into())
            }),
        )
        .expect("fresh graph");
    graph.chain(&[payment, inventory, shipping]).expect("fresh wiring");
    graph.connect_on(payment, "invalid", reject).expect("fresh wiring");
    graph.connect_on(inventory, "backorder", hold).expect("fresh wiring");
    Flow::new(graph, payment).expect("start belongs to graph")
}

/// A store holding one order and a stock table.
pub fn order_store(amount: i64, items: &[(&str, i64)], stock: &[(&str, i64)]) -> SharedStore {
    let items = items
        .iter()
        .map(|(sku, qty)| Value::map([("qty", Value::Int(*qty)), ("sku", Value::from(*sku))]))
        .collect::<Vec<_>>();
    SharedStore::from([
        (
            "order",
            Value::map([
                ("amount", Value::Int(amount)),
                ("id", Value::from("A1")),
                ("items", Value::List(items)),
            ]),
        ),
        ("stock", Value::map(stock.iter().map(|(sku, n)| (*sku, Value::Int(*n))))),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn happy_path_ships() {
        let out = build_order_pipeline()
            .run(order_store(2500, &[("widget", 2)], &[("widget", 5)]))
            .unwrap();
        assert_eq!(out.terminal_action, "default");
        assert_eq!(out.store.get_str("shipping_label"), Some("LABEL-A1-700"));
        assert_eq!(out.store.get_str("order_status"), Some("shipped"));
        assert_eq!(out.store.get("stock").unwrap().get("widget"), Some(&Value::Int(3)));
        let nodes: Vec<_> = out.trace.iter().map(|e| e.node.as_str()).collect();
        assert_eq!(
            nodes,
            [
                "payment/validate",
                "payment/charge",
                "payment/record_ledger",
                "inventory/check_stock",
                "inventory/reserve",
                "shipping/calculate_cost",
                "shipping/generate_label",
                "shipping/schedule_pickup",
            ]
        );
    }

    #[test]
    fn zero_amount_is_rejected_before_inventory() {
        let out = build_order_pipeline()
            .run(order_store(0, &[("widget", 1)], &[("widget", 5)]))
            .unwrap();
        assert_eq!(out.terminal_action, "invalid");
        assert!(!out.trace.iter().any(|e| e.node.starts_with("inventory/")));
        assert_eq!(out.store.get_str("order_status"), Some("rejected"));
        assert!(!out.store.contains("shipping_label"));
    }

    #[test]
    fn missing_stock_is_a_backorder() {
        let out = build_order_pipeline()
            .run(order_store(100, &[("widget", 1)], &[("widget", 0)]))
            .unwrap();
        assert_eq!(out.terminal_action, "backorder");
        assert!(!out.trace.iter().any(|e| e.node.starts_with("shipping/")));
        assert_eq!(out.store.get_str("order_status"), Some("backordered"));
    }
}
