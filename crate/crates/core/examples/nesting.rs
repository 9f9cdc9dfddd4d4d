//! A flow used as a node inside another flow.
//!
//! The inner flow's terminal action picks the outer successor, and the trace
//! names inner nodes by their path (`checkout/pay`).

use nodeflow::{extract_ndg, Action, FnNode, Flow, Graph, SharedStore, Value};

fn append(key: &'static str, entry: &'static str) -> FnNode {
    FnNode::new().post(move |store, _, _| {
        store.push(key, entry)?;
        Ok(Action::default())
    })
}

fn checkout() -> Flow {
    let mut g = Graph::new("checkout");
    let cart = g.add("cart", append("log", "cart totalled")).unwrap();
    let pay = g
        .add(
            "pay",
            FnNode::new().post(|store, _, _| {
                store.push("log", "paid")?;
                let member = store.get("member").and_then(Value::as_bool).unwrap_or(false);
                Ok(if member { "member" } else { "guest" }.into())
            }),
        )
        .unwrap();
    g.chain(&[cart, pay]).unwrap();
    Flow::new(g, cart).unwrap()
}

fn main() {
    let mut g = Graph::new("shop");
    let browse = g.add("browse", append("log", "browsed")).unwrap();
    let checkout = g.add("checkout", checkout()).unwrap();
    let points = g.add("award_points", append("log", "points awarded")).unwrap();
    let survey = g.add("send_survey", append("log", "survey sent")).unwrap();
    g.chain(&[browse, checkout]).unwrap();
    g.connect_on(checkout, "member", points).unwrap();
    g.connect_on(checkout, "guest", survey).unwrap();
    let shop = Flow::new(g, browse).unwrap();

    for member in [true, false] {
        let out = shop.run(SharedStore::from([("member", Value::Bool(member))])).unwrap();
        println!("member={member}");
        print!("{}", out.trace_tsv());
        println!();
    }

    let ndg = extract_ndg(&shop);
    println!("hierarchical nodes: {:?}", ndg.hierarchical());
}
