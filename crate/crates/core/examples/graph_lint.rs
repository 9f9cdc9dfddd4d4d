//! Static checks on a wired graph, plus a dot rendering.

use nodeflow::ndg::{self, Ndg};
use nodeflow::patterns::build_order_pipeline;

fn main() {
    let mut sketch = Ndg::new("sketch");
    for id in ["start", "work", "orphan"] {
        sketch.add_node(id);
    }
    sketch.add_edge("start", "default", "work");
    sketch.add_edge("work", "retry", "start");
    sketch.add_edge("work", "done", "publish");

    println!("sketch:");
    for d in ndg::validate(&sketch, "start") {
        println!("  {d}");
    }

    let order = build_order_pipeline();
    let graph = ndg::extract_ndg(&order);
    let diagnostics = ndg::validate(&graph, "payment");
    println!("order pipeline: {} diagnostic(s), fingerprint {}", diagnostics.len(), graph.fingerprint());
    print!("{}", graph.to_dot());
}
