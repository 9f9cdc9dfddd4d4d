//! Median cost of the core operations as graphs grow.
//!
//! Build with `--release` for meaningful numbers.

use nodeflow::bench::{bench_scaling, rows_to_tsv, spread, BenchKind};

fn main() {
    let plan: [(BenchKind, &[usize]); 3] = [
        (BenchKind::BranchLookup, &[1, 10, 100, 1000]),
        (BenchKind::FlowCreation, &[10, 10_000]),
        (BenchKind::StepTransition, &[1, 100, 1000]),
    ];
    for (kind, sizes) in plan {
        let rows = bench_scaling(kind, sizes).unwrap();
        println!("# {kind} (max/min {:.2})", spread(&rows));
        print!("{}", rows_to_tsv(&rows));
    }
}
