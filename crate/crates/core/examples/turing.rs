//! Compiling a Turing machine into a flow and checking it against a direct
//! interpreter.

use nodeflow::tm::{self, TuringMachine};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn main() {
    let machine = TuringMachine::unary_append();
    let flow = tm::compile_tm(&machine).unwrap();
    let tape = machine.parse_tape("111").unwrap();

    let out = flow.run(tape.to_store()).unwrap();
    print!("{}", out.trace_tsv());

    let tapes: Vec<_> = ["", "1", "111", "11111"].iter().map(|t| machine.parse_tape(t).unwrap()).collect();
    println!("{}", tm::verify_equivalence(&machine, &tapes, 500));

    let mut rng = StdRng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..50 {
        let m = tm::random_machine(&mut rng, 3, 2);
        let tapes: Vec<_> = (0..5).map(|_| tm::random_tape(&mut rng, &m, 8)).collect();
        mismatches += tm::verify_equivalence(&m, &tapes, 500).mismatch_count();
    }
    println!("random machines: 50, mismatches: {mismatches}");
}
