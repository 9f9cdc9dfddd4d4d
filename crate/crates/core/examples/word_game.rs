//! Two flows talking over queues in the shared store.
//!
//! The hinter and the guesser each loop on their own non-blocking node and
//! block on their inbox queue between turns.

use std::time::Duration;

use nodeflow::patterns::build_word_game;
use nodeflow::Runner;

fn main() {
    let game = build_word_game("apple", &["fruit", "red", "tree"], &["cherry", "pear", "apple", "plum"]);
    let outcome = game.play(Runner::new(), Duration::from_secs(5)).expect("scripted game finishes");

    println!("hinter:");
    print!("{}", outcome.hinter.trace_tsv());
    println!("guesser:");
    print!("{}", outcome.guesser.trace_tsv());
    println!(
        "{} after {} hint(s)",
        if outcome.won { "won" } else { "lost" },
        outcome.hints
    );
    if let Some(past) = outcome.hinter.store.get("past_guesses") {
        println!("guesses seen by the hinter: {past:?}");
    }
}
