//! Two cooperating non-blocking flows playing a word-guessing game.
//!
//! The hinter waits on `hinter_queue` for a guess and answers on
//! `guesser_queue` with a hint; the guesser does the reverse. Each node loops
//! on itself with `"continue"`. The exchange starts with `"START"` already in
//! `hinter_queue`.
//!
//! The guesser plays a fixed script. When a guess matches the target, or the
//! script runs out, it sends `"GAME_OVER"` and stops with `"won"` or
//! `"lost"`. The hinter stops with `"end"` when it reads `"GAME_OVER"`.
//!
//! Each flow runs on its own clone of the initial store. The clones share the
//! two queues, which is the only channel between them.

use std::sync::mpsc;
use std::time::Duration;

use async_trait::async_trait;
use thiserror::Error;

use super::PatternError;
use crate::flow::{Flow, FlowOutcome, RunError, Runner};
use crate::graph::{Graph, Step};
use crate::node::{Action, AsyncNode, NodeError};
use crate::store::SharedStore;
use crate::value::{Queue, Value};

pub const START: &str = "START";
pub const GAME_OVER: &str = "GAME_OVER";

fn queue<'s>(store: &'s SharedStore, key: &str) -> Result<&'s Queue, PatternError> {
    store.queue(key).ok_or_else(|| PatternError::WrongType {
        key: key.to_owned(),
        expected: "a queue",
    })
}

fn texts(store: &SharedStore, key: &str) -> Vec<Value> {
    store.get(key).and_then(Value::as_list).map(<[Value]>::to_vec).unwrap_or_default()
}

/// Builds a hint that reveals one more letter per round, masking any
/// forbidden word.
pub fn make_hint(target: &str, round: usize, forbidden: &[&str]) -> String {
    let shown: String = target.chars().take(round).collect();
    let mut hint = format!("{} letters, begins with \"{shown}\"", target.chars().count());
    for word in forbidden.iter().filter(|w| !w.is_empty()) {
        hint = hint.replace(word, &"*".repeat(word.chars().count()));
    }
    hint
}

struct Hinter;

#[async_trait]
impl AsyncNode for Hinter {
    async fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        let guess = queue(store, "hinter_queue")?.get().await;
        if guess.as_str() == Some(GAME_OVER) {
            return Ok(Value::Null);
        }
        Ok(Value::map([
            ("guess", guess),
            ("target", store.get("target_word").cloned().unwrap_or_default()),
            ("forbidden", Value::List(texts(store, "forbidden"))),
            ("round", Value::Int(store.get_i64("hints_sent").unwrap_or(0) + 1)),
        ]))
    }

    async fn exec(&self, input: &Value) -> Result<Value, NodeError> {
        if input.is_null() {
            return Ok(Value::Null);
        }
        let target = input.get("target").and_then(Value::as_str).unwrap_or_default();
        let round = input.get("round").and_then(Value::as_i64).unwrap_or(1) as usize;
        let forbidden: Vec<&str> = input
            .get("forbidden")
            .and_then(Value::as_list)
            .unwrap_or_default()
            .iter()
            .filter_map(Value::as_str)
            .collect();
        Ok(make_hint(target, round, &forbidden).into())
    }

    async fn post(&self, store: &mut SharedStore, input: Value, hint: Value) -> Result<Action, NodeError> {
        if hint.is_null() {
            return Ok("end".into());
        }
        if let Some(guess) = input.get("guess").filter(|g| g.as_str() != Some(START)) {
            store.push("past_guesses", guess.clone())?;
        }
        store.set("hints_sent", store.get_i64("hints_sent").unwrap_or(0) + 1)?;
        queue(store, "guesser_queue")?.put(hint).await;
        Ok("continue".into())
    }
}

struct Guesser;

#[async_trait]
impl AsyncNode for Guesser {
    async fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        let hint = queue(store, "guesser_queue")?.get().await;
        let pos = store.get_i64("guess_pos").unwrap_or(0) as usize;
        let next = texts(store, "guesses").get(pos).cloned().unwrap_or_default();
        Ok(Value::map([
            ("hint", hint),
            ("guess", next),
            ("target", store.get("target_word").cloned().unwrap_or_default()),
        ]))
    }

    async fn exec(&self, input: &Value) -> Result<Value, NodeError> {
        Ok(input.get("guess").cloned().unwrap_or_default())
    }

    async fn post(&self, store: &mut SharedStore, input: Value, guess: Value) -> Result<Action, NodeError> {
        store.set("hints_received", store.get_i64("hints_received").unwrap_or(0) + 1)?;
        if let Some(hint) = input.get("hint") {
            store.set("last_hint", hint.clone())?;
        }
        let hinter = queue(store, "hinter_queue")?.clone();
        let Some(text) = guess.as_str() else {
            hinter.put(GAME_OVER.into()).await;
            store.set("outcome", "lost")?;
            return Ok("lost".into());
        };
        store.set("guess_pos", store.get_i64("guess_pos").unwrap_or(0) + 1)?;
        if Some(text) == input.get("target").and_then(Value::as_str) {
            hinter.put(GAME_OVER.into()).await;
            store.set("outcome", "won")?;
            return Ok("won".into());
        }
        hinter.put(guess).await;
        Ok("continue".into())
    }
}

/// Both flows and the store they start from.
#[derive(Debug, Clone)]
pub struct WordGame {
    pub hinter: Flow,
    pub guesser: Flow,
    pub store: SharedStore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub won: bool,
    pub hints: i64,
    pub hinter: FlowOutcome,
    pub guesser: FlowOutcome,
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("game did not finish within {0:?}")]
    Timeout(Duration),
    #[error("{0}")]
    Flow(#[from] RunError),
}

fn self_loop(id: &str, node: impl AsyncNode + 'static) -> Flow {
    let mut graph = Graph::new(id);
    let n = graph.add(id, Step::non_blocking(node)).expect("fresh graph");
    graph.connect_on(n, "continue", n).expect("fresh wiring");
    Flow::new(graph, n).expect("start belongs to graph")
}

pub fn build_word_game(target: &str, forbidden: &[&str], scripted_guesses: &[&str]) -> WordGame {
    let hinter_queue = Queue::handle();
    hinter_queue
        .downcast::<Queue>()
        .expect("queue handle")
        .put_blocking(START.into());
    let list = |xs: &[&str]| Value::List(xs.iter().map(|x| Value::from(*x)).collect());
    let store = SharedStore::from([
        ("target_word", Value::from(target)),
        ("forbidden", list(forbidden)),
        ("guesses", list(scripted_guesses)),
        ("hinter_queue", Value::Handle(hinter_queue)),
        ("guesser_queue", Value::Handle(Queue::handle())),
    ]);
    WordGame {
        hinter: self_loop("hinter", Hinter),
        guesser: self_loop("guesser", Guesser),
        store,
    }
}

impl WordGame {
    /// Runs both flows concurrently on the current task.
    pub async fn run(self, runner: &Runner) -> Result<GameOutcome, RunError> {
        let (hinter, guesser) = futures::join!(
            runner.run_nonblocking(&self.hinter, self.store.clone()),
            runner.run_nonblocking(&self.guesser, self.store.clone()),
        );
        let (hinter, guesser) = (hinter?, guesser?);
        Ok(GameOutcome {
            won: guesser.terminal_action == "won",
            hints: hinter.store.get_i64("hints_sent").unwrap_or(0),
            hinter,
            guesser,
        })
    }

    /// Plays on a helper thread and gives up after `timeout`. A game that
    /// times out leaves its thread parked on a queue.
    pub fn play(self, runner: Runner, timeout: Duration) -> Result<GameOutcome, GameError> {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let _ = tx.send(futures::executor::block_on(self.run(&runner)));
        });
        match rx.recv_timeout(timeout) {
            Ok(result) => Ok(result?),
            Err(_) => Err(GameError::Timeout(timeout)),
        }
    }
}
