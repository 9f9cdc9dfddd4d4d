//! Turing machines compiled to flows, checked against a direct interpreter.
//!
//! Each non-halting state becomes one node. The node's prep reads the symbol
//! under the head from the store, exec looks up the transition, and post
//! writes the cell, moves the head and returns the next state's name as its
//! action. Edges bind those names to the matching state nodes; transitions
//! into halting states have no edge, so the flow terminates there.
//!
//! The tape lives in the store under `tape` (a map from decimal cell index to
//! symbol, absent cells being blank) and `head` (an integer).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{Flow, FlowError, Runner};
use crate::graph::{Graph, GraphError, NodeRef};
use crate::node::{Action, Node, NodeError};
use crate::store::SharedStore;
use crate::value::Value;

pub const TAPE_KEY: &str = "tape";
pub const HEAD_KEY: &str = "head";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TmError {
    #[error("no transition for state `{state}` on symbol `{symbol}`")]
    IncompleteDelta { state: String, symbol: String },
    #[error("duplicate transition for state `{state}` on symbol `{symbol}`")]
    DuplicateTransition { state: String, symbol: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("move must be `L` or `R`, got `{0}`")]
    BadMove(String),
    #[error("blank symbol `{0}` is not in the alphabet")]
    BlankNotInAlphabet(String),
    #[error("start state `{0}` is halting; there is nothing to compile")]
    StartHalts(String),
    #[error("machine did not halt within {max_steps} steps")]
    StepLimitExceeded { max_steps: usize },
    #[error("invalid machine description: {0}")]
    Parse(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Machine description as stored in JSON files. `delta` entries are
/// `[state, read, write, move, next]` with `move` one of `L`/`R`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TmSpec {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub blank: String,
    #[serde(default)]
    pub delta: Vec<(String, String, String, String, String)>,
    pub start: String,
    pub halting: Vec<String>,
}

impl TmSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self, TmError> {
        serde_json::from_slice(bytes).map_err(|e| TmError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec is plain data")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Left,
    Right,
}

impl Move {
    fn offset(self) -> i64 {
        match self {
            Move::Left => -1,
            Move::Right => 1,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Move::Left => "L",
            Move::Right => "R",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub write: String,
    pub shift: Move,
    pub next: String,
}

/// A validated machine with a total transition function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuringMachine {
    states: Vec<String>,
    alphabet: Vec<String>,
    blank: String,
    delta: BTreeMap<(String, String), Transition>,
    start: String,
    halting: BTreeSet<String>,
}

impl TuringMachine {
    pub fn from_spec(spec: &TmSpec) -> Result<Self, TmError> {
        let states: BTreeSet<&str> = spec.states.iter().map(String::as_str).collect();
        let alphabet: BTreeSet<&str> = spec.alphabet.iter().map(String::as_str).collect();
        let known_state = |s: &str| {
            if states.contains(s) {
                Ok(())
            } else {
                Err(TmError::UnknownState(s.to_owned()))
            }
        };
        let known_symbol = |s: &str| {
            if alphabet.contains(s) {
                Ok(())
            } else {
                Err(TmError::UnknownSymbol(s.to_owned()))
            }
        };
        if !alphabet.contains(spec.blank.as_str()) {
            return Err(TmError::BlankNotInAlphabet(spec.blank.clone()));
        }
        known_state(&spec.start)?;
        for h in &spec.halting {
            known_state(h)?;
        }
        let mut delta = BTreeMap::new();
        for (state, read, write, shift, next) in &spec.delta {
            known_state(state)?;
            known_state(next)?;
            known_symbol(read)?;
            known_symbol(write)?;
            let shift = match shift.as_str() {
                "L" => Move::Left,
                "R" => Move::Right,
                other => return Err(TmError::BadMove(other.to_owned())),
            };
            let t = Transition {
                write: write.clone(),
                shift,
                next: next.clone(),
            };
            if delta.insert((state.clone(), read.clone()), t).is_some() {
                return Err(TmError::DuplicateTransition {
                    state: state.clone(),
                    symbol: read.clone(),
                });
            }
        }
        let halting: BTreeSet<String> = spec.halting.iter().cloned().collect();
        for state in spec.states.iter().filter(|s| !halting.contains(*s)) {
            for symbol in &spec.alphabet {
                if !delta.contains_key(&(state.clone(), symbol.clone())) {
                    return Err(TmError::IncompleteDelta {
                        state: state.clone(),
                        symbol: symbol.clone(),
                    });
                }
            }
        }
        Ok(Self {
            states: dedup(&spec.states),
            alphabet: dedup(&spec.alphabet),
            blank: spec.blank.clone(),
            delta,
            start: spec.start.clone(),
            halting,
        })
    }

    pub fn to_spec(&self) -> TmSpec {
        TmSpec {
            states: self.states.clone(),
            alphabet: self.alphabet.clone(),
            blank: self.blank.clone(),
            delta: self
                .delta
                .iter()
                .map(|((s, r), t)| (s.clone(), r.clone(), t.write.clone(), t.shift.as_str().to_owned(), t.next.clone()))
                .collect(),
            start: self.start.clone(),
            halting: self.halting.iter().cloned().collect(),
        }
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn blank(&self) -> &str {
        &self.blank
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn is_halting(&self, state: &str) -> bool {
        self.halting.contains(state)
    }

    pub fn transition(&self, state: &str, symbol: &str) -> Option<&Transition> {
        self.delta.get(&(state.to_owned(), symbol.to_owned()))
    }

    pub fn transitions(&self) -> impl Iterator<Item = (&str, &str, &Transition)> {
        self.delta.iter().map(|((s, r), t)| (s.as_str(), r.as_str(), t))
    }

    /// Moves right over 1s and appends one more: `111` becomes `1111`.
    pub fn unary_append() -> Self {
        Self::from_spec(&TmSpec {
            states: vec!["scan".into(), "halt".into()],
            alphabet: vec!["_".into(), "1".into()],
            blank: "_".into(),
            delta: vec![
                tuple("scan", "1", "1", "R", "scan"),
                tuple("scan", "_", "1", "R", "halt"),
            ],
            start: "scan".into(),
            halting: vec!["halt".into()],
        })
        .expect("built-in machine is valid")
    }

    /// Inverts every bit up to the first blank: `0110` becomes `1001`.
    pub fn binary_flipper() -> Self {
        Self::from_spec(&TmSpec {
            states: vec!["flip".into(), "halt".into()],
            alphabet: vec!["_".into(), "0".into(), "1".into()],
            blank: "_".into(),
            delta: vec![
                tuple("flip", "0", "1", "R", "flip"),
                tuple("flip", "1", "0", "R", "flip"),
                tuple("flip", "_", "_", "R", "halt"),
            ],
            start: "flip".into(),
            halting: vec!["halt".into()],
        })
        .expect("built-in machine is valid")
    }

    /// Parses tape text: one symbol per character when every symbol is a
    /// single character, otherwise comma-separated symbols.
    pub fn parse_tape(&self, text: &str) -> Result<Tape, TmError> {
        let single = self.alphabet.iter().all(|s| s.chars().count() == 1);
        let symbols: Vec<String> = if text.is_empty() {
            Vec::new()
        } else if single {
            text.chars().map(String::from).collect()
        } else {
            text.split(',').map(str::to_owned).collect()
        };
        let mut tape = Tape::default();
        for (i, s) in symbols.into_iter().enumerate() {
            if !self.alphabet.contains(&s) {
                return Err(TmError::UnknownSymbol(s));
            }
            tape.set(i as i64, s, &self.blank);
        }
        Ok(tape)
    }

    pub fn render_tape(&self, tape: &Tape) -> String {
        let single = self.alphabet.iter().all(|s| s.chars().count() == 1);
        let (Some(lo), Some(hi)) = (tape.cells.keys().next(), tape.cells.keys().next_back()) else {
            return String::new();
        };
        let symbols: Vec<&str> = (*lo..=*hi).map(|i| tape.get(i, &self.blank)).collect();
        symbols.join(if single { "" } else { "," })
    }
}

fn dedup(items: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items.iter().filter(|s| seen.insert(s.as_str())).cloned().collect()
}

fn tuple(s: &str, r: &str, w: &str, m: &str, n: &str) -> (String, String, String, String, String) {
    (s.into(), r.into(), w.into(), m.into(), n.into())
}

/// A sparse two-sided tape. Blank cells are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tape {
    cells: BTreeMap<i64, String>,
}

impl Tape {
    pub fn get<'a>(&'a self, index: i64, blank: &'a str) -> &'a str {
        self.cells.get(&index).map_or(blank, String::as_str)
    }

    pub fn set(&mut self, index: i64, symbol: String, blank: &str) {
        if symbol == blank {
            self.cells.remove(&index);
        } else {
            self.cells.insert(index, symbol);
        }
    }

    pub fn cells(&self) -> &BTreeMap<i64, String> {
        &self.cells
    }

    /// The store encoding: a map from decimal index to symbol.
    pub fn to_value(&self) -> Value {
        Value::Map(
            self.cells
                .iter()
                .map(|(i, s)| (i.to_string(), Value::from(s.as_str())))
                .collect(),
        )
    }

    /// Reads the store encoding back, dropping blank cells.
    pub fn from_value(value: &Value, blank: &str) -> Option<Self> {
        let mut tape = Tape::default();
        for (k, v) in value.as_map()? {
            tape.set(k.parse().ok()?, v.as_str()?.to_owned(), blank);
        }
        Some(tape)
    }

    pub fn to_store(&self) -> SharedStore {
        SharedStore::from([(TAPE_KEY, self.to_value()), (HEAD_KEY, Value::Int(0))])
    }
}

/// The node for one machine state.
#[derive(Debug, Clone)]
pub struct TmStateNode {
    state: String,
    blank: String,
    transitions: HashMap<String, Transition>,
}

impl TmStateNode {
    pub fn new(machine: &TuringMachine, state: &str) -> Self {
        Self {
            state: state.to_owned(),
            blank: machine.blank.clone(),
            transitions: machine
                .transitions()
                .filter(|(s, _, _)| *s == state)
                .map(|(_, r, t)| (r.to_owned(), t.clone()))
                .collect(),
        }
    }

    pub fn state(&self) -> &str {
        &self.state
    }
}

pub(crate) fn read_head(store: &SharedStore) -> Result<i64, NodeError> {
    store.get_i64(HEAD_KEY).ok_or_else(|| "store has no integer `head`".into())
}

impl Node for TmStateNode {
    fn prep(&self, store: &SharedStore) -> Result<Value, NodeError> {
        let head = read_head(store)?;
        let symbol = store
            .get(TAPE_KEY)
            .and_then(|t| t.get(&head.to_string()))
            .and_then(Value::as_str)
            .unwrap_or(&self.blank);
        Ok(Value::from(symbol))
    }

    fn exec(&self, symbol: &Value) -> Result<Value, NodeError> {
        let symbol = symbol.as_str().ok_or("tape symbol is not text")?;
        let t = self
            .transitions
            .get(symbol)
            .ok_or_else(|| format!("no transition for `{}` on `{symbol}`", self.state))?;
        Ok(Value::map([
            ("write", Value::from(t.write.as_str())),
            ("move", Value::Int(t.shift.offset())),
            ("next", Value::from(t.next.as_str())),
        ]))
    }

    fn post(&self, store: &mut SharedStore, _symbol: Value, decision: Value) -> Result<Action, NodeError> {
        let head = read_head(store)?;
        let write = decision.get("write").cloned().ok_or("missing write")?;
        let shift = decision.get("move").and_then(Value::as_i64).ok_or("missing move")?;
        let next = decision.get("next").and_then(Value::as_str).ok_or("missing next")?;
        match store.get_mut(TAPE_KEY) {
            Some(Value::Map(cells)) => {
                cells.insert(head.to_string(), write);
            }
            _ => store.set(TAPE_KEY, Value::map([(head.to_string(), write)]))?,
        }
        store.set(HEAD_KEY, head + shift)?;
        Ok(Action::from(next))
    }
}

/// Compiles `machine` into a flow with one node per non-halting state.
pub fn compile_tm(machine: &TuringMachine) -> Result<Flow, TmError> {
    if machine.is_halting(&machine.start) {
        return Err(TmError::StartHalts(machine.start.clone()));
    }
    let mut graph = Graph::new("turing_machine");
    let mut nodes: BTreeMap<&str, NodeRef> = BTreeMap::new();
    for state in machine.states.iter().filter(|s| !machine.is_halting(s)) {
        nodes.insert(state, graph.add(state.clone(), TmStateNode::new(machine, state))?);
    }
    let mut wired: BTreeSet<(&str, &str)> = BTreeSet::new();
    for (state, _, t) in machine.transitions() {
        if machine.is_halting(&t.next) || !wired.insert((state, &t.next)) {
            continue;
        }
        graph.connect_on(nodes[state], t.next.as_str(), nodes[t.next.as_str()])?;
    }
    Ok(Flow::new(graph, nodes[machine.start.as_str()])?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    pub tape: Tape,
    pub head: i64,
    pub state: String,
    pub steps: usize,
}

/// Direct small-step interpreter, independent of the flow engine.
pub fn interpret_tm(machine: &TuringMachine, tape: &Tape, max_steps: usize) -> Result<Interpretation, TmError> {
    let mut tape = tape.clone();
    let mut head = 0i64;
    let mut state = machine.start.clone();
    let mut steps = 0;
    while !machine.is_halting(&state) {
        if steps == max_steps {
            return Err(TmError::StepLimitExceeded { max_steps });
        }
        let symbol = tape.get(head, &machine.blank).to_owned();
        let t = machine.transition(&state, &symbol).ok_or_else(|| TmError::IncompleteDelta {
            state: state.clone(),
            symbol: symbol.clone(),
        })?;
        tape.set(head, t.write.clone(), &machine.blank);
        head += t.shift.offset();
        state = t.next.clone();
        steps += 1;
    }
    Ok(Interpretation { tape, head, state, steps })
}

/// What one side of the comparison observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TmOutcome {
    Halted { tape: Tape, steps: usize },
    StepLimit,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseReport {
    pub input: Tape,
    pub engine: TmOutcome,
    pub oracle: TmOutcome,
}

impl CaseReport {
    pub fn agrees(&self) -> bool {
        self.engine == self.oracle
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub cases: Vec<CaseReport>,
}

impl EquivalenceReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &CaseReport> {
        self.cases.iter().filter(|c| !c.agrees())
    }

    pub fn mismatch_count(&self) -> usize {
        self.mismatches().count()
    }

    pub fn halted_count(&self) -> usize {
        self.cases
            .iter()
            .filter(|c| matches!(c.oracle, TmOutcome::Halted { .. }))
            .count()
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "cases: {}, halted: {}, mismatches: {}",
            self.cases.len(),
            self.halted_count(),
            self.mismatch_count()
        )?;
        for m in self.mismatches() {
            writeln!(f, "mismatch on {:?}: engine {:?} vs oracle {:?}", m.input, m.engine, m.oracle)?;
        }
        Ok(())
    }
}

/// Runs the compiled flow and the interpreter on every tape and compares
/// final tapes, halting status and step counts.
pub fn verify_equivalence(machine: &TuringMachine, tapes: &[Tape], max_steps: usize) -> EquivalenceReport {
    verify_equivalence_with(machine, tapes, max_steps, compile_tm)
}

/// [`verify_equivalence`] with a caller-supplied compiler.
pub fn verify_equivalence_with<C>(machine: &TuringMachine, tapes: &[Tape], max_steps: usize, compile: C) -> EquivalenceReport
where
    C: Fn(&TuringMachine) -> Result<Flow, TmError>,
{
    let compiled = if machine.is_halting(machine.start()) {
        None
    } else {
        Some(compile(machine))
    };
    let runner = Runner::new().max_steps(max_steps);
    let cases = tapes
        .iter()
        .map(|input| {
            let oracle = match interpret_tm(machine, input, max_steps) {
                Ok(run) => TmOutcome::Halted {
                    tape: run.tape,
                    steps: run.steps,
                },
                Err(TmError::StepLimitExceeded { .. }) => TmOutcome::StepLimit,
                Err(e) => TmOutcome::Failed(e.to_string()),
            };
            let engine = match &compiled {
                // a machine that starts halted performs no steps
                None => TmOutcome::Halted {
                    tape: input.clone(),
                    steps: 0,
                },
                Some(Err(e)) => TmOutcome::Failed(e.to_string()),
                Some(Ok(flow)) => match runner.run(flow, input.to_store()) {
                    Ok(outcome) => match outcome.store.get(TAPE_KEY).and_then(|t| Tape::from_value(t, machine.blank())) {
                        Some(tape) => TmOutcome::Halted {
                            tape,
                            steps: outcome.trace.len(),
                        },
                        None => TmOutcome::Failed("final store has no readable tape".into()),
                    },
                    Err(e) if matches!(e.error, FlowError::StepLimitExceeded { .. }) => TmOutcome::StepLimit,
                    Err(e) => TmOutcome::Failed(e.to_string()),
                },
            };
            CaseReport {
                input: input.clone(),
                engine,
                oracle,
            }
        })
        .collect();
    EquivalenceReport { cases }
}

/// A machine with `states` working states `q0..`, one `halt` state and
/// `symbols` tape symbols `0..` (blank `0`), with uniformly random
/// transitions.
pub fn random_machine<R: Rng>(rng: &mut R, states: usize, symbols: usize) -> TuringMachine {
    let names: Vec<String> = (0..states).map(|i| format!("q{i}")).collect();
    let alphabet: Vec<String> = (0..symbols).map(|i| i.to_string()).collect();
    let mut targets = names.clone();
    targets.push("halt".into());
    let mut delta = Vec::new();
    for s in &names {
        for r in &alphabet {
            delta.push((
                s.clone(),
                r.clone(),
                alphabet.choose(rng).expect("non-empty alphabet").clone(),
                if rng.gen_bool(0.5) { "L" } else { "R" }.to_owned(),
                targets.choose(rng).expect("non-empty states").clone(),
            ));
        }
    }
    let mut all_states = names.clone();
    all_states.push("halt".into());
    TuringMachine::from_spec(&TmSpec {
        states: all_states,
        alphabet: alphabet.clone(),
        blank: alphabet[0].clone(),
        delta,
        start: names[0].clone(),
        halting: vec!["halt".into()],
    })
    .expect("generated machine is total")
}

/// A random tape of up to `max_len` cells over the machine's alphabet.
pub fn random_tape<R: Rng>(rng: &mut R, machine: &TuringMachine, max_len: usize) -> Tape {
    let len = rng.gen_range(0..=max_len);
    let mut tape = Tape::default();
    for i in 0..len {
        let s = machine.alphabet.choose(rng).expect("non-empty alphabet").clone();
        tape.set(i as i64, s, &machine.blank);
    }
    tape
}
