//! The `nodeflow` command line.
//!
//! ```text
//! nodeflow run FILE [--input KEY=JSON]... [--max-steps N] [--checkpoint PATH] [--timeout-ms T]
//! nodeflow resume FILE CHECKPOINT [--max-steps N] [--timeout-ms T]
//! nodeflow validate FILE [--dot]
//! nodeflow tm [SPEC] [--tape T]... [--max-steps N] [--random M] [--seed S]
//! nodeflow bench --kind KIND --sizes 1,10,100
//! ```
//!
//! `run` and `resume` print the final store in canonical JSON on stdout and
//! the trace as `step<TAB>node<TAB>action` lines on stderr. `--max-steps`
//! defaults to `FLOW_MAX_STEPS` when that is set.
//!
//! Exit codes:
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success                                              |
//! | 1    | validation errors, or a machine/flow mismatch in `tm` |
//! | 2    | step limit exceeded                                  |
//! | 3    | a node failed                                        |
//! | 4    | wall-clock timeout                                   |
//! | 5    | checkpoint fingerprint does not match the workflow   |
//! | 64   | bad command line                                     |
//! | 65   | malformed workflow, machine, input or checkpoint     |
//! | 66   | input file cannot be read                            |
//! | 74   | checkpoint file cannot be written                    |

pub mod document;
pub mod registry;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::bench::{self, BenchConfig, BenchKind};
use crate::durability::{read_last_checkpoint, CheckpointParseError, FileSink};
use crate::flow::{trace_to_tsv, Flow, FlowError, FlowOutcome, RunError, RunLimits, Runner};
use crate::ndg;
use crate::store::{from_json, SharedStore};
use crate::tm::{self, TmSpec, TuringMachine};

pub use document::{emit, parse_document, parse_workflow, raw_ndg, DocumentError, WorkflowDocument};

pub mod exit {
    pub const OK: i32 = 0;
    pub const INVALID: i32 = 1;
    pub const STEP_LIMIT: i32 = 2;
    pub const NODE_ERROR: i32 = 3;
    pub const TIMEOUT: i32 = 4;
    pub const FINGERPRINT: i32 = 5;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const NO_INPUT: i32 = 66;
    pub const IO: i32 = 74;
}

#[derive(Debug, Parser)]
#[command(name = "nodeflow", version, about = "Run, check and resume graph workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a workflow document.
    Run {
        file: PathBuf,
        /// Initial store entry; the value is parsed as JSON, or taken as text if it is not JSON.
        #[arg(short, long = "input", value_name = "KEY=VALUE")]
        inputs: Vec<String>,
        #[arg(long, env = "FLOW_MAX_STEPS", default_value_t = RunLimits::DEFAULT_MAX_STEPS,
              value_parser = positive)]
        max_steps: usize,
        /// Append a checkpoint line to this file after every node.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        timeout_ms: Option<u64>,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Continue a run from the last checkpoint in CHECKPOINT, appending new ones to it.
    Resume {
        file: PathBuf,
        checkpoint: PathBuf,
        #[arg(long, env = "FLOW_MAX_STEPS", default_value_t = RunLimits::DEFAULT_MAX_STEPS,
              value_parser = positive)]
        max_steps: usize,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// Lint a workflow document.
    Validate {
        file: PathBuf,
        /// Print the graph in dot format; diagnostics go to stderr.
        #[arg(long)]
        dot: bool,
    },
    /// Check that a Turing machine compiled to a flow agrees with a direct interpreter.
    Tm {
        spec: Option<PathBuf>,
        #[arg(long = "tape")]
        tapes: Vec<String>,
        #[arg(long, default_value_t = 500)]
        max_steps: usize,
        /// Also check this many random 3-state, 2-symbol machines on 5 random tapes each.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure how core operations scale with graph size.
    Bench {
        #[arg(long)]
        kind: BenchKind,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = BenchConfig::default().samples)]
        samples: usize,
    },
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {{
        let _ = writeln!($w, $($arg)*);
    }};
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(io.out, "{}", e.render());
                    exit::OK
                }
                _ => {
                    let _ = write!(io.err, "{}", e.render());
                    exit::USAGE
                }
            };
        }
    };
    match cli.command {
        Command::Run {
            file,
            inputs,
            max_steps,
            checkpoint,
            timeout_ms,
            run_id,
        } => cmd_run(&mut io, &file, &inputs, max_steps, checkpoint.as_deref(), timeout_ms, run_id),
        Command::Resume {
            file,
            checkpoint,
            max_steps,
            timeout_ms,
        } => cmd_resume(&mut io, &file, &checkpoint, max_steps, timeout_ms),
        Command::Validate { file, dot } => cmd_validate(&mut io, &file, dot),
        Command::Tm {
            spec,
            tapes,
            max_steps,
            random,
            seed,
        } => cmd_tm(&mut io, spec.as_deref(), &tapes, max_steps, random, seed),
        Command::Bench { kind, sizes, samples } => cmd_bench(&mut io, kind, &sizes, samples),
    }
}

fn read(io: &mut Io, path: &Path) -> Result<Vec<u8>, i32> {
    std::fs::read(path).map_err(|e| {
        say!(io.err, "error: cannot read {}: {e}", path.display());
        exit::NO_INPUT
    })
}

fn load_workflow(io: &mut Io, path: &Path) -> Result<Flow, i32> {
    let bytes = read(io, path)?;
    parse_workflow(&bytes).map_err(|e| {
        say!(io.err, "error: {}: {e}", path.display());
        exit::DATA
    })
}

fn parse_inputs(inputs: &[String]) -> Result<SharedStore, String> {
    let mut store = SharedStore::new();
    for input in inputs {
        let (key, raw) = input
            .split_once('=')
            .ok_or_else(|| format!("input `{input}` is not KEY=VALUE"))?;
        let value = match serde_json::from_str::<serde_json::Value>(raw) {
            Ok(json) => from_json(json).map_err(|e| format!("input `{key}`: {e}"))?,
            Err(_) => raw.into(),
        };
        store.set(key, value).map_err(|e| format!("input `{input}`: {e}"))?;
    }
    Ok(store)
}

/// Runs `job` on a helper thread when a timeout is set.
fn with_timeout<F>(timeout_ms: Option<u64>, job: F) -> Option<Result<FlowOutcome, RunError>>
where
    F: FnOnce() -> Result<FlowOutcome, RunError> + Send + 'static,
{
    let Some(ms) = timeout_ms else {
        return Some(job());
    };
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(job());
    });
    rx.recv_timeout(Duration::from_millis(ms)).ok()
}

fn error_code(error: &FlowError) -> i32 {
    match error.root() {
        FlowError::StepLimitExceeded { .. } => exit::STEP_LIMIT,
        FlowError::FingerprintMismatch { .. } => exit::FINGERPRINT,
        FlowError::Sink { .. } => exit::IO,
        FlowError::Unserializable { .. } | FlowError::Restore(_) | FlowError::UnknownCheckpointNode(_) => exit::DATA,
        _ => exit::NODE_ERROR,
    }
}

fn report(io: &mut Io, result: Option<Result<FlowOutcome, RunError>>, timeout_ms: Option<u64>) -> i32 {
    match result {
        None => {
            say!(io.err, "error: timed out after {} ms", timeout_ms.unwrap_or_default());
            exit::TIMEOUT
        }
        Some(Ok(outcome)) => {
            let _ = write!(io.err, "{}", outcome.trace_tsv());
            match outcome.store.to_canonical_string() {
                Ok(text) => {
                    say!(io.out, "{text}");
                    exit::OK
                }
                Err(e) => {
                    say!(io.err, "error: final store cannot be printed: {e}");
                    exit::DATA
                }
            }
        }
        Some(Err(e)) => {
            let _ = write!(io.err, "{}", trace_to_tsv(&e.trace));
            say!(io.err, "error: {}", e.error);
            error_code(&e.error)
        }
    }
}

fn cmd_run(
    io: &mut Io,
    file: &Path,
    inputs: &[String],
    max_steps: usize,
    checkpoint: Option<&Path>,
    timeout_ms: Option<u64>,
    run_id: Option<String>,
) -> i32 {
    let flow = match load_workflow(io, file) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let store = match parse_inputs(inputs) {
        Ok(s) => s,
        Err(e) => {
            say!(io.err, "error: {e}");
            return exit::USAGE;
        }
    };
    let mut runner = Runner::new().max_steps(max_steps);
    if let Some(id) = run_id {
        runner = runner.run_id(id);
    }
    let sink = match checkpoint.map(FileSink::append).transpose() {
        Ok(s) => s,
        Err(e) => {
            say!(io.err, "error: cannot open checkpoint file: {e}");
            return exit::IO;
        }
    };
    let result = with_timeout(timeout_ms, move || match sink {
        Some(mut sink) => runner.run_checkpointed(&flow, store, &mut sink),
        None => runner.run(&flow, store),
    });
    report(io, result, timeout_ms)
}

fn cmd_resume(io: &mut Io, file: &Path, checkpoint: &Path, max_steps: usize, timeout_ms: Option<u64>) -> i32 {
    let flow = match load_workflow(io, file) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let last = match read_last_checkpoint(checkpoint) {
        Ok(cp) => cp,
        Err(CheckpointParseError::Io(e)) => {
            say!(io.err, "error: cannot read {}: {e}", checkpoint.display());
            return exit::NO_INPUT;
        }
        Err(e) => {
            say!(io.err, "error: {}: {e}", checkpoint.display());
            return exit::DATA;
        }
    };
    let mut sink = match FileSink::append(checkpoint) {
        Ok(s) => s,
        Err(e) => {
            say!(io.err, "error: cannot open checkpoint file: {e}");
            return exit::IO;
        }
    };
    let runner = Runner::new().max_steps(max_steps);
    let result = with_timeout(timeout_ms, move || runner.resume(&flow, &last, &mut sink));
    report(io, result, timeout_ms)
}

fn cmd_validate(io: &mut Io, file: &Path, dot: bool) -> i32 {
    let bytes = match read(io, file) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let doc = match parse_document(&bytes) {
        Ok(d) => d,
        Err(e) => {
            say!(io.err, "error: {}: {e}", file.display());
            return exit::DATA;
        }
    };
    let graph = raw_ndg(&doc);
    let diagnostics = ndg::validate(&graph, &doc.start);
    let mut failed = ndg::has_errors(&diagnostics);
    let lines = if dot { &mut *io.err } else { &mut *io.out };
    for d in &diagnostics {
        say!(lines, "{d}");
    }
    if !failed {
        if let Err(e) = document::build_flow(&doc) {
            say!(lines, "ERROR\tInvalidDocument\t{}\t{e}", e.path());
            failed = true;
        }
    }
    if dot {
        let _ = write!(io.out, "{}", graph.to_dot());
    }
    if failed {
        exit::INVALID
    } else {
        exit::OK
    }
}

fn cmd_tm(io: &mut Io, spec: Option<&Path>, tapes: &[String], max_steps: usize, random: Option<usize>, seed: u64) -> i32 {
    if spec.is_none() && random.is_none() {
        say!(io.err, "error: give a machine file, --random M, or both");
        return exit::USAGE;
    }
    let mut mismatches = 0;
    if let Some(path) = spec {
        let bytes = match read(io, path) {
            Ok(b) => b,
            Err(code) => return code,
        };
        let machine = match TmSpec::from_json(&bytes) {
            Ok(spec) => TuringMachine::from_spec(&spec),
            Err(e) => {
                say!(io.err, "error: {}: {e}", path.display());
                return exit::DATA;
            }
        };
        let machine = match machine {
            Ok(m) => m,
            Err(e) => {
                say!(io.err, "error: {}: {e}", path.display());
                return exit::INVALID;
            }
        };
        let inputs = if tapes.is_empty() { vec![String::new()] } else { tapes.to_vec() };
        let mut parsed = Vec::new();
        for text in &inputs {
            match machine.parse_tape(text) {
                Ok(t) => parsed.push(t),
                Err(e) => {
                    say!(io.err, "error: tape `{text}`: {e}");
                    return exit::USAGE;
                }
            }
        }
        let report = tm::verify_equivalence(&machine, &parsed, max_steps);
        for (text, case) in inputs.iter().zip(&report.cases) {
            match &case.engine {
                tm::TmOutcome::Halted { tape, steps } => {
                    say!(io.out, "{text}\t{}\thalted after {steps} step(s)", machine.render_tape(tape))
                }
                tm::TmOutcome::StepLimit => say!(io.out, "{text}\t-\tno halt within {max_steps} steps"),
                tm::TmOutcome::Failed(e) => say!(io.out, "{text}\t-\tfailed: {e}"),
            }
        }
        let _ = write!(io.err, "{report}");
        mismatches += report.mismatch_count();
    }
    if let Some(count) = random {
        let mut rng = StdRng::seed_from_u64(seed);
        let (mut cases, mut halted, mut bad) = (0, 0, 0);
        for _ in 0..count {
            let machine = tm::random_machine(&mut rng, 3, 2);
            let tapes: Vec<_> = (0..5).map(|_| tm::random_tape(&mut rng, &machine, 8)).collect();
            let report = tm::verify_equivalence(&machine, &tapes, max_steps);
            cases += report.cases.len();
            halted += report.halted_count();
            bad += report.mismatch_count();
            if report.mismatch_count() > 0 {
                let _ = write!(io.err, "{}\n{report}", machine.to_spec().to_json());
            }
        }
        say!(io.out, "random machines: {count}, cases: {cases}, halted: {halted}, mismatches: {bad}");
        mismatches += bad;
    }
    if mismatches == 0 {
        exit::OK
    } else {
        exit::INVALID
    }
}

fn cmd_bench(io: &mut Io, kind: BenchKind, sizes: &[usize], samples: usize) -> i32 {
    let config = BenchConfig {
        samples,
        ..BenchConfig::default()
    };
    match bench::bench_scaling_with(kind, sizes, config) {
        Ok(rows) => {
            let _ = write!(io.out, "{}", bench::rows_to_tsv(&rows));
            say!(io.err, "{kind}: max/min = {:.2}", bench::spread(&rows));
            exit::OK
        }
        Err(e) => {
            say!(io.err, "error: {e}");
            exit::USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("nodeflow").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(call(&[]).0, exit::USAGE);
        assert_eq!(call(&["frobnicate"]).0, exit::USAGE);
        assert_eq!(call(&["bench", "--kind", "nope", "--sizes", "1"]).0, exit::USAGE);
        assert_eq!(call(&["tm"]).0, exit::USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("validate"));
    }

    #[test]
    fn missing_file_exits_66() {
        assert_eq!(call(&["run", "/nonexistent/flow.json"]).0, exit::NO_INPUT);
    }

    #[test]
    fn inputs_accept_json_or_text() {
        let store = parse_inputs(&["a=1".into(), "b=\"x\"".into(), "c=plain".into(), "d=[true]".into()]).unwrap();
        assert_eq!(store.to_canonical_string().unwrap(), r#"{"a":1,"b":"x","c":"plain","d":[true]}"#);
        assert!(parse_inputs(&["novalue".into()]).is_err());
        assert!(parse_inputs(&["=1".into()]).is_err());
    }

    #[test]
    fn bench_prints_one_row_per_size() {
        let (code, out, _) = call(&["bench", "--kind", "flow_creation", "--sizes", "10,100", "--samples", "5"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 2);
    }

    #[test]
    fn random_tm_check_passes() {
        let (code, out, _) = call(&["tm", "--random", "5"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("mismatches: 0"));
    }
}
