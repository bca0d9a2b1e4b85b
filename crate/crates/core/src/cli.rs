// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end. Exit codes: 0 pass, 1 a check failed, 2 bad
//! input.

use crate::{
    asm::{parse_module, serialize_module},
    encapsulator::{analyze_module, strict_mode_analyze, Report},
    invariants::{first_failing_action, Invariant},
    ir::*,
    linking::{initial_config, link, validate_attacker, Attacker},
    oracle::{check_local_inv, robust_safety_oracle, Bounds, LocalVerdict, OracleVerdict},
    state::dump_globals,
    traces::{run_trace, Action, ActionKind},
    vm::{run, RunOutcome},
    wf::well_formed,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use std::{
    ffi::OsString,
    io::Write,
    path::{Path, PathBuf},
    time::Instant,
};

#[derive(Parser, Debug)]
#[command(
    name = "robustmove",
    version,
    about = "Robust safety checks for Move bytecode modules"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Well-formedness, escape analysis and the bounded local prover, in order.
    Check {
        #[arg(long)]
        trusted: PathBuf,
        #[arg(long)]
        invariant: PathBuf,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[arg(long)]
        json: bool,
    },
    /// Runs a procedure from the initial state and dumps global storage.
    Run {
        #[arg(long)]
        program: PathBuf,
        /// `0xA::M::p`, `M::p` or a unique procedure name.
        #[arg(long)]
        entry: String,
        #[arg(long, default_value_t = 10_000)]
        fuel: u64,
    },
    /// Links an attacker against trusted code and prints the action trace.
    Trace {
        #[arg(long)]
        trusted: PathBuf,
        #[arg(long)]
        attacker: PathBuf,
        #[arg(long, default_value = "main")]
        entry: String,
        #[arg(long)]
        invariant: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        fuel: u64,
        #[arg(long)]
        json: bool,
    },
    /// Escape analysis; one `FLAG` line per flagged procedure.
    Analyze {
        #[arg(long)]
        trusted: PathBuf,
        #[arg(long)]
        invariant: Option<PathBuf>,
        /// Only flag mutable reference returns.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        json: bool,
    },
    /// Bounded search for an attacker that breaks the invariant.
    Fuzz {
        #[arg(long)]
        trusted: PathBuf,
        #[arg(long)]
        invariant: PathBuf,
        #[command(flatten)]
        bounds: BoundsArgs,
        /// Where to write a counterexample attacker.
        #[arg(long, default_value = "counterexample.masm")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug, Clone)]
pub struct BoundsArgs {
    #[arg(long, default_value_t = 6)]
    pub max_instr: usize,
    #[arg(long, default_value_t = 10_000)]
    pub fuel: u64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2])]
    pub values: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values = ["0x1", "0x7"])]
    pub addrs: Vec<Address>,
    #[arg(long, default_value_t = 2)]
    pub max_locals: usize,
}

impl BoundsArgs {
    pub fn bounds(&self) -> Bounds {
        Bounds {
            max_instr: self.max_instr,
            values: self.values.clone(),
            addrs: self.addrs.clone(),
            fuel: self.fuel,
            max_locals: self.max_locals,
        }
    }
}

fn bounds_json(b: &Bounds) -> serde_json::Value {
    json!({
        "max_instr": b.max_instr,
        "values": b.values,
        "addrs": b.addrs.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        "fuel": b.fuel,
        "max_locals": b.max_locals,
    })
}

fn bounds_line(b: &Bounds) -> String {
    let values: Vec<String> = b.values.iter().map(|v| v.to_string()).collect();
    let addrs: Vec<String> = b.addrs.iter().map(|a| a.to_string()).collect();
    format!(
        "bounds: max-instr {} fuel {} values {} addrs {} max-locals {}",
        b.max_instr,
        b.fuel,
        values.join(","),
        addrs.join(","),
        b.max_locals
    )
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StageResult {
    pub stage: &'static str,
    /// `None` when an earlier stage failed.
    pub passed: Option<bool>,
    pub millis: f64,
    pub details: Vec<String>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckSummary {
    pub stages: Vec<StageResult>,
    pub overall: bool,
}

/// Input errors, reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(String);

fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn load_env(path: &Path) -> Result<CodeEnv, InputError> {
    parse_module(&read(path)?).map_err(|e| InputError(format!("{}:{e}", path.display())))
}

fn load_inv(path: &Path, env: &CodeEnv) -> Result<Invariant, InputError> {
    Invariant::parse(&read(path)?, env).map_err(|e| InputError(format!("{}:{e}", path.display())))
}

/// Resolves `0xA::M::p`, `M::p` or a bare name that is unique in `env`.
pub fn resolve_proc(env: &CodeEnv, name: &str) -> Result<ProcId, InputError> {
    let parts: Vec<&str> = name.split("::").collect();
    let matches: Vec<ProcId> = env
        .procs()
        .map(|(p, _)| p)
        .filter(|p| match parts.as_slice() {
            [a, m, n] => {
                a.parse::<Address>().is_ok_and(|a| a == p.module.addr) && *m == &*p.module.name && *n == &*p.name
            }
            [m, n] => *m == &*p.module.name && *n == &*p.name,
            [n] => *n == &*p.name,
            _ => false,
        })
        .collect();
    match matches.as_slice() {
        [p] => Ok(p.clone()),
        [] => Err(InputError(format!("no procedure `{name}`"))),
        _ => Err(InputError(format!("`{name}` is ambiguous"))),
    }
}

/// Runs the three stages in order and stops at the first failure.
pub fn check(env: &CodeEnv, inv: &Invariant, bounds: &Bounds) -> CheckSummary {
    let mut stages = vec![];
    let t = Instant::now();
    let wf: Vec<String> = well_formed(env).iter().map(|v| v.to_string()).collect();
    stages.push(StageResult {
        stage: "well-formed",
        passed: Some(wf.is_empty()),
        millis: ms(t),
        details: wf,
    });
    if stages[0].passed == Some(true) {
        let t = Instant::now();
        let (passed, details) = match analyze_module(env, inv) {
            Ok(r) => (r.is_clean(), r.to_string().lines().map(String::from).collect()),
            Err(e) => (false, vec![e.to_string()]),
        };
        stages.push(StageResult {
            stage: "encapsulator",
            passed: Some(passed),
            millis: ms(t),
            details,
        });
    }
    if stages
        .last()
        .is_some_and(|s| s.stage == "encapsulator" && s.passed == Some(true))
    {
        let t = Instant::now();
        let (passed, details) = match check_local_inv(env, inv, bounds) {
            Ok(LocalVerdict::Holds(s)) => (
                true,
                vec![format!(
                    "{} runs ({} stuck, {} aborted, {} out of fuel)",
                    s.runs, s.stuck, s.aborted, s.out_of_fuel
                )],
            ),
            Ok(LocalVerdict::Violation(v)) => (
                false,
                vec![format!(
                    "{}: {} (inputs [{}], globals [{}])",
                    v.proc,
                    v.reason,
                    v.inputs.join(", "),
                    v.seeded.join("; ")
                )],
            ),
            Err(e) => (false, vec![e.to_string()]),
        };
        stages.push(StageResult {
            stage: "local-prover",
            passed: Some(passed),
            millis: ms(t),
            details,
        });
    }
    for name in ["well-formed", "encapsulator", "local-prover"] {
        if !stages.iter().any(|s| s.stage == name) {
            stages.push(StageResult {
                stage: name,
                passed: None,
                millis: 0.0,
                details: vec![],
            });
        }
    }
    let overall = stages.iter().all(|s| s.passed == Some(true));
    CheckSummary { stages, overall }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn action_kind_json(a: &Action) -> serde_json::Value {
    let (kind, proc) = match &a.kind {
        ActionKind::CallIn(p) => ("call_in", p),
        ActionKind::CallBack(p) => ("call_back", p),
        ActionKind::RetOut(p) => ("ret_out", p),
        ActionKind::RetBack(p) => ("ret_back", p),
    };
    json!({
        "kind": kind,
        "proc": proc.to_string(),
        "globals": dump_globals(&a.memory, &a.globals),
    })
}

fn write_trace(out: &mut dyn Write, trace: &[Action], failing: Option<usize>) -> std::io::Result<()> {
    for (i, a) in trace.iter().enumerate() {
        let mark = if Some(i) == failing {
            "  <- invariant violated"
        } else {
            ""
        };
        writeln!(out, "{i:>3} {a}{mark}")?;
        if Some(i) == failing {
            for g in dump_globals(&a.memory, &a.globals) {
                writeln!(out, "      {g}")?;
            }
        }
    }
    Ok(())
}

fn write_report(out: &mut dyn Write, r: &Report) -> std::io::Result<()> {
    write!(out, "{r}")
}

fn report_json(r: &Report) -> serde_json::Value {
    json!({
        "flagged": r.flagged().map(|(p, k)| json!({"proc": p.to_string(), "returns": k})).collect::<Vec<_>>(),
        "analyzed": r.verdicts.len(),
    })
}

/// Parses arguments and runs a command. Returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Check {
            trusted,
            invariant,
            bounds,
            json,
        } => {
            let env = load_env(&trusted)?;
            let inv = load_inv(&invariant, &env)?;
            let b = bounds.bounds();
            let summary = check(&env, &inv, &b);
            if json {
                let doc = json!({ "summary": summary, "bounds": bounds_json(&b) });
                writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"))?;
            } else {
                writeln!(out, "{}", bounds_line(&b))?;
                for s in &summary.stages {
                    let status = match s.passed {
                        Some(true) => "pass",
                        Some(false) => "FAIL",
                        None => "skipped",
                    };
                    writeln!(out, "{:<13} {status:<7} {:.3} ms", s.stage, s.millis)?;
                    for d in &s.details {
                        writeln!(out, "  {d}")?;
                    }
                }
                let verdict = if summary.overall {
                    "robustly safe at these bounds"
                } else {
                    "not established"
                };
                writeln!(out, "overall: {verdict}")?;
            }
            Ok(if summary.overall { 0 } else { 1 })
        }
        Command::Run { program, entry, fuel } => {
            let env = load_env(&program)?;
            let main = resolve_proc(&env, &entry)?;
            let (outcome, steps) = run(&env, initial_config(&main), fuel);
            writeln!(out, "{}", outcome.label())?;
            writeln!(out, "steps: {steps}")?;
            if let Some(st) = outcome.state() {
                for g in dump_globals(&st.memory, &st.globals) {
                    writeln!(out, "{g}")?;
                }
            }
            Ok(if matches!(outcome, RunOutcome::Halted(_)) { 0 } else { 1 })
        }
        Command::Trace {
            trusted,
            attacker,
            entry,
            invariant,
            fuel,
            json,
        } => {
            let tenv = load_env(&trusted)?;
            let aenv = load_env(&attacker)?;
            let main = resolve_proc(&aenv, &entry)?;
            let atk = Attacker { env: aenv, main };
            if let Err(vs) = validate_attacker(&tenv, &atk) {
                let msgs: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                return Err(InputError(format!("invalid attacker: {}", msgs.join("; "))).into());
            }
            let whole = link(&tenv, &atk.env).map_err(|e| InputError(e.to_string()))?;
            let (trace, outcome) = run_trace(&whole, &tenv, initial_config(&atk.main), fuel);
            let failing = match &invariant {
                Some(p) => {
                    let inv = load_inv(p, &tenv)?;
                    first_failing_action(&inv, &trace).map_err(|e| InputError(e.to_string()))?
                }
                None => None,
            };
            if json {
                let doc = json!({
                    "actions": trace.iter().map(action_kind_json).collect::<Vec<_>>(),
                    "outcome": outcome.label(),
                    "failing": failing,
                });
                writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"))?;
            } else {
                write_trace(out, &trace, failing)?;
                writeln!(out, "{}", outcome.label())?;
            }
            Ok(if failing.is_some() { 1 } else { 0 })
        }
        Command::Analyze {
            trusted,
            invariant,
            strict,
            json,
        } => {
            let env = load_env(&trusted)?;
            let inv = invariant.as_deref().map(|p| load_inv(p, &env)).transpose()?;
            let report = match (&inv, strict) {
                (Some(inv), false) => analyze_module(&env, inv),
                (inv, _) => strict_mode_analyze(&env, inv.as_ref()),
            }
            .map_err(|e| InputError(e.to_string()))?;
            if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&report_json(&report)).expect("serializable")
                )?;
            } else {
                write_report(out, &report)?;
            }
            Ok(if report.is_clean() { 0 } else { 1 })
        }
        Command::Fuzz {
            trusted,
            invariant,
            bounds,
            out: path,
            json,
        } => {
            let env = load_env(&trusted)?;
            let inv = load_inv(&invariant, &env)?;
            let b = bounds.bounds();
            let verdict = robust_safety_oracle(&env, &inv, &b).map_err(|e| InputError(e.to_string()))?;
            match verdict {
                OracleVerdict::NoCounterexample { attackers_run } => {
                    if json {
                        let doc = json!({"counterexample": null, "runs": attackers_run, "bounds": bounds_json(&b)});
                        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"))?;
                    } else {
                        writeln!(out, "{}", bounds_line(&b))?;
                        writeln!(out, "no counterexample ({attackers_run} attacker runs)")?;
                    }
                    Ok(0)
                }
                OracleVerdict::Counterexample(cx) => {
                    std::fs::write(&path, serialize_module(&cx.attacker.env))?;
                    if json {
                        let doc = json!({
                            "counterexample": path.display().to_string(),
                            "body_len": cx.body_len(),
                            "failing": cx.failing,
                            "actions": cx.trace.iter().map(action_kind_json).collect::<Vec<_>>(),
                            "runs": cx.attackers_run,
                            "bounds": bounds_json(&b),
                        });
                        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"))?;
                    } else {
                        writeln!(out, "{}", bounds_line(&b))?;
                        writeln!(
                            out,
                            "counterexample: {} body instructions, written to {}",
                            cx.body_len(),
                            path.display()
                        )?;
                        write_trace(out, &cx.trace, Some(cx.failing))?;
                    }
                    Ok(1)
                }
            }
        }
    }
}
