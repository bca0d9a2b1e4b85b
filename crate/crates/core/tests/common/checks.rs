// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Run-level checks shared by the property and acceptance suites.

use robustmove::{
    encapsulator::*,
    ir::*,
    state::*,
    traces::{Action, ActionKind},
    vm::{lookup_instr, run_with, step_mut, RunOutcome, StuckReason},
};
use std::collections::{BTreeMap, BTreeSet};

/// Steps `state` and checks that the activation called directly by the
/// harness stays described by the fixpoint of its procedure.
pub fn lockstep(
    whole: &CodeEnv,
    trusted: &CodeEnv,
    analyses: &BTreeMap<ProcId, ProcAnalysis>,
    mut state: State,
    fuel: u64,
) -> Result<usize, String> {
    let mut checked = 0;
    for _ in 0..fuel {
        if state.callstack.len() == 2 {
            let frame = state.callstack.last().unwrap();
            if let Some(a) = analyses.get(&frame.proc) {
                let Some(abs) = &a.states[frame.pc] else {
                    return Err(format!(
                        "{}@{} reached but unreachable in the analysis",
                        frame.proc, frame.pc
                    ));
                };
                if !is_concretization(&state, abs, trusted) {
                    return Err(format!(
                        "{}@{} ({:?}): {abs:?} does not describe locals {:?} stack {:?}",
                        frame.proc,
                        frame.pc,
                        lookup_instr(whole, &state).ok(),
                        frame.locals,
                        state.segment()
                    ));
                }
                checked += 1;
            }
        }
        if step_mut(whole, &mut state).is_err() || state.callstack.is_empty() {
            break;
        }
    }
    Ok(checked)
}

pub fn analyses_for(env: &CodeEnv, cfg: &Config, keep: &BTreeSet<ProcId>) -> BTreeMap<ProcId, ProcAnalysis> {
    keep.iter()
        .map(|p| (p.clone(), analyze_proc(cfg, env, p).unwrap()))
        .collect()
}

/// Per-step structural checks on a run.
pub fn check_run(env: &CodeEnv, state: State, fuel: u64) -> Result<RunOutcome, String> {
    let mut seen: BTreeSet<Loc> = state.memory.iter().map(|(l, _)| l).collect();
    let mut prev_next = state.memory.next_fresh();
    let mut err = None;
    let (outcome, _) = run_with(env, state, fuel, |st, _| {
        if err.is_some() {
            return;
        }
        if let Err(e) = invariants_of(st, &mut seen, &mut prev_next) {
            err = Some(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if let RunOutcome::Stuck(StuckReason::UnknownProc(_) | StuckReason::PcOutOfRange(..)) = &outcome {
        return Err(format!("lookup failure: {}", outcome.label()));
    }
    Ok(outcome)
}

pub fn invariants_of(st: &State, seen: &mut BTreeSet<Loc>, prev_next: &mut u64) -> Result<(), String> {
    // Canaries name the frames, bottom to top.
    let canaries: Vec<&ProcId> = st
        .stack
        .iter()
        .filter_map(|e| match e {
            StackEntry::Canary(p) => Some(p),
            StackEntry::Value(_) => None,
        })
        .collect();
    let frames: Vec<&ProcId> = st.callstack.iter().map(|f| &f.proc).collect();
    if canaries != frames {
        return Err(format!("canaries {canaries:?} vs frames {frames:?}"));
    }
    // Records hold only storable values.
    for (l, v) in st.memory.iter() {
        if !v.is_storable() {
            return Err(format!("cell {l} holds {v}"));
        }
    }
    // Global targets resolve to records of their tag.
    for ((a, tag), l) in &st.globals {
        match st.memory.get(*l) {
            Some(Value::Record(r)) if r.tag == *tag => {}
            other => return Err(format!("global {a} {tag} -> {other:?}")),
        }
    }
    // Fresh locations are never reused.
    let now: BTreeSet<Loc> = st.memory.iter().map(|(l, _)| l).collect();
    for l in now.difference(seen) {
        if l.0 < *prev_next {
            return Err(format!("location {l} reused"));
        }
    }
    seen.extend(now);
    *prev_next = st.memory.next_fresh();
    Ok(())
}

pub fn check_parity(trace: &[Action]) -> Result<(), String> {
    let mut open: Vec<&ProcId> = vec![];
    for a in trace {
        match &a.kind {
            ActionKind::CallIn(p) => open.push(p),
            ActionKind::RetOut(p) => {
                if open.pop() != Some(p) {
                    return Err(format!("return from {p} does not match an open call"));
                }
            }
            ActionKind::CallBack(_) | ActionKind::RetBack(_) => {
                return Err(format!("callback action `{a}` in a valid run"));
            }
        }
    }
    Ok(())
}
