// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Labelled execution: calls and returns crossing the trusted/attacker
//! boundary emit actions carrying memory and global snapshots.

use crate::{
    ir::*,
    state::*,
    vm::{lookup_instr, step_mut, Control, Fault, RunOutcome},
};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    /// Control moves from attacker code into trusted code.
    In,
    /// Control moves from trusted code into attacker code.
    Out,
    Same,
}

/// Classifies the boundary between the top frame and the one below it.
pub fn classify_crossing(trusted: &CodeEnv, callstack: &[Frame]) -> Crossing {
    let [.., second, top] = callstack else {
        return Crossing::Same;
    };
    match (trusted.defines_proc(&top.proc), trusted.defines_proc(&second.proc)) {
        (true, false) => Crossing::In,
        (false, true) => Crossing::Out,
        _ => Crossing::Same,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActionKind {
    /// `?`: the attacker calls a trusted procedure.
    CallIn(ProcId),
    /// `!`: trusted code calls attacker code.
    CallBack(ProcId),
    /// `!`: a trusted procedure returns to the attacker.
    RetOut(ProcId),
    /// `?`: an attacker procedure returns to trusted code.
    RetBack(ProcId),
}

impl ActionKind {
    /// True for actions that hand control to trusted code.
    pub fn is_incoming(&self) -> bool {
        matches!(self, ActionKind::CallIn(_) | ActionKind::RetBack(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub kind: ActionKind,
    pub memory: Memory,
    pub globals: Globals,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ActionKind::CallIn(p) => write!(f, "? call {p}"),
            ActionKind::CallBack(p) => write!(f, "! call {p}"),
            ActionKind::RetOut(_) => write!(f, "! ret"),
            ActionKind::RetBack(_) => write!(f, "? ret"),
        }
    }
}

pub type Trace = Vec<Action>;

/// The action the next step emits if it succeeds.
pub fn pending_action(env: &CodeEnv, trusted: &CodeEnv, state: &State) -> Option<ActionKind> {
    match lookup_instr(env, state) {
        Ok(Instr::Call(target)) => {
            let caller = state.callstack.last()?;
            match (trusted.defines_proc(target), trusted.defines_proc(&caller.proc)) {
                (true, false) => Some(ActionKind::CallIn(target.clone())),
                (false, true) => Some(ActionKind::CallBack(target.clone())),
                _ => None,
            }
        }
        Ok(Instr::Ret) => {
            let top = state.callstack.last()?.proc.clone();
            match classify_crossing(trusted, &state.callstack) {
                Crossing::In => Some(ActionKind::RetOut(top)),
                Crossing::Out => Some(ActionKind::RetBack(top)),
                Crossing::Same => None,
            }
        }
        Ok(_) | Err(_) => None,
    }
}

/// One step, plus the action it emits when it crosses the boundary. The
/// snapshot is taken before the step.
pub fn step_labeled(env: &CodeEnv, trusted: &CodeEnv, state: &mut State) -> Result<(Control, Option<Action>), Fault> {
    let action = pending_action(env, trusted, state).map(|kind| Action {
        kind,
        memory: state.memory.clone(),
        globals: state.globals.clone(),
    });
    let control = step_mut(env, state)?;
    Ok((control, action))
}

/// Runs with fuel, collecting the trace. A fault ends the trace at the
/// actions emitted so far.
pub fn run_trace(env: &CodeEnv, trusted: &CodeEnv, mut state: State, fuel: u64) -> (Trace, RunOutcome) {
    let mut trace = vec![];
    let mut steps = 0;
    loop {
        if state.callstack.is_empty() {
            return (trace, RunOutcome::Halted(state));
        }
        if steps == fuel {
            return (trace, RunOutcome::OutOfFuel(state));
        }
        let before = state.clone();
        match step_labeled(env, trusted, &mut state) {
            Ok((control, action)) => {
                trace.extend(action);
                steps += 1;
                if control == Control::Halted {
                    return (trace, RunOutcome::Halted(state));
                }
            }
            Err(Fault::Aborted(r)) => return (trace, RunOutcome::Aborted(before, r)),
            Err(Fault::Stuck(r)) => return (trace, RunOutcome::Stuck(r)),
        }
    }
}
