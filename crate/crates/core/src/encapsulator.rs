// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Escape analysis for references into invariant-protected state.
//!
//! Every stack slot and local is abstracted to `NoRef` (not a reference),
//! `OkRef` (a reference that cannot reach a protected location) or `InRef`
//! (a reference that may). A procedure is flagged when it can return an
//! `InRef`.

use crate::{
    invariants::Invariant,
    ir::*,
    state::{StackEntry, State, Value},
};
use serde::Serialize;
use std::{
    collections::{BTreeMap, BTreeSet},
    fmt,
};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum AbsVal {
    NoRef,
    OkRef,
    InRef,
}

impl AbsVal {
    pub const ALL: [AbsVal; 3] = [AbsVal::NoRef, AbsVal::OkRef, AbsVal::InRef];

    pub fn join(self, other: AbsVal) -> AbsVal {
        if self == other {
            self
        } else {
            AbsVal::InRef
        }
    }

    pub fn leq(self, other: AbsVal) -> bool {
        self == other || other == AbsVal::InRef
    }

    pub fn of_type(ty: &Type) -> AbsVal {
        if ty.is_ref() {
            AbsVal::OkRef
        } else {
            AbsVal::NoRef
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbsState {
    pub locals: BTreeMap<Ident, AbsVal>,
    pub stack: Vec<AbsVal>,
}

impl AbsState {
    pub fn entry(params: &[Type]) -> AbsState {
        AbsState {
            locals: BTreeMap::new(),
            stack: params.iter().map(AbsVal::of_type).collect(),
        }
    }

    /// Pointwise join; stacks must have equal depth.
    pub fn join(&self, other: &AbsState) -> Option<AbsState> {
        if self.stack.len() != other.stack.len() {
            return None;
        }
        let mut locals = self.locals.clone();
        for (x, v) in &other.locals {
            locals.entry(x.clone()).and_modify(|w| *w = w.join(*v)).or_insert(*v);
        }
        Some(AbsState {
            locals,
            stack: self.stack.iter().zip(&other.stack).map(|(a, b)| a.join(*b)).collect(),
        })
    }

    pub fn leq(&self, other: &AbsState) -> bool {
        self.stack.len() == other.stack.len()
            && self.stack.iter().zip(&other.stack).all(|(a, b)| a.leq(*b))
            && self
                .locals
                .iter()
                .all(|(x, v)| other.locals.get(x).is_some_and(|w| v.leq(*w)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
pub enum TransferError {
    #[error("{proc}@{pc}: operand stack underflow")]
    Depth { proc: String, pc: usize },
    #[error("{proc}@{pc}: unresolved name {name}")]
    Unresolved { proc: String, pc: usize, name: String },
    #[error("{proc}@{pc}: stack depths disagree at join")]
    JoinMismatch { proc: String, pc: usize },
    #[error("{proc}: no fixpoint after {sweeps} sweeps")]
    NoFixpoint { proc: String, sweeps: usize },
    #[error("{proc}: no such procedure")]
    UnknownProc { proc: String },
}

/// Which fields are protected and which return slots may be flagged.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    pub relevant: BTreeSet<FieldRef>,
    /// Only flag return slots of mutable reference type.
    pub strict: bool,
}

/// Successor state of one instruction and the return slots it flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub next: Option<AbsState>,
    pub flagged: Vec<usize>,
}

/// A local that no path binds makes the machine stuck, so the path ends.
fn stuck_here() -> Transfer {
    Transfer {
        next: None,
        flagged: vec![],
    }
}

pub fn transfer(
    cfg: &Config,
    env: &CodeEnv,
    proc: &ProcId,
    pc: usize,
    instr: &Instr,
    state: &AbsState,
) -> Result<Transfer, TransferError> {
    let mut s = state.clone();
    let depth_err = || TransferError::Depth {
        proc: proc.to_string(),
        pc,
    };
    let unresolved = |name: String| TransferError::Unresolved {
        proc: proc.to_string(),
        pc,
        name,
    };
    let pop = |s: &mut AbsState, n: usize| -> Result<Vec<AbsVal>, TransferError> {
        if s.stack.len() < n {
            return Err(depth_err());
        }
        Ok(s.stack.split_off(s.stack.len() - n))
    };
    let local_tag = |name: &Ident| StructTag {
        module: proc.module.clone(),
        name: name.clone(),
    };
    let mut flagged = vec![];
    match instr {
        Instr::Call(target) => {
            let callee = env.proc(target).ok_or_else(|| unresolved(target.to_string()))?;
            let args = pop(&mut s, callee.params.len())?;
            let from_inref = args.contains(&AbsVal::InRef);
            for ty in &callee.returns {
                s.stack.push(match (ty.is_ref(), from_inref) {
                    (false, _) => AbsVal::NoRef,
                    (true, false) => AbsVal::OkRef,
                    (true, true) => AbsVal::InRef,
                });
            }
        }
        Instr::Ret => {
            let def = env.proc(proc).ok_or_else(|| unresolved(proc.to_string()))?;
            let vals = pop(&mut s, def.returns.len())?;
            for (k, (v, ty)) in vals.iter().zip(&def.returns).enumerate() {
                if *v == AbsVal::InRef && (!cfg.strict || ty.is_mut_ref()) {
                    flagged.push(k);
                }
            }
            return Ok(Transfer { next: None, flagged });
        }
        Instr::Abort => return Ok(Transfer { next: None, flagged }),
        Instr::Branch(_) => {}
        Instr::BranchCond(_) | Instr::Pop => {
            pop(&mut s, 1)?;
        }
        Instr::BorrowFld(fr) => {
            let v = pop(&mut s, 1)?[0];
            s.stack.push(if cfg.relevant.contains(fr) { AbsVal::InRef } else { v });
        }
        Instr::BorrowGlobal(_) => {
            pop(&mut s, 1)?;
            s.stack.push(AbsVal::InRef);
        }
        Instr::BorrowLoc(x) => {
            if !s.locals.contains_key(x) {
                return Ok(stuck_here());
            }
            s.stack.push(AbsVal::OkRef);
        }
        Instr::MvLoc(x) | Instr::CpLoc(x) => {
            let v = if matches!(instr, Instr::MvLoc(_)) {
                s.locals.remove(x)
            } else {
                s.locals.get(x).copied()
            };
            let Some(v) = v else {
                return Ok(stuck_here());
            };
            s.stack.push(v);
        }
        Instr::StLoc(x) => {
            let v = pop(&mut s, 1)?[0];
            s.locals.insert(x.clone(), v);
        }
        Instr::LoadConst(_) => s.stack.push(AbsVal::NoRef),
        Instr::Op(_) | Instr::MoveTo(_) | Instr::WriteRef => {
            pop(&mut s, 2)?;
            if matches!(instr, Instr::Op(_)) {
                s.stack.push(AbsVal::NoRef);
            }
        }
        Instr::MoveFrom(_) | Instr::Exists(_) | Instr::ReadRef => {
            pop(&mut s, 1)?;
            s.stack.push(AbsVal::NoRef);
        }
        Instr::Pack(name) | Instr::Unpack(name) => {
            let def = env
                .struct_def(&local_tag(name))
                .ok_or_else(|| unresolved(local_tag(name).to_string()))?;
            let n = def.fields.len();
            if matches!(instr, Instr::Pack(_)) {
                pop(&mut s, n)?;
                s.stack.push(AbsVal::NoRef);
            } else {
                pop(&mut s, 1)?;
                s.stack.extend(std::iter::repeat_n(AbsVal::NoRef, n));
            }
        }
    }
    Ok(Transfer { next: Some(s), flagged })
}

/// Fixpoint result for one procedure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcAnalysis {
    /// Abstract state before each instruction; `None` if unreachable.
    pub states: Vec<Option<AbsState>>,
    pub flagged: BTreeSet<usize>,
    pub sweeps: usize,
}

pub fn analyze_proc(cfg: &Config, env: &CodeEnv, proc: &ProcId) -> Result<ProcAnalysis, TransferError> {
    let def = env
        .proc(proc)
        .ok_or_else(|| TransferError::UnknownProc { proc: proc.to_string() })?;
    let n = def.code.len();
    let mut states: Vec<Option<AbsState>> = vec![None; n];
    if n == 0 {
        return Ok(ProcAnalysis {
            states,
            flagged: BTreeSet::new(),
            sweeps: 0,
        });
    }
    states[0] = Some(AbsState::entry(&def.params));
    let limit = n * 3;
    let mut sweeps = 0;
    let mut flagged = BTreeSet::new();
    loop {
        sweeps += 1;
        if sweeps > limit.max(3) {
            return Err(TransferError::NoFixpoint {
                proc: proc.to_string(),
                sweeps: sweeps - 1,
            });
        }
        let mut changed = false;
        flagged.clear();
        for pc in 0..n {
            let Some(st) = states[pc].clone() else {
                continue;
            };
            let instr = &def.code[pc];
            let t = transfer(cfg, env, proc, pc, instr, &st)?;
            flagged.extend(t.flagged);
            let Some(next) = t.next else {
                continue;
            };
            for succ in instr.successors(pc) {
                if succ >= n {
                    continue;
                }
                let merged = match &states[succ] {
                    None => next.clone(),
                    Some(old) => old.join(&next).ok_or(TransferError::JoinMismatch {
                        proc: proc.to_string(),
                        pc: succ,
                    })?,
                };
                if states[succ].as_ref() != Some(&merged) {
                    states[succ] = Some(merged);
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(ProcAnalysis {
                states,
                flagged,
                sweeps,
            });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    /// Return slots that may carry a reference to protected state.
    Flagged(Vec<usize>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub verdicts: BTreeMap<ProcId, Verdict>,
}

impl Report {
    pub fn flagged(&self) -> impl Iterator<Item = (&ProcId, &Vec<usize>)> {
        self.verdicts.iter().filter_map(|(p, v)| match v {
            Verdict::Flagged(k) => Some((p, k)),
            Verdict::Pass => None,
        })
    }

    pub fn flagged_names(&self) -> BTreeSet<String> {
        self.flagged().map(|(p, _)| p.name.to_string()).collect()
    }

    pub fn is_clean(&self) -> bool {
        self.flagged().next().is_none()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, slots) in self.flagged() {
            let slots: Vec<String> = slots.iter().map(|k| k.to_string()).collect();
            writeln!(f, "FLAG {p} ret#{}", slots.join(","))?;
        }
        Ok(())
    }
}

fn analyze_with(env: &CodeEnv, scope: &BTreeSet<ModuleId>, cfg: &Config) -> Result<Report, TransferError> {
    let mut verdicts = BTreeMap::new();
    for (pid, _) in env.procs() {
        let verdict = if scope.is_empty() || scope.contains(&pid.module) {
            let a = analyze_proc(cfg, env, &pid)?;
            if a.flagged.is_empty() {
                Verdict::Pass
            } else {
                Verdict::Flagged(a.flagged.into_iter().collect())
            }
        } else {
            Verdict::Pass
        };
        verdicts.insert(pid, verdict);
    }
    Ok(Report { verdicts })
}

/// Analyzes the procedures of the invariant's owner modules (all modules if
/// it names none). Other procedures pass.
pub fn analyze_module(env: &CodeEnv, inv: &Invariant) -> Result<Report, TransferError> {
    let cfg = Config {
        relevant: inv.relevant.clone(),
        strict: false,
    };
    analyze_with(env, &inv.owner, &cfg)
}

/// Flags only mutable reference returns. Without an invariant every field
/// of every declared struct is protected.
pub fn strict_mode_analyze(env: &CodeEnv, inv: Option<&Invariant>) -> Result<Report, TransferError> {
    let (relevant, scope) = match inv {
        Some(inv) => (inv.relevant.clone(), inv.owner.clone()),
        None => (
            env.structs()
                .flat_map(|(tag, def)| def.fields.iter().map(move |(f, _)| tag.field(f)).collect::<Vec<_>>())
                .collect(),
            BTreeSet::new(),
        ),
    };
    analyze_with(env, &scope, &Config { relevant, strict: true })
}

fn matches_abs(v: &Value, a: AbsVal, protected: &BTreeSet<crate::state::Loc>, stored: bool) -> bool {
    match (v, a) {
        (Value::Ref(_), AbsVal::InRef) => true,
        (Value::Ref(r), AbsVal::OkRef) => !protected.contains(&r.loc),
        (Value::Loc(_), AbsVal::NoRef) => stored,
        (v, AbsVal::NoRef) => !stored && v.is_storable(),
        _ => false,
    }
}

/// Whether the top frame's locals and operand segment are described by
/// `abs`. References abstracted as `OkRef` must not point at a global of a
/// trusted struct.
pub fn is_concretization(state: &State, abs: &AbsState, trusted: &CodeEnv) -> bool {
    let Some(frame) = state.top_frame() else {
        return false;
    };
    let protected: BTreeSet<_> = state
        .globals
        .iter()
        .filter(|((_, t), _)| trusted.declares_struct(t))
        .map(|(_, l)| *l)
        .collect();
    let locals_ok = frame
        .locals
        .iter()
        .all(|(x, v)| abs.locals.get(x).is_some_and(|a| matches_abs(v, *a, &protected, true)));
    let seg = state.segment();
    locals_ok
        && seg.len() == abs.stack.len()
        && seg.iter().zip(&abs.stack).all(|(e, a)| match e {
            StackEntry::Value(v) => matches_abs(v, *a, &protected, false),
            StackEntry::Canary(_) => false,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::parse_module;
    use AbsVal::*;

    #[test]
    fn join_table() {
        assert_eq!(NoRef.join(OkRef), InRef);
        assert_eq!(OkRef.join(NoRef), InRef);
        assert_eq!(NoRef.join(NoRef), NoRef);
        assert_eq!(OkRef.join(OkRef), OkRef);
        for a in AbsVal::ALL {
            assert_eq!(a.join(InRef), InRef);
        }
        assert!(NoRef.leq(InRef) && OkRef.leq(InRef));
        assert!(!NoRef.leq(OkRef) && !OkRef.leq(NoRef));
    }

    fn flags(src: &str, relevant: &[(&str, &str)], strict: bool) -> BTreeSet<String> {
        let env = parse_module(src).unwrap();
        let mid = env.modules.keys().next().unwrap().clone();
        let cfg = Config {
            relevant: relevant.iter().map(|(s, f)| mid.struct_tag(s).field(f)).collect(),
            strict,
        };
        analyze_with(&env, &BTreeSet::new(), &cfg).unwrap().flagged_names()
    }

    const COUNTER: &str = "module 0x1 M\nstruct Counter { f: u64 }\n\
        proc read(&Counter) -> (&u64) public:\n BorrowFld Counter.f\n Ret\n\
        proc read_mut(&mut Counter) -> (&mut u64) public:\n BorrowFld Counter.f\n Ret\n\
        proc borrow(address) -> (&mut Counter) public:\n BorrowGlobal Counter\n Ret\n\
        proc local() -> (&u64):\n LoadConst 1\n StLoc x\n BorrowLoc x\n Ret\n";

    #[test]
    fn relevant_field_borrow_is_flagged() {
        let f = flags(COUNTER, &[("Counter", "f")], false);
        assert_eq!(f, ["borrow", "read", "read_mut"].map(String::from).into());
    }

    #[test]
    fn irrelevant_field_borrow_passes() {
        assert_eq!(flags(COUNTER, &[], false), ["borrow"].map(String::from).into());
    }

    #[test]
    fn strict_mode_ignores_immutable_returns() {
        let f = flags(COUNTER, &[("Counter", "f")], true);
        assert_eq!(f, ["borrow", "read_mut"].map(String::from).into());
    }

    #[test]
    fn loop_reaches_fixpoint_quickly() {
        let src = "module 0x1 M\nproc f(u64) -> ():\n StLoc n\n top:\n BorrowLoc n\n ReadRef\n \
                   LoadConst 0\n Op Lt\n BranchCond top\n Ret\n";
        let env = parse_module(src).unwrap();
        let pid = ModuleId::new(1, "M").proc_id("f");
        let a = analyze_proc(&Config::default(), &env, &pid).unwrap();
        assert!(a.flagged.is_empty());
        assert!(a.sweeps <= 2, "took {} sweeps", a.sweeps);
    }

    #[test]
    fn call_with_inref_argument_returns_inref() {
        let src = "module 0x1 M\nstruct S { v: u64 }\n\
                   proc id(&mut u64) -> (&mut u64):\n Ret\n\
                   proc leak(&mut S) -> (&mut u64) public:\n BorrowFld S.v\n Call id\n Ret\n";
        assert_eq!(flags(src, &[("S", "v")], false), ["leak"].map(String::from).into());
        assert!(flags(src, &[], false).is_empty());
    }

    #[test]
    fn underflow_is_an_error() {
        let env = parse_module("module 0x1 M\nproc f() -> ():\n Pop\n Ret\n").unwrap();
        let pid = ModuleId::new(1, "M").proc_id("f");
        assert!(matches!(
            analyze_proc(&Config::default(), &env, &pid),
            Err(TransferError::Depth { pc: 0, .. })
        ));
    }
}
