// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Small-step interpreter.
//!
//! The first operand of an instruction is the top of the stack: `WriteRef`
//! expects the value above the reference, `MoveTo` the address above the
//! record, `Pack` the first field on top and `Op` computes `top op below`.
//! Call arguments and return values are pushed in signature order.

use crate::{ir::*, state::*};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StuckReason {
    StackUnderflow,
    CanaryOnTop,
    TypeMismatch(&'static str),
    UnboundLocal(Ident),
    DanglingLocation(Loc),
    BadPath,
    UnknownStruct(StructTag),
    UnknownProc(ProcId),
    MissingGlobal(Address, StructTag),
    ArityMismatch { expected: usize, found: usize },
    WrongCanary,
    PcOutOfRange(ProcId, usize),
}

impl fmt::Display for StuckReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StuckReason::StackUnderflow => write!(f, "operand stack underflow"),
            StuckReason::CanaryOnTop => write!(f, "frame boundary on top of stack"),
            StuckReason::TypeMismatch(what) => write!(f, "type mismatch: {what}"),
            StuckReason::UnboundLocal(x) => write!(f, "unbound local {x}"),
            StuckReason::DanglingLocation(l) => write!(f, "dangling location {l}"),
            StuckReason::BadPath => write!(f, "reference path does not resolve"),
            StuckReason::UnknownStruct(t) => write!(f, "unknown struct {t}"),
            StuckReason::UnknownProc(p) => write!(f, "unknown proc {p}"),
            StuckReason::MissingGlobal(a, t) => write!(f, "no {t} stored at {a}"),
            StuckReason::ArityMismatch { expected, found } => {
                write!(f, "expected {expected} values, found {found}")
            }
            StuckReason::WrongCanary => write!(f, "return does not match frame boundary"),
            StuckReason::PcOutOfRange(p, pc) => write!(f, "pc {pc} out of range in {p}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbortReason {
    ArithmeticError,
    KeyOccupied,
    Explicit,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::ArithmeticError => write!(f, "arithmetic error"),
            AbortReason::KeyOccupied => write!(f, "global key already occupied"),
            AbortReason::Explicit => write!(f, "abort"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fault {
    Stuck(StuckReason),
    Aborted(AbortReason),
}

fn stuck<T>(r: StuckReason) -> Result<T, Fault> {
    Err(Fault::Stuck(r))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LookupError {
    Halted,
    UnknownProc(ProcId),
    PcOutOfRange(ProcId, usize),
}

pub fn lookup_instr<'e>(env: &'e CodeEnv, state: &State) -> Result<&'e Instr, LookupError> {
    let frame = state.callstack.last().ok_or(LookupError::Halted)?;
    let def = env
        .proc(&frame.proc)
        .ok_or_else(|| LookupError::UnknownProc(frame.proc.clone()))?;
    def.code
        .get(frame.pc)
        .ok_or_else(|| LookupError::PcOutOfRange(frame.proc.clone(), frame.pc))
}

fn pop_value(stack: &mut Vec<StackEntry>) -> Result<Value, Fault> {
    match stack.pop() {
        Some(StackEntry::Value(v)) => Ok(v),
        Some(c) => {
            stack.push(c);
            stuck(StuckReason::CanaryOnTop)
        }
        None => stuck(StuckReason::StackUnderflow),
    }
}

fn pop_ref(stack: &mut Vec<StackEntry>) -> Result<Reference, Fault> {
    match pop_value(stack)? {
        Value::Ref(r) => Ok(r),
        _ => stuck(StuckReason::TypeMismatch("expected reference")),
    }
}

fn pop_address(stack: &mut Vec<StackEntry>) -> Result<Address, Fault> {
    match pop_value(stack)? {
        Value::Address(a) => Ok(a),
        _ => stuck(StuckReason::TypeMismatch("expected address")),
    }
}

fn push(stack: &mut Vec<StackEntry>, v: Value) {
    stack.push(StackEntry::Value(v));
}

/// Whether `v` is a value of type `ty`; references are checked through memory.
pub fn conforms(memory: &Memory, v: &Value, ty: &Type) -> bool {
    match (v, ty) {
        (Value::Bool(_), Type::Bool) | (Value::Nat(_), Type::Nat) => true,
        (Value::Address(_), Type::Address) => true,
        (Value::Record(r), Type::Struct(tag)) => r.tag == *tag,
        (Value::Ref(r), Type::Ref { inner, .. }) => {
            memory.deref(r).is_some_and(|target| conforms(memory, target, inner))
        }
        _ => false,
    }
}

fn op(kind: OpKind, v: Value, w: Value) -> Result<Value, Fault> {
    use Value::{Bool, Nat};
    let arith = |r: Option<u64>| r.map(Nat).ok_or(Fault::Aborted(AbortReason::ArithmeticError));
    match (kind, v, w) {
        (OpKind::Add, Nat(a), Nat(b)) => arith(a.checked_add(b)),
        (OpKind::Sub, Nat(a), Nat(b)) => arith(a.checked_sub(b)),
        (OpKind::Mul, Nat(a), Nat(b)) => arith(a.checked_mul(b)),
        (OpKind::Lt, Nat(a), Nat(b)) => Ok(Bool(a < b)),
        (OpKind::Le, Nat(a), Nat(b)) => Ok(Bool(a <= b)),
        (OpKind::And, Bool(a), Bool(b)) => Ok(Bool(a && b)),
        (OpKind::Or, Bool(a), Bool(b)) => Ok(Bool(a || b)),
        (OpKind::Eq, a, b) if !matches!(a, Value::Ref(_) | Value::Loc(_)) && a.same_shape(&b) => Ok(Bool(a == b)),
        _ => stuck(StuckReason::TypeMismatch("operator operands")),
    }
}

/// Applies an instruction that touches only memory, locals and the stack.
pub fn exec_local(
    instr: &Instr,
    memory: &mut Memory,
    locals: &mut Locals,
    stack: &mut Vec<StackEntry>,
) -> Result<(), Fault> {
    match instr {
        Instr::Pop => {
            pop_value(stack)?;
        }
        Instr::LoadConst(c) => push(stack, Value::from(*c)),
        Instr::Op(kind) => {
            let v = pop_value(stack)?;
            let w = pop_value(stack)?;
            push(stack, op(*kind, v, w)?);
        }
        Instr::StLoc(x) => match pop_value(stack)? {
            v if v.is_storable() => {
                if let Some(Value::Loc(old)) = locals.get(x) {
                    memory.remove(*old);
                }
                let l = memory.alloc(v);
                locals.insert(x.clone(), Value::Loc(l));
            }
            v @ Value::Ref(_) => {
                locals.insert(x.clone(), v);
            }
            _ => return stuck(StuckReason::TypeMismatch("location on stack")),
        },
        Instr::MvLoc(x) => match locals.remove(x) {
            Some(Value::Loc(l)) => {
                let v = memory.remove(l).ok_or(Fault::Stuck(StuckReason::DanglingLocation(l)))?;
                push(stack, v);
            }
            Some(v @ Value::Ref(_)) => push(stack, v),
            Some(_) | None => return stuck(StuckReason::UnboundLocal(x.clone())),
        },
        Instr::CpLoc(x) => match locals.get(x) {
            Some(Value::Loc(l)) => {
                let v = memory
                    .get(*l)
                    .ok_or(Fault::Stuck(StuckReason::DanglingLocation(*l)))?
                    .clone();
                push(stack, v);
            }
            Some(v @ Value::Ref(_)) => {
                let v = v.clone();
                push(stack, v)
            }
            Some(_) | None => return stuck(StuckReason::UnboundLocal(x.clone())),
        },
        Instr::BorrowLoc(x) => match locals.get(x) {
            Some(Value::Loc(l)) => {
                let r = Reference {
                    loc: *l,
                    path: vec![],
                    mutable: true,
                };
                push(stack, Value::Ref(r));
            }
            _ => return stuck(StuckReason::UnboundLocal(x.clone())),
        },
        Instr::ReadRef => {
            let r = pop_ref(stack)?;
            let v = deref_checked(memory, &r)?.clone();
            push(stack, v);
        }
        Instr::WriteRef => {
            let v = pop_value(stack)?;
            let r = pop_ref(stack)?;
            if !v.is_storable() {
                return stuck(StuckReason::TypeMismatch("writing a non-storable value"));
            }
            let cell = memory
                .get_mut(r.loc)
                .ok_or(Fault::Stuck(StuckReason::DanglingLocation(r.loc)))?;
            let slot = cell.at_path_mut(&r.path).ok_or(Fault::Stuck(StuckReason::BadPath))?;
            if !slot.same_shape(&v) {
                return stuck(StuckReason::TypeMismatch("write changes the value's type"));
            }
            *slot = v;
        }
        Instr::BorrowFld(fr) => {
            let mut r = pop_ref(stack)?;
            match deref_checked(memory, &r)? {
                Value::Record(rec) if rec.tag == fr.tag && rec.field(&fr.field).is_some() => {}
                _ => return stuck(StuckReason::TypeMismatch("field borrow on wrong struct")),
            }
            r.path.push(fr.field.clone());
            push(stack, Value::Ref(r));
        }
        _ => unreachable!("{} is not a local instruction", instr.mnemonic()),
    }
    Ok(())
}

fn deref_checked<'m>(memory: &'m Memory, r: &Reference) -> Result<&'m Value, Fault> {
    let cell = memory
        .get(r.loc)
        .ok_or(Fault::Stuck(StuckReason::DanglingLocation(r.loc)))?;
    cell.at_path(&r.path).ok_or(Fault::Stuck(StuckReason::BadPath))
}

/// Applies a global-storage instruction executed by a procedure of `module`.
pub fn exec_global(
    env: &CodeEnv,
    module: &ModuleId,
    instr: &Instr,
    memory: &mut Memory,
    globals: &mut Globals,
    stack: &mut Vec<StackEntry>,
) -> Result<(), Fault> {
    let name = match instr {
        Instr::MoveTo(s)
        | Instr::MoveFrom(s)
        | Instr::BorrowGlobal(s)
        | Instr::Exists(s)
        | Instr::Pack(s)
        | Instr::Unpack(s) => s,
        _ => unreachable!("{} is not a global instruction", instr.mnemonic()),
    };
    let tag = StructTag {
        module: module.clone(),
        name: name.clone(),
    };
    let Some(def) = env.struct_def(&tag) else {
        return stuck(StuckReason::UnknownStruct(tag));
    };
    match instr {
        Instr::MoveTo(_) => {
            let a = pop_address(stack)?;
            let v = pop_value(stack)?;
            if !matches!(&v, Value::Record(r) if r.tag == tag) {
                return stuck(StuckReason::TypeMismatch("publishing a record of another type"));
            }
            let key = (a, tag);
            if globals.contains_key(&key) {
                return Err(Fault::Aborted(AbortReason::KeyOccupied));
            }
            let l = memory.alloc(v);
            globals.insert(key, l);
        }
        Instr::MoveFrom(_) => {
            let a = pop_address(stack)?;
            let key = (a, tag);
            let Some(l) = globals.remove(&key) else {
                return stuck(StuckReason::MissingGlobal(key.0, key.1));
            };
            let v = memory.remove(l).ok_or(Fault::Stuck(StuckReason::DanglingLocation(l)))?;
            push(stack, v);
        }
        Instr::BorrowGlobal(_) => {
            let a = pop_address(stack)?;
            let key = (a, tag);
            let Some(l) = globals.get(&key) else {
                return stuck(StuckReason::MissingGlobal(key.0, key.1));
            };
            let r = Reference {
                loc: *l,
                path: vec![],
                mutable: true,
            };
            push(stack, Value::Ref(r));
        }
        Instr::Exists(_) => {
            let a = pop_address(stack)?;
            push(stack, Value::Bool(globals.contains_key(&(a, tag))));
        }
        Instr::Pack(_) => {
            let mut fields = Vec::with_capacity(def.fields.len());
            for (f, ty) in &def.fields {
                let v = pop_value(stack)?;
                if !conforms(memory, &v, ty) {
                    return stuck(StuckReason::TypeMismatch("field value"));
                }
                fields.push((f.clone(), v));
            }
            push(stack, Value::Record(Record { tag, fields }));
        }
        Instr::Unpack(_) => match pop_value(stack)? {
            Value::Record(r) if r.tag == tag => {
                for (_, v) in r.fields.into_iter().rev() {
                    push(stack, v);
                }
            }
            _ => return stuck(StuckReason::TypeMismatch("unpacking a record of another type")),
        },
        _ => unreachable!(),
    }
    Ok(())
}

/// Owned counterpart of [`exec_local`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalState {
    pub memory: Memory,
    pub locals: Locals,
    pub stack: Vec<StackEntry>,
}

pub fn step_local(instr: &Instr, mut s: LocalState) -> Result<LocalState, Fault> {
    exec_local(instr, &mut s.memory, &mut s.locals, &mut s.stack)?;
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalState {
    pub memory: Memory,
    pub globals: Globals,
    pub stack: Vec<StackEntry>,
}

pub fn step_global(env: &CodeEnv, module: &ModuleId, instr: &Instr, mut s: GlobalState) -> Result<GlobalState, Fault> {
    exec_global(env, module, instr, &mut s.memory, &mut s.globals, &mut s.stack)?;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Halted,
}

/// Executes one instruction in place. After a fault the state is unspecified.
pub fn step_mut(env: &CodeEnv, state: &mut State) -> Result<Control, Fault> {
    let instr = match lookup_instr(env, state) {
        Ok(i) => i,
        Err(LookupError::Halted) => return Ok(Control::Halted),
        Err(LookupError::UnknownProc(p)) => return stuck(StuckReason::UnknownProc(p)),
        Err(LookupError::PcOutOfRange(p, pc)) => return stuck(StuckReason::PcOutOfRange(p, pc)),
    };
    let State {
        callstack,
        memory,
        globals,
        stack,
    } = state;
    let frame = callstack.last_mut().expect("lookup succeeded");
    match instr {
        Instr::Call(target) => {
            let Some(callee) = env.proc(target) else {
                return stuck(StuckReason::UnknownProc(target.clone()));
            };
            let n = callee.params.len();
            let base = stack.len().checked_sub(n);
            let args_ok = base.is_some_and(|b| {
                stack[b..]
                    .iter()
                    .zip(&callee.params)
                    .all(|(e, ty)| e.as_value().is_some_and(|v| conforms(memory, v, ty)))
            });
            if !args_ok {
                let found = stack.len() - state_segment_start(stack);
                if found < n {
                    return stuck(StuckReason::ArityMismatch { expected: n, found });
                }
                return stuck(StuckReason::TypeMismatch("call argument"));
            }
            stack.insert(base.unwrap(), StackEntry::Canary(target.clone()));
            callstack.push(Frame::new(target.clone()));
        }
        Instr::Ret => {
            let returns = &env.proc(&frame.proc).expect("lookup succeeded").returns;
            let k = state_segment_start(stack);
            if k == 0 || stack[k - 1] != StackEntry::Canary(frame.proc.clone()) {
                return stuck(StuckReason::WrongCanary);
            }
            let found = stack.len() - k;
            if found != returns.len() {
                return stuck(StuckReason::ArityMismatch {
                    expected: returns.len(),
                    found,
                });
            }
            let typed = stack[k..]
                .iter()
                .zip(returns)
                .all(|(e, ty)| e.as_value().is_some_and(|v| conforms(memory, v, ty)));
            if !typed {
                return stuck(StuckReason::TypeMismatch("return value"));
            }
            stack.remove(k - 1);
            callstack.pop();
            match callstack.last_mut() {
                Some(caller) => caller.pc += 1,
                None => return Ok(Control::Halted),
            }
        }
        Instr::Branch(t) => frame.pc = *t,
        Instr::BranchCond(t) => match pop_value(stack)? {
            Value::Bool(true) => frame.pc = *t,
            Value::Bool(false) => frame.pc += 1,
            _ => return stuck(StuckReason::TypeMismatch("branch condition")),
        },
        Instr::Abort => return Err(Fault::Aborted(AbortReason::Explicit)),
        Instr::MoveTo(_)
        | Instr::MoveFrom(_)
        | Instr::BorrowGlobal(_)
        | Instr::Exists(_)
        | Instr::Pack(_)
        | Instr::Unpack(_) => {
            exec_global(env, &frame.proc.module, instr, memory, globals, stack)?;
            frame.pc += 1;
        }
        _ => {
            exec_local(instr, memory, &mut frame.locals, stack)?;
            frame.pc += 1;
        }
    }
    Ok(Control::Continue)
}

fn state_segment_start(stack: &[StackEntry]) -> usize {
    stack
        .iter()
        .rposition(|e| matches!(e, StackEntry::Canary(_)))
        .map_or(0, |i| i + 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Next(State),
    Halted(State),
    Aborted(State, AbortReason),
    Stuck(StuckReason),
}

/// Pure single step; an aborting step returns the state it started from.
pub fn step(env: &CodeEnv, state: &State) -> StepOutcome {
    let mut next = state.clone();
    match step_mut(env, &mut next) {
        Ok(Control::Continue) => StepOutcome::Next(next),
        Ok(Control::Halted) => StepOutcome::Halted(next),
        Err(Fault::Aborted(r)) => StepOutcome::Aborted(state.clone(), r),
        Err(Fault::Stuck(r)) => StepOutcome::Stuck(r),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Halted(State),
    Aborted(State, AbortReason),
    Stuck(StuckReason),
    OutOfFuel(State),
}

impl RunOutcome {
    pub fn label(&self) -> String {
        match self {
            RunOutcome::Halted(_) => "halted".into(),
            RunOutcome::Aborted(_, r) => format!("aborted ({r})"),
            RunOutcome::Stuck(r) => format!("stuck ({r})"),
            RunOutcome::OutOfFuel(_) => "out of fuel".into(),
        }
    }

    pub fn state(&self) -> Option<&State> {
        match self {
            RunOutcome::Halted(s) | RunOutcome::Aborted(s, _) | RunOutcome::OutOfFuel(s) => Some(s),
            RunOutcome::Stuck(_) => None,
        }
    }
}

/// Runs for at most `fuel` steps; returns the outcome and the steps taken.
pub fn run(env: &CodeEnv, state: State, fuel: u64) -> (RunOutcome, u64) {
    run_with(env, state, fuel, |_, _| {})
}

/// Like [`run`], calling `observe` with each instruction before it executes.
pub fn run_with(
    env: &CodeEnv,
    mut state: State,
    fuel: u64,
    mut observe: impl FnMut(&State, &Instr),
) -> (RunOutcome, u64) {
    let mut steps = 0;
    loop {
        if state.callstack.is_empty() {
            return (RunOutcome::Halted(state), steps);
        }
        if steps == fuel {
            return (RunOutcome::OutOfFuel(state), steps);
        }
        if let Ok(i) = lookup_instr(env, &state) {
            observe(&state, i);
        }
        let before = state.clone();
        match step_mut(env, &mut state) {
            Ok(Control::Continue) => steps += 1,
            Ok(Control::Halted) => return (RunOutcome::Halted(state), steps + 1),
            Err(Fault::Aborted(r)) => return (RunOutcome::Aborted(before, r), steps),
            Err(Fault::Stuck(r)) => return (RunOutcome::Stuck(r), steps),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mid() -> ModuleId {
        ModuleId::new(1, "M")
    }

    fn counter(f: u64) -> Value {
        Value::Record(Record {
            tag: mid().struct_tag("Counter"),
            fields: vec![(ident("f"), Value::Nat(f))],
        })
    }

    fn stack(vals: &[Value]) -> Vec<StackEntry> {
        vals.iter().cloned().map(StackEntry::Value).collect()
    }

    fn local(stack_vals: &[Value]) -> LocalState {
        LocalState {
            memory: Memory::new(),
            locals: Locals::new(),
            stack: stack(stack_vals),
        }
    }

    #[test]
    fn add_overflow_aborts() {
        let s = local(&[Value::Nat(1), Value::Nat(u64::MAX)]);
        assert_eq!(
            step_local(&Instr::Op(OpKind::Add), s),
            Err(Fault::Aborted(AbortReason::ArithmeticError))
        );
    }

    #[test]
    fn and_of_bools() {
        let s = local(&[Value::Bool(false), Value::Bool(true)]);
        let out = step_local(&Instr::Op(OpKind::And), s).unwrap();
        assert_eq!(out.stack, stack(&[Value::Bool(false)]));
    }

    #[test]
    fn sub_takes_top_as_first_operand() {
        let s = local(&[Value::Nat(3), Value::Nat(10)]);
        let out = step_local(&Instr::Op(OpKind::Sub), s).unwrap();
        assert_eq!(out.stack, stack(&[Value::Nat(7)]));
    }

    #[test]
    fn stloc_then_mvloc_restores_value_and_frees_cell() {
        let s = local(&[Value::Nat(5)]);
        let s = step_local(&Instr::StLoc(ident("x")), s).unwrap();
        assert_eq!(s.memory.len(), 1);
        let s = step_local(&Instr::MvLoc(ident("x")), s).unwrap();
        assert!(s.memory.is_empty());
        assert!(s.locals.is_empty());
        assert_eq!(s.stack, stack(&[Value::Nat(5)]));
    }

    #[test]
    fn writeref_updates_field() {
        let mut memory = Memory::new();
        let l = memory.alloc(counter(1));
        let r = Value::Ref(Reference {
            loc: l,
            path: vec![ident("f")],
            mutable: true,
        });
        let s = LocalState {
            memory,
            locals: Locals::new(),
            stack: stack(&[r, Value::Nat(0)]),
        };
        let out = step_local(&Instr::WriteRef, s).unwrap();
        assert_eq!(out.memory.get(l), Some(&counter(0)));
        assert!(out.stack.is_empty());
    }

    #[test]
    fn writeref_rejects_type_change() {
        let mut memory = Memory::new();
        let l = memory.alloc(counter(1));
        let r = Value::Ref(Reference {
            loc: l,
            path: vec![],
            mutable: true,
        });
        let s = LocalState {
            memory,
            locals: Locals::new(),
            stack: stack(&[r, Value::Nat(0)]),
        };
        assert!(matches!(step_local(&Instr::WriteRef, s), Err(Fault::Stuck(_))));
    }

    #[test]
    fn borrowloc_of_unbound_local_is_stuck() {
        assert_eq!(
            step_local(&Instr::BorrowLoc(ident("x")), local(&[])),
            Err(Fault::Stuck(StuckReason::UnboundLocal(ident("x"))))
        );
    }

    #[test]
    fn pop_on_canary_is_stuck() {
        let s = LocalState {
            memory: Memory::new(),
            locals: Locals::new(),
            stack: vec![StackEntry::Canary(mid().proc_id("main"))],
        };
        assert_eq!(step_local(&Instr::Pop, s), Err(Fault::Stuck(StuckReason::CanaryOnTop)));
    }

    fn counter_env() -> CodeEnv {
        crate::asm::parse_module("module 0x1 M\nstruct Counter { f: u64 }\n").unwrap()
    }

    #[test]
    fn moveto_occupied_key_aborts() {
        let env = counter_env();
        let mut memory = Memory::new();
        let l = memory.alloc(counter(1));
        let tag = mid().struct_tag("Counter");
        let mut globals = Globals::new();
        globals.insert((Address(0xB055), tag), l);
        let s = GlobalState {
            memory,
            globals,
            stack: stack(&[counter(2), Value::Address(Address(0xB055))]),
        };
        assert_eq!(
            step_global(&env, &mid(), &Instr::MoveTo(ident("Counter")), s),
            Err(Fault::Aborted(AbortReason::KeyOccupied))
        );
    }

    #[test]
    fn moveto_then_movefrom_round_trips() {
        let env = counter_env();
        let s = GlobalState {
            memory: Memory::new(),
            globals: Globals::new(),
            stack: stack(&[counter(2), Value::Address(Address(7))]),
        };
        let s = step_global(&env, &mid(), &Instr::MoveTo(ident("Counter")), s).unwrap();
        assert_eq!(s.globals.len(), 1);
        let mut s = s;
        s.stack.push(StackEntry::Value(Value::Address(Address(7))));
        let s = step_global(&env, &mid(), &Instr::MoveFrom(ident("Counter")), s).unwrap();
        assert!(s.globals.is_empty());
        assert_eq!(s.stack, stack(&[counter(2)]));
    }

    #[test]
    fn pack_unpack_round_trip() {
        let env = crate::asm::parse_module("module 0x1 M\nstruct P { a: u64, b: bool }\n").unwrap();
        let s = GlobalState {
            memory: Memory::new(),
            globals: Globals::new(),
            stack: stack(&[Value::Bool(true), Value::Nat(4)]),
        };
        let packed = step_global(&env, &mid(), &Instr::Pack(ident("P")), s.clone()).unwrap();
        match &packed.stack[0] {
            StackEntry::Value(Value::Record(r)) => {
                assert_eq!(r.field("a"), Some(&Value::Nat(4)));
                assert_eq!(r.field("b"), Some(&Value::Bool(true)));
            }
            other => panic!("expected record, got {other:?}"),
        }
        let unpacked = step_global(&env, &mid(), &Instr::Unpack(ident("P")), packed).unwrap();
        assert_eq!(unpacked.stack, s.stack);
    }
}
