// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Bounded oracles: exhaustive attacker search and a bounded check that
//! each public procedure preserves the invariant on its own.

use crate::{
    asm::serialize_module,
    invariants::{attacker_part, first_failing_action, inv_sat, pred_holds, strong, AddrFilter, EvalError, Invariant},
    ir::*,
    linking::{initial_config, link, validate_attacker, Attacker, LinkError},
    state::*,
    traces::{pending_action, run_trace, step_labeled, ActionKind, Trace},
    vm::{step_mut, Control, Fault},
};
use std::{
    collections::{hash_map::DefaultHasher, BTreeSet, HashMap},
    hash::{Hash, Hasher},
};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bounds {
    /// Attacker body length, not counting the stack-clearing epilogue.
    pub max_instr: usize,
    pub values: Vec<u64>,
    pub addrs: Vec<Address>,
    /// Step budget for one attacker run or one local-check run.
    pub fuel: u64,
    pub max_locals: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_instr: 6,
            values: vec![0, 1, 2],
            addrs: vec![Address(0x1), Address(0x7)],
            fuel: 10_000,
            max_locals: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("harness state for {0} is not strongly safe")]
    UnsafeHarness(String),
}

pub const ATTACKER_ADDR: u128 = 0xA77AC;

pub fn attacker_module_id() -> ModuleId {
    ModuleId::new(ATTACKER_ADDR, "Attacker")
}

fn stash_struct() -> StructDef {
    StructDef {
        name: ident("Stash"),
        fields: vec![(ident("amount"), Type::Nat)],
    }
}

fn var(i: usize) -> Ident {
    ident(&format!("x{i}"))
}

/// Types ignoring reference mutability, which the machine does not enforce.
fn same_type(a: &Type, b: &Type) -> bool {
    match (a, b) {
        (Type::Ref { inner: x, .. }, Type::Ref { inner: y, .. }) => same_type(x, y),
        _ => a == b,
    }
}

/// Static shape of an attacker prefix: operand types and local slots.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TypedState {
    pub stack: Vec<Type>,
    pub locals: Vec<Option<Type>>,
}

/// Straight-line attacker bodies, typed so that every instruction can run.
pub struct Grammar {
    callables: Vec<(ProcId, Vec<Type>, Vec<Type>)>,
    consts: Vec<Const>,
    max_locals: usize,
    stash: StructTag,
}

impl Grammar {
    pub fn new(trusted: &CodeEnv, bounds: &Bounds) -> Grammar {
        let callables: Vec<_> = trusted
            .procs()
            .filter(|(_, p)| p.public)
            .map(|(id, p)| (id, p.params.clone(), p.returns.clone()))
            .collect();
        let wants_bool = callables
            .iter()
            .any(|(_, params, _)| params.iter().any(|t| matches!(t, Type::Bool)));
        let mut consts: Vec<Const> = bounds.values.iter().map(|v| Const::Nat(*v)).collect();
        consts.extend(bounds.addrs.iter().map(|a| Const::Address(*a)));
        if wants_bool {
            consts.extend([Const::Bool(false), Const::Bool(true)]);
        }
        Grammar {
            callables,
            consts,
            max_locals: bounds.max_locals,
            stash: attacker_module_id().struct_tag("Stash"),
        }
    }

    pub fn start(&self) -> TypedState {
        TypedState {
            stack: vec![Type::Nat],
            locals: vec![],
        }
    }

    /// Candidate next instructions, in enumeration order.
    pub fn candidates(&self, ts: &TypedState) -> Vec<Instr> {
        let mut out: Vec<Instr> = self.consts.iter().map(|c| Instr::LoadConst(*c)).collect();
        let n = ts.stack.len();
        for (id, params, _) in &self.callables {
            let k = params.len();
            if k <= n && ts.stack[n - k..].iter().zip(params).all(|(s, p)| same_type(s, p)) {
                out.push(Instr::Call(id.clone()));
            }
        }
        if n > 0 {
            let slots = (ts.locals.len() + 1).min(self.max_locals);
            out.extend((0..slots).map(|i| Instr::StLoc(var(i))));
        }
        for (i, slot) in ts.locals.iter().enumerate() {
            if slot.is_some() {
                out.push(Instr::MvLoc(var(i)));
                out.push(Instr::CpLoc(var(i)));
            }
        }
        for (i, slot) in ts.locals.iter().enumerate() {
            if matches!(slot, Some(t) if !t.is_ref()) {
                out.push(Instr::BorrowLoc(var(i)));
            }
        }
        let top = ts.stack.last();
        if let Some(Type::Ref { .. }) = top {
            out.push(Instr::ReadRef);
        }
        if n >= 2 {
            if let Type::Ref { inner, .. } = &ts.stack[n - 2] {
                if same_type(inner, &ts.stack[n - 1]) {
                    out.push(Instr::WriteRef);
                }
            }
        }
        if n > 0 {
            out.push(Instr::Pop);
        }
        let stash = Type::Struct(self.stash.clone());
        if top == Some(&Type::Nat) {
            out.push(Instr::Pack(self.stash.name.clone()));
        }
        if top == Some(&Type::Address) {
            if n >= 2 && ts.stack[n - 2] == stash {
                out.push(Instr::MoveTo(self.stash.name.clone()));
            }
            out.push(Instr::MoveFrom(self.stash.name.clone()));
            out.push(Instr::BorrowGlobal(self.stash.name.clone()));
        }
        out
    }

    pub fn apply(&self, ts: &TypedState, instr: &Instr) -> TypedState {
        let mut t = ts.clone();
        let stash = Type::Struct(self.stash.clone());
        let slot = |x: &Ident| -> usize { x[1..].parse().expect("grammar locals are x<N>") };
        match instr {
            Instr::LoadConst(c) => t.stack.push(match c {
                Const::Bool(_) => Type::Bool,
                Const::Nat(_) => Type::Nat,
                Const::Address(_) => Type::Address,
            }),
            Instr::Call(id) => {
                let (_, params, rets) = self
                    .callables
                    .iter()
                    .find(|(p, _, _)| p == id)
                    .expect("candidate calls are callable");
                t.stack.truncate(t.stack.len() - params.len());
                t.stack.extend(rets.iter().cloned());
            }
            Instr::StLoc(x) => {
                let i = slot(x);
                let ty = t.stack.pop();
                if i == t.locals.len() {
                    t.locals.push(ty);
                } else {
                    t.locals[i] = ty;
                }
            }
            Instr::MvLoc(x) => {
                let ty = t.locals[slot(x)].take().expect("bound");
                t.stack.push(ty);
            }
            Instr::CpLoc(x) => {
                let ty = t.locals[slot(x)].clone().expect("bound");
                t.stack.push(ty);
            }
            Instr::BorrowLoc(x) => {
                let ty = t.locals[slot(x)].clone().expect("bound");
                t.stack.push(Type::reference(true, ty));
            }
            Instr::ReadRef => match t.stack.pop() {
                Some(Type::Ref { inner, .. }) => t.stack.push(*inner),
                _ => unreachable!(),
            },
            Instr::WriteRef | Instr::MoveTo(_) => {
                t.stack.truncate(t.stack.len() - 2);
            }
            Instr::Pop => {
                t.stack.pop();
            }
            Instr::Pack(_) => {
                t.stack.pop();
                t.stack.push(stash);
            }
            Instr::MoveFrom(_) => {
                t.stack.pop();
                t.stack.push(stash);
            }
            Instr::BorrowGlobal(_) => {
                t.stack.pop();
                t.stack.push(Type::reference(true, stash));
            }
            _ => unreachable!("{} is outside the attacker grammar", instr.mnemonic()),
        }
        t
    }
}

/// The attacker module for a body: `body`, one `Pop` per leftover operand, `Ret`.
pub fn build_attacker(body: &[Instr], leftover: usize) -> Attacker {
    let mid = attacker_module_id();
    let mut code = body.to_vec();
    code.extend(std::iter::repeat_n(Instr::Pop, leftover));
    code.push(Instr::Ret);
    let mut m = Module::new(mid.clone());
    let stash = stash_struct();
    m.structs.insert(stash.name.clone(), stash);
    m.procs.insert(
        ident("main"),
        ProcDef {
            name: ident("main"),
            params: vec![Type::Nat],
            returns: vec![],
            public: true,
            code,
        },
    );
    Attacker {
        env: CodeEnv::from_modules([m]),
        main: mid.proc_id("main"),
    }
}

/// Every attacker up to the bounds, shortest first, each length in
/// candidate order. Only practical for small bounds.
pub fn enumerate_attackers(trusted: &CodeEnv, bounds: &Bounds) -> Vec<Attacker> {
    let g = Grammar::new(trusted, bounds);
    let mut out = vec![];
    for len in 0..=bounds.max_instr {
        let mut body = vec![];
        enumerate_at(&g, &g.start(), len, &mut body, &mut |body, ts| {
            out.push(build_attacker(body, ts.stack.len()))
        });
    }
    out
}

/// Number of attackers [`enumerate_attackers`] would produce.
pub fn count_attackers(trusted: &CodeEnv, bounds: &Bounds) -> u64 {
    let g = Grammar::new(trusted, bounds);
    let mut n = 0;
    for len in 0..=bounds.max_instr {
        enumerate_at(&g, &g.start(), len, &mut vec![], &mut |_, _| n += 1);
    }
    n
}

fn enumerate_at(
    g: &Grammar,
    ts: &TypedState,
    remaining: usize,
    body: &mut Vec<Instr>,
    emit: &mut dyn FnMut(&[Instr], &TypedState),
) {
    if remaining == 0 {
        emit(body, ts);
        return;
    }
    for i in g.candidates(ts) {
        let next = g.apply(ts, &i);
        body.push(i);
        enumerate_at(g, &next, remaining - 1, body, emit);
        body.pop();
    }
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub attacker: Attacker,
    pub trace: Trace,
    /// Index of the first action whose snapshot breaks the invariant.
    pub failing: usize,
    /// Attacker runs executed before this one was found.
    pub attackers_run: u64,
}

impl Counterexample {
    /// Instructions of `main` before the trailing `Pop`s and the final `Ret`.
    pub fn body_len(&self) -> usize {
        self.attacker.env.proc(&self.attacker.main).map_or(0, |p| {
            let code = &p.code[..p.code.len().saturating_sub(1)];
            code.len() - code.iter().rev().take_while(|i| **i == Instr::Pop).count()
        })
    }

    pub fn assembly(&self) -> String {
        serialize_module(&self.attacker.env)
    }
}

#[derive(Clone, Debug)]
pub enum OracleVerdict {
    NoCounterexample { attackers_run: u64 },
    Counterexample(Box<Counterexample>),
}

enum StepResult {
    Violation,
    Dead,
    Alive(u64),
}

struct Search<'a> {
    env: CodeEnv,
    main: ProcId,
    trusted: &'a CodeEnv,
    inv: &'a Invariant,
    grammar: Grammar,
    bounds: &'a Bounds,
    visited: HashMap<u128, (usize, u64)>,
    path: Vec<Instr>,
    best: Option<(Vec<Instr>, usize)>,
    runs: u64,
    key_buf: Vec<u8>,
}

impl Search<'_> {
    fn set_instr(&mut self, pc: usize, instr: Instr) {
        let code = &mut self.env.proc_mut(&self.main).expect("main exists").code;
        if code.len() <= pc {
            code.resize(pc + 1, Instr::Ret);
        }
        code[pc] = instr;
    }

    /// Runs the instruction at `pc` (including any trusted call it makes)
    /// until control is back in `main` at `pc + 1`.
    fn exec(&self, st: &mut State, pc: usize, mut fuel: u64) -> Result<StepResult, OracleError> {
        loop {
            if fuel >= self.bounds.fuel {
                return Ok(StepResult::Dead);
            }
            let bad = match pending_action(&self.env, self.trusted, st) {
                Some(_) => !inv_sat(self.inv, &st.memory, &st.globals)?,
                None => false,
            };
            match step_mut(&self.env, st) {
                Ok(Control::Continue) => fuel += 1,
                Ok(Control::Halted) | Err(Fault::Stuck(_)) | Err(Fault::Aborted(_)) => return Ok(StepResult::Dead),
            }
            if bad {
                return Ok(StepResult::Violation);
            }
            if st.callstack.len() == 1 && st.callstack[0].pc == pc + 1 {
                return Ok(StepResult::Alive(fuel));
            }
        }
    }

    /// Depth-first over bodies of at most `limit` instructions, in
    /// candidate order. Stops at the first violation.
    fn dfs(&mut self, state: &State, ts: &TypedState, fuel: u64, limit: usize) -> Result<(), OracleError> {
        let depth = self.path.len();
        for instr in self.grammar.candidates(ts) {
            self.set_instr(depth, instr.clone());
            let mut st = state.clone();
            self.runs += 1;
            let next_ts = self.grammar.apply(ts, &instr);
            match self.exec(&mut st, depth, fuel)? {
                StepResult::Dead => {}
                StepResult::Violation => {
                    let mut body = self.path.clone();
                    body.push(instr);
                    self.best = Some((body, next_ts.stack.len()));
                    return Ok(());
                }
                StepResult::Alive(f) => {
                    let depth1 = depth + 1;
                    if depth1 >= limit {
                        continue;
                    }
                    let key = self.state_key(&st, &next_ts);
                    match self.visited.get(&key) {
                        Some((d, used)) if *d <= depth1 && *used <= f => continue,
                        _ => {
                            self.visited.insert(key, (depth1, f));
                        }
                    }
                    self.path.push(instr);
                    self.dfs(&st, &next_ts, f, limit)?;
                    self.path.pop();
                    if self.best.is_some() {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    /// 128-bit digest of the reachable state with locations renamed in
    /// order of first use.
    fn state_key(&mut self, st: &State, ts: &TypedState) -> u128 {
        let mut buf = std::mem::take(&mut self.key_buf);
        buf.clear();
        let mut names: Vec<(Loc, u32)> = vec![];
        let mem = &st.memory;
        for frame in &st.callstack {
            for (x, v) in &frame.locals {
                buf.extend_from_slice(x.as_bytes());
                buf.push(b'=');
                encode_value(v, mem, &mut names, &mut buf);
            }
            buf.push(b'|');
        }
        for e in &st.stack {
            match e {
                StackEntry::Canary(p) => {
                    buf.push(b'^');
                    buf.extend_from_slice(p.name.as_bytes());
                }
                StackEntry::Value(v) => encode_value(v, mem, &mut names, &mut buf),
            }
        }
        buf.push(b'|');
        for ((a, tag), l) in &st.globals {
            buf.extend_from_slice(&a.0.to_le_bytes());
            buf.extend_from_slice(tag.to_string().as_bytes());
            encode_loc(*l, mem, &mut names, &mut buf);
        }
        buf.push(b'|');
        let mut h1 = DefaultHasher::new();
        let mut h2 = DefaultHasher::new();
        0xA5u8.hash(&mut h2);
        buf.hash(&mut h1);
        ts.hash(&mut h1);
        buf.hash(&mut h2);
        ts.hash(&mut h2);
        self.key_buf = buf;
        ((h1.finish() as u128) << 64) | h2.finish() as u128
    }
}

fn encode_loc(l: Loc, mem: &Memory, names: &mut Vec<(Loc, u32)>, buf: &mut Vec<u8>) {
    if let Some((_, n)) = names.iter().find(|(m, _)| *m == l) {
        buf.push(b'@');
        buf.extend_from_slice(&n.to_le_bytes());
        return;
    }
    names.push((l, names.len() as u32));
    match mem.get(l) {
        Some(v) => {
            buf.push(b'#');
            encode_value(v, mem, names, buf);
        }
        None => buf.push(b'!'),
    }
}

fn encode_value(v: &Value, mem: &Memory, names: &mut Vec<(Loc, u32)>, buf: &mut Vec<u8>) {
    match v {
        Value::Bool(b) => buf.extend_from_slice(&[b'b', *b as u8]),
        Value::Nat(n) => {
            buf.push(b'n');
            buf.extend_from_slice(&n.to_le_bytes());
        }
        Value::Address(a) => {
            buf.push(b'a');
            buf.extend_from_slice(&a.0.to_le_bytes());
        }
        Value::Record(r) => {
            buf.push(b'{');
            buf.extend_from_slice(r.tag.name.as_bytes());
            for (_, f) in &r.fields {
                buf.push(b',');
                encode_value(f, mem, names, buf);
            }
            buf.push(b'}');
        }
        Value::Ref(r) => {
            buf.push(b'&');
            encode_loc(r.loc, mem, names, buf);
            for p in &r.path {
                buf.push(b'.');
                buf.extend_from_slice(p.as_bytes());
            }
        }
        Value::Loc(l) => {
            buf.push(b'L');
            encode_loc(*l, mem, names, buf);
        }
    }
}

/// Searches every attacker within `bounds` for one whose trace breaks the
/// invariant. The first counterexample in shortest-first order is returned,
/// then shrunk.
///
/// Prefixes that reach an already-explored state (up to location renaming)
/// with no more budget left are skipped; states are compared by a 128-bit
/// digest.
pub fn robust_safety_oracle(trusted: &CodeEnv, inv: &Invariant, bounds: &Bounds) -> Result<OracleVerdict, OracleError> {
    let template = build_attacker(&vec![Instr::Ret; bounds.max_instr], 0);
    let env = link(trusted, &template.env)?;
    let grammar = Grammar::new(trusted, bounds);
    let start = grammar.start();
    let mut search = Search {
        env,
        main: template.main.clone(),
        trusted,
        inv,
        grammar,
        bounds,
        visited: HashMap::new(),
        path: vec![],
        best: None,
        runs: 0,
        key_buf: vec![],
    };
    let init = initial_config(&template.main);
    // Deepening keeps the first hit shortest, then first in candidate order.
    for limit in 1..=bounds.max_instr {
        search.visited.clear();
        search.dfs(&init, &start, 0, limit)?;
        if search.best.is_some() {
            break;
        }
    }
    let runs = search.runs;
    let Some((body, leftover)) = search.best else {
        return Ok(OracleVerdict::NoCounterexample { attackers_run: runs });
    };
    let attacker = build_attacker(&body, leftover);
    let cx = shrink(trusted, inv, attacker, bounds.fuel + leftover as u64 + 1)?
        .expect("search results replay deterministically");
    Ok(OracleVerdict::Counterexample(Box::new(Counterexample {
        attackers_run: runs,
        ..cx
    })))
}

/// Runs an attacker against trusted code and reports the first failing action.
pub fn replay(
    trusted: &CodeEnv,
    inv: &Invariant,
    attacker: &Attacker,
    fuel: u64,
) -> Result<(Trace, Option<usize>), OracleError> {
    let env = link(trusted, &attacker.env)?;
    let (trace, _) = run_trace(&env, trusted, initial_config(&attacker.main), fuel);
    let failing = first_failing_action(inv, &trace)?;
    Ok((trace, failing))
}

/// Deletes single instructions while the attacker stays valid and its
/// trace still breaks the invariant. `None` if the input is not a
/// counterexample.
pub fn shrink(
    trusted: &CodeEnv,
    inv: &Invariant,
    attacker: Attacker,
    fuel: u64,
) -> Result<Option<Counterexample>, OracleError> {
    let (trace, failing) = replay(trusted, inv, &attacker, fuel)?;
    let Some(mut failing) = failing else {
        return Ok(None);
    };
    let mut current = attacker;
    let mut trace = trace;
    'outer: loop {
        let code = current.env.proc(&current.main).expect("main exists").code.clone();
        for i in 0..code.len() {
            let mut candidate = current.clone();
            candidate
                .env
                .proc_mut(&candidate.main)
                .expect("main exists")
                .code
                .remove(i);
            if validate_attacker(trusted, &candidate).is_err() {
                continue;
            }
            let (t, f) = replay(trusted, inv, &candidate, fuel)?;
            if let Some(f) = f {
                current = candidate;
                trace = t;
                failing = f;
                continue 'outer;
            }
        }
        break;
    }
    Ok(Some(Counterexample {
        attacker: current,
        trace,
        failing,
        attackers_run: 0,
    }))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalStats {
    pub runs: u64,
    pub stuck: u64,
    pub aborted: u64,
    pub out_of_fuel: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalViolation {
    pub proc: ProcId,
    pub inputs: Vec<String>,
    pub seeded: Vec<String>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LocalVerdict {
    Holds(LocalStats),
    Violation(LocalViolation),
}

/// Values of a storable type within the bounds. Records of a struct that
/// has `@any` entries must satisfy them.
pub fn value_domain(env: &CodeEnv, inv: &Invariant, ty: &Type, values: &[u64], addrs: &[Address]) -> Vec<Value> {
    domain_rec(env, inv, ty, values, addrs, 0)
}

fn domain_rec(
    env: &CodeEnv,
    inv: &Invariant,
    ty: &Type,
    values: &[u64],
    addrs: &[Address],
    depth: usize,
) -> Vec<Value> {
    match ty {
        Type::Bool => vec![Value::Bool(false), Value::Bool(true)],
        Type::Nat => values.iter().map(|v| Value::Nat(*v)).collect(),
        Type::Address => addrs.iter().map(|a| Value::Address(*a)).collect(),
        Type::Ref { .. } => vec![],
        Type::Struct(tag) => {
            let Some(def) = env.struct_def(tag) else {
                return vec![];
            };
            if depth > 4 {
                return vec![];
            }
            let per_field: Vec<Vec<Value>> = def
                .fields
                .iter()
                .map(|(_, t)| domain_rec(env, inv, t, values, addrs, depth + 1))
                .collect();
            product(&per_field)
                .into_iter()
                .map(|vals| {
                    Value::Record(Record {
                        tag: tag.clone(),
                        fields: def.fields.iter().map(|(f, _)| f.clone()).zip(vals).collect(),
                    })
                })
                .filter(|r| instance_ok(inv, r).unwrap_or(false))
                .collect()
        }
    }
}

fn product(lists: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut out = vec![vec![]];
    for l in lists {
        let mut next = Vec::with_capacity(out.len() * l.len());
        for prefix in &out {
            for v in l {
                let mut p = prefix.clone();
                p.push(v.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Records (at any depth) of structs with `@any` entries satisfy them.
fn instance_ok(inv: &Invariant, v: &Value) -> Result<bool, EvalError> {
    if let Value::Record(r) = v {
        for e in inv
            .entries
            .iter()
            .filter(|e| e.addr == AddrFilter::Any && e.tag == r.tag)
        {
            if !pred_holds(&e.pred, v)? {
                return Ok(false);
            }
        }
        for (_, f) in &r.fields {
            if !instance_ok(inv, f)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Checks every public trusted procedure, from every bounded strongly safe
/// starting point, for a return that breaks the invariant.
///
/// Arguments and seeded globals range over the bounds; addresses also
/// include those pinned by invariant entries. After the return, records
/// handed back to the caller must satisfy the `@any` entries of their
/// struct, so that values passed in later can be assumed to.
pub fn check_local_inv(trusted: &CodeEnv, inv: &Invariant, bounds: &Bounds) -> Result<LocalVerdict, OracleError> {
    let mut addrs: BTreeSet<Address> = bounds.addrs.iter().copied().collect();
    addrs.extend(inv.pinned_addresses());
    let addrs: Vec<Address> = addrs.into_iter().collect();
    let values = &bounds.values;

    // Global seeds: each governed key is absent or holds a satisfying record.
    let mut slots: Vec<(Address, StructTag)> = vec![];
    for e in &inv.entries {
        let at: Vec<Address> = match e.addr {
            AddrFilter::Any => addrs.clone(),
            AddrFilter::Exactly(a) => vec![a],
        };
        for a in at {
            if !slots.contains(&(a, e.tag.clone())) {
                slots.push((a, e.tag.clone()));
            }
        }
    }
    let mut slot_options: Vec<Vec<Option<Value>>> = vec![];
    for (a, tag) in &slots {
        let mut opts = vec![None];
        for rec in value_domain(trusted, inv, &Type::Struct(tag.clone()), values, &addrs) {
            let mut ok = true;
            for e in inv.entries_for(*a, tag) {
                ok &= pred_holds(&e.pred, &rec)?;
            }
            if ok {
                opts.push(Some(rec));
            }
        }
        slot_options.push(opts);
    }

    let harness_mid = ModuleId::new(ATTACKER_ADDR, "Harness");
    let harness_main = harness_mid.proc_id("main");
    let mut stats = LocalStats::default();
    for (pid, def) in trusted.procs().filter(|(_, p)| p.public) {
        let mut hm = Module::new(harness_mid.clone());
        hm.procs.insert(
            ident("main"),
            ProcDef {
                name: ident("main"),
                params: vec![Type::Nat],
                returns: vec![],
                public: true,
                code: vec![Instr::Call(pid.clone()), Instr::Ret],
            },
        );
        let env = link(trusted, &CodeEnv::from_modules([hm]))?;
        let arg_domains: Vec<Vec<Value>> = def
            .params
            .iter()
            .map(|t| match t {
                Type::Ref { inner, .. } => value_domain(trusted, inv, inner, values, &addrs),
                t => value_domain(trusted, inv, t, values, &addrs),
            })
            .collect();
        for seed in cartesian(&slot_options) {
            for args in product(&arg_domains) {
                let mut memory = Memory::new();
                let mut globals = Globals::new();
                let mut seeded = vec![];
                for ((a, tag), rec) in slots.iter().zip(&seed) {
                    if let Some(rec) = rec {
                        seeded.push(format!("{a} {tag} -> {rec}"));
                        let l = memory.alloc(rec.clone());
                        globals.insert((*a, tag.clone()), l);
                    }
                }
                let mut frame = Frame::new(harness_main.clone());
                let mut stack = vec![StackEntry::Canary(harness_main.clone())];
                for (i, (ty, v)) in def.params.iter().zip(&args).enumerate() {
                    let arg = match ty {
                        Type::Ref { mutable, .. } => {
                            let l = memory.alloc(v.clone());
                            frame.locals.insert(ident(&format!("r{i}")), Value::Loc(l));
                            Value::Ref(Reference {
                                loc: l,
                                path: vec![],
                                mutable: *mutable,
                            })
                        }
                        _ => v.clone(),
                    };
                    stack.push(StackEntry::Value(arg));
                }
                let mut st = State {
                    callstack: vec![frame],
                    memory,
                    globals,
                    stack,
                };
                if !strong(inv, trusted, &st)? {
                    return Err(OracleError::UnsafeHarness(pid.to_string()));
                }
                stats.runs += 1;
                let violation = |reason: String| {
                    LocalVerdict::Violation(LocalViolation {
                        proc: pid.clone(),
                        inputs: args.iter().map(|v| v.to_string()).collect(),
                        seeded: seeded.clone(),
                        reason,
                    })
                };
                let mut steps = 0;
                loop {
                    if steps >= bounds.fuel {
                        stats.out_of_fuel += 1;
                        break;
                    }
                    match step_labeled(&env, trusted, &mut st) {
                        Ok((_, action)) => {
                            steps += 1;
                            if let Some(a) = action {
                                if matches!(a.kind, ActionKind::RetOut(_)) && !inv_sat(inv, &a.memory, &a.globals)? {
                                    return Ok(violation("invariant broken at return".into()));
                                }
                            }
                        }
                        Err(Fault::Stuck(_)) => {
                            stats.stuck += 1;
                            break;
                        }
                        Err(Fault::Aborted(_)) => {
                            stats.aborted += 1;
                            break;
                        }
                    }
                    if st.callstack.len() == 1 {
                        if !inv_sat(inv, &st.memory, &st.globals)? {
                            return Ok(violation("invariant broken after return".into()));
                        }
                        let held = attacker_part(trusted, &st);
                        for v in held.stack.iter().chain(held.memory.values()) {
                            if !instance_ok(inv, v)? {
                                return Ok(violation(format!("returned record {v} breaks the invariant")));
                            }
                        }
                        break;
                    }
                }
            }
        }
    }
    Ok(LocalVerdict::Holds(stats))
}

fn cartesian(options: &[Vec<Option<Value>>]) -> Vec<Vec<Option<Value>>> {
    let mut out = vec![vec![]];
    for opts in options {
        let mut next = vec![];
        for prefix in &out {
            for o in opts {
                let mut p = prefix.clone();
                p.push(o.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}
