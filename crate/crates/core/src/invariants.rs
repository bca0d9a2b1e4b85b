// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Per-location global invariants, trace checks and the attacker partition.
//!
//! Invariant files are line based:
//!
//! ```text
//! owner 0x1 Counter
//! entry Counter @any : .f > 0
//! entry Info @0xB055 : .total_supply <= 1000
//! relevant Coin.value
//! ```

use crate::{ir::*, state::*, traces::Action};
use std::{
    collections::{BTreeMap, BTreeSet},
    fmt,
};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AddrFilter {
    Any,
    Exactly(Address),
}

impl AddrFilter {
    pub fn matches(&self, a: Address) -> bool {
        match self {
            AddrFilter::Any => true,
            AddrFilter::Exactly(b) => a == *b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

/// Predicate over a single record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pred {
    Field(Vec<Ident>),
    Nat(u64),
    Bool(bool),
    Addr(Address),
    Not(Box<Pred>),
    Bin(BinOp, Box<Pred>, Box<Pred>),
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pred::Field(path) => {
                for p in path {
                    write!(f, ".{p}")?;
                }
                Ok(())
            }
            Pred::Nat(n) => write!(f, "{n}"),
            Pred::Bool(b) => write!(f, "{b}"),
            Pred::Addr(a) => write!(f, "@{a}"),
            Pred::Not(p) => write!(f, "(not {p})"),
            Pred::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("record has no field path {0}")]
    MissingField(String),
    #[error("type error in predicate: {0}")]
    Type(&'static str),
    #[error("arithmetic overflow in predicate")]
    Overflow,
    #[error("global {0} points to a freed location")]
    Dangling(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PVal {
    Nat(u64),
    Bool(bool),
    Addr(Address),
}

fn eval(p: &Pred, rec: &Value) -> Result<PVal, EvalError> {
    Ok(match p {
        Pred::Field(path) => {
            let missing = || EvalError::MissingField(path.iter().map(|s| format!(".{s}")).collect::<String>());
            if !matches!(rec, Value::Record(_)) {
                return Err(missing());
            }
            match rec.at_path(path).ok_or_else(missing)? {
                Value::Nat(n) => PVal::Nat(*n),
                Value::Bool(b) => PVal::Bool(*b),
                Value::Address(a) => PVal::Addr(*a),
                _ => return Err(EvalError::Type("field is not a ground value")),
            }
        }
        Pred::Nat(n) => PVal::Nat(*n),
        Pred::Bool(b) => PVal::Bool(*b),
        Pred::Addr(a) => PVal::Addr(*a),
        Pred::Not(q) => match eval(q, rec)? {
            PVal::Bool(b) => PVal::Bool(!b),
            _ => return Err(EvalError::Type("`not` expects a boolean")),
        },
        Pred::Bin(op, a, b) => {
            let (x, y) = (eval(a, rec)?, eval(b, rec)?);
            use PVal::*;
            match (op, x, y) {
                (BinOp::Add, Nat(a), Nat(b)) => Nat(a.checked_add(b).ok_or(EvalError::Overflow)?),
                (BinOp::Sub, Nat(a), Nat(b)) => Nat(a.checked_sub(b).ok_or(EvalError::Overflow)?),
                (BinOp::Mul, Nat(a), Nat(b)) => Nat(a.checked_mul(b).ok_or(EvalError::Overflow)?),
                (BinOp::Lt, Nat(a), Nat(b)) => Bool(a < b),
                (BinOp::Le, Nat(a), Nat(b)) => Bool(a <= b),
                (BinOp::Gt, Nat(a), Nat(b)) => Bool(a > b),
                (BinOp::Ge, Nat(a), Nat(b)) => Bool(a >= b),
                (BinOp::And, Bool(a), Bool(b)) => Bool(a && b),
                (BinOp::Or, Bool(a), Bool(b)) => Bool(a || b),
                (BinOp::Eq | BinOp::Ne, a, b) => {
                    let same_kind = matches!((a, b), (Nat(_), Nat(_)) | (Bool(_), Bool(_)) | (Addr(_), Addr(_)));
                    if !same_kind {
                        return Err(EvalError::Type("comparing values of different types"));
                    }
                    Bool((a == b) == (*op == BinOp::Eq))
                }
                _ => return Err(EvalError::Type("operator applied to wrong operand types")),
            }
        }
    })
}

/// Evaluates a predicate on a record; it must produce a boolean.
pub fn pred_holds(p: &Pred, rec: &Value) -> Result<bool, EvalError> {
    match eval(p, rec)? {
        PVal::Bool(b) => Ok(b),
        _ => Err(EvalError::Type("predicate is not boolean")),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub tag: StructTag,
    pub addr: AddrFilter,
    pub pred: Pred,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Invariant {
    pub owner: BTreeSet<ModuleId>,
    pub entries: Vec<Entry>,
    /// Fields whose references must not escape; includes every field a
    /// predicate reads.
    pub relevant: BTreeSet<FieldRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct InvariantError {
    pub line: usize,
    pub message: String,
}

impl Invariant {
    pub fn entries_for<'a>(&'a self, a: Address, tag: &'a StructTag) -> impl Iterator<Item = &'a Entry> {
        self.entries.iter().filter(move |e| e.tag == *tag && e.addr.matches(a))
    }

    pub fn covers(&self, a: Address, tag: &StructTag) -> bool {
        self.entries_for(a, tag).next().is_some()
    }

    /// Addresses named explicitly by entries.
    pub fn pinned_addresses(&self) -> BTreeSet<Address> {
        self.entries
            .iter()
            .filter_map(|e| match e.addr {
                AddrFilter::Exactly(a) => Some(a),
                AddrFilter::Any => None,
            })
            .collect()
    }

    /// Builds an invariant, checking it against `env` and closing the
    /// relevant-field set over the predicates.
    pub fn new(
        env: &CodeEnv,
        owner: impl IntoIterator<Item = ModuleId>,
        entries: Vec<Entry>,
        relevant: impl IntoIterator<Item = FieldRef>,
    ) -> Result<Invariant, String> {
        let owner: BTreeSet<ModuleId> = owner.into_iter().collect();
        for m in &owner {
            if env.module(m).is_none() {
                return Err(format!("owner module {m} is not defined"));
            }
        }
        let mut rel: BTreeSet<FieldRef> = BTreeSet::new();
        for f in relevant {
            if env.field_type(&f).is_none() {
                return Err(format!("relevant field {f} is not declared"));
            }
            rel.insert(f);
        }
        for e in &entries {
            if !owner.contains(&e.tag.module) || !env.declares_struct(&e.tag) {
                return Err(format!("entry struct {} is not declared by an owner module", e.tag));
            }
            collect_fields(env, &e.tag, &e.pred, &mut rel)?;
        }
        Ok(Invariant {
            owner,
            entries,
            relevant: rel,
        })
    }

    pub fn parse(text: &str, env: &CodeEnv) -> Result<Invariant, InvariantError> {
        let mut owner = vec![];
        let mut raw_entries = vec![];
        let mut raw_relevant = vec![];
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| InvariantError { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (kw, rest) = content
                .split_once(char::is_whitespace)
                .map(|(a, b)| (a, b.trim()))
                .unwrap_or((content, ""));
            match kw {
                "owner" => {
                    let mut parts = rest.split_whitespace();
                    let (Some(a), Some(n), None) = (parts.next(), parts.next(), parts.next()) else {
                        return Err(err("expected `owner 0xADDR Module`".into()));
                    };
                    owner.push(ModuleId {
                        addr: a.parse().map_err(err)?,
                        name: ident(n),
                    });
                }
                "entry" => {
                    let (head, pred) =
                        split_entry(rest).ok_or_else(|| err("expected `entry Struct @addr : pred`".into()))?;
                    let mut parts = head.split_whitespace();
                    let (Some(s), Some(filter), None) = (parts.next(), parts.next(), parts.next()) else {
                        return Err(err("expected `entry Struct @addr : pred`".into()));
                    };
                    let filter = match filter {
                        "@any" => AddrFilter::Any,
                        f => AddrFilter::Exactly(
                            f.strip_prefix('@')
                                .ok_or_else(|| err(format!("bad address filter `{f}`")))?
                                .parse()
                                .map_err(err)?,
                        ),
                    };
                    let pred = parse_pred(pred).map_err(&err)?;
                    raw_entries.push((line, s.to_string(), filter, pred));
                }
                "relevant" => {
                    let (s, f) = rest
                        .rsplit_once('.')
                        .ok_or_else(|| err("expected `relevant Struct.field`".into()))?;
                    raw_relevant.push((line, s.trim().to_string(), f.trim().to_string()));
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let resolve = |line: usize, name: &str| -> Result<StructTag, InvariantError> {
            resolve_struct(env, &owner, name).map_err(|message| InvariantError { line, message })
        };
        let mut entries = vec![];
        for (line, s, addr, pred) in raw_entries {
            entries.push((
                line,
                Entry {
                    tag: resolve(line, &s)?,
                    addr,
                    pred,
                },
            ));
        }
        let mut relevant = vec![];
        for (line, s, f) in raw_relevant {
            let fr = resolve(line, &s)?.field(&f);
            if env.field_type(&fr).is_none() {
                return Err(InvariantError {
                    line,
                    message: format!("unknown field {fr}"),
                });
            }
            relevant.push(fr);
        }
        for (line, e) in &entries {
            let mut sink = BTreeSet::new();
            collect_fields(env, &e.tag, &e.pred, &mut sink)
                .map_err(|message| InvariantError { line: *line, message })?;
        }
        Invariant::new(env, owner, entries.into_iter().map(|(_, e)| e).collect(), relevant)
            .map_err(|message| InvariantError { line: 0, message })
    }
}

/// Splits at the first `:` that is not part of a `::`.
fn split_entry(rest: &str) -> Option<(&str, &str)> {
    let bytes = rest.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b':' {
            if bytes.get(i + 1) == Some(&b':') {
                i += 2;
                continue;
            }
            return Some((&rest[..i], &rest[i + 1..]));
        }
        i += 1;
    }
    None
}

fn resolve_struct(env: &CodeEnv, owner: &[ModuleId], name: &str) -> Result<StructTag, String> {
    let segs: Vec<&str> = name.split("::").collect();
    let candidates: Vec<StructTag> = match segs.as_slice() {
        [s] => owner
            .iter()
            .map(|m| m.struct_tag(s))
            .filter(|t| env.declares_struct(t))
            .collect(),
        [m, s] => owner
            .iter()
            .filter(|o| &*o.name == *m)
            .map(|o| o.struct_tag(s))
            .filter(|t| env.declares_struct(t))
            .collect(),
        [a, m, s] => {
            let addr: Address = a.parse()?;
            let t = ModuleId { addr, name: ident(m) }.struct_tag(s);
            if env.declares_struct(&t) {
                vec![t]
            } else {
                vec![]
            }
        }
        _ => vec![],
    };
    match candidates.as_slice() {
        [t] => Ok(t.clone()),
        [] => Err(format!("struct `{name}` is not declared by an owner module")),
        _ => Err(format!("struct `{name}` is ambiguous; qualify it")),
    }
}

/// Adds the fields read by `pred` (on records of `tag`) to `out`.
fn collect_fields(env: &CodeEnv, tag: &StructTag, pred: &Pred, out: &mut BTreeSet<FieldRef>) -> Result<(), String> {
    match pred {
        Pred::Field(path) => {
            let mut cur = tag.clone();
            for (i, f) in path.iter().enumerate() {
                let fr = cur.field(f);
                let ty = env
                    .field_type(&fr)
                    .ok_or_else(|| format!("unknown field {fr}"))?
                    .clone();
                out.insert(fr);
                if i + 1 < path.len() {
                    match ty {
                        Type::Struct(t) => cur = t,
                        _ => return Err(format!("field {f} is not a struct")),
                    }
                }
            }
            Ok(())
        }
        Pred::Not(p) => collect_fields(env, tag, p, out),
        Pred::Bin(_, a, b) => {
            collect_fields(env, tag, a, out)?;
            collect_fields(env, tag, b, out)
        }
        Pred::Nat(_) | Pred::Bool(_) | Pred::Addr(_) => Ok(()),
    }
}

// Predicate grammar, loosest binding first:
//   or  := and ("or" and)*
//   and := not ("and" not)*
//   not := "not" not | cmp
//   cmp := sum (relop sum)?
//   sum := prod (("+"|"-") prod)*
//   prod := atom ("*" atom)*
//   atom := .f(.g)* | nat | true | false | @0xA | "(" or ")"
pub fn parse_pred(text: &str) -> Result<Pred, String> {
    let toks = pred_tokens(text)?;
    let mut p = PredParser { toks, pos: 0 };
    let e = p.or()?;
    if p.pos != p.toks.len() {
        return Err(format!("unexpected `{}` in predicate", p.toks[p.pos]));
    }
    Ok(e)
}

fn pred_tokens(text: &str) -> Result<Vec<String>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = vec![];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == '_' || c == '@' {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if ["<=", ">=", "==", "!=", "&&", "||"].contains(&two.as_str()) {
                out.push(two);
                i += 2;
            } else if "+-*<>().!".contains(c) {
                out.push(c.to_string());
                i += 1;
            } else {
                return Err(format!("unexpected character `{c}` in predicate"));
            }
        }
    }
    Ok(out)
}

struct PredParser {
    toks: Vec<String>,
    pos: usize,
}

impl PredParser {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(|s| s.as_str())
    }

    fn eat(&mut self, t: &str) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<Pred, String> {
        let mut e = self.and()?;
        while self.eat("or") || self.eat("||") {
            e = Pred::Bin(BinOp::Or, Box::new(e), Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Pred, String> {
        let mut e = self.not()?;
        while self.eat("and") || self.eat("&&") {
            e = Pred::Bin(BinOp::And, Box::new(e), Box::new(self.not()?));
        }
        Ok(e)
    }

    fn not(&mut self) -> Result<Pred, String> {
        if self.eat("not") || self.eat("!") {
            return Ok(Pred::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Pred, String> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some("==") => BinOp::Eq,
            Some("!=") => BinOp::Ne,
            Some("<") => BinOp::Lt,
            Some("<=") => BinOp::Le,
            Some(">") => BinOp::Gt,
            Some(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        Ok(Pred::Bin(op, Box::new(lhs), Box::new(self.sum()?)))
    }

    fn sum(&mut self) -> Result<Pred, String> {
        let mut e = self.prod()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(e);
            };
            e = Pred::Bin(op, Box::new(e), Box::new(self.prod()?));
        }
    }

    fn prod(&mut self) -> Result<Pred, String> {
        let mut e = self.atom()?;
        while self.eat("*") {
            e = Pred::Bin(BinOp::Mul, Box::new(e), Box::new(self.atom()?));
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Pred, String> {
        let Some(t) = self.peek().map(str::to_string) else {
            return Err("unexpected end of predicate".into());
        };
        self.pos += 1;
        match t.as_str() {
            "(" => {
                let e = self.or()?;
                if !self.eat(")") {
                    return Err("expected `)`".into());
                }
                Ok(e)
            }
            "." => {
                let mut path = vec![];
                loop {
                    match self.peek() {
                        Some(f) if f.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') => {
                            path.push(ident(f));
                            self.pos += 1;
                        }
                        _ => return Err("expected field name after `.`".into()),
                    }
                    if !self.eat(".") {
                        return Ok(Pred::Field(path));
                    }
                }
            }
            "true" => Ok(Pred::Bool(true)),
            "false" => Ok(Pred::Bool(false)),
            _ if t.starts_with('@') => Ok(Pred::Addr(t[1..].parse()?)),
            _ if t.chars().all(|c| c.is_ascii_digit()) => t
                .parse()
                .map(Pred::Nat)
                .map_err(|_| format!("literal `{t}` does not fit in u64")),
            _ => Err(format!("unexpected `{t}` in predicate")),
        }
    }
}

/// Keys of `globals` governed by some entry.
pub fn dom_g(inv: &Invariant, globals: &Globals) -> BTreeSet<(Address, StructTag)> {
    globals.keys().filter(|(a, t)| inv.covers(*a, t)).cloned().collect()
}

/// The first governed global whose record breaks an entry.
pub fn first_violation(
    inv: &Invariant,
    memory: &Memory,
    globals: &Globals,
) -> Result<Option<(Address, StructTag)>, EvalError> {
    for ((a, tag), l) in globals {
        let mut entries = inv.entries_for(*a, tag).peekable();
        if entries.peek().is_none() {
            continue;
        }
        let rec = memory
            .get(*l)
            .ok_or_else(|| EvalError::Dangling(format!("{a} {tag}")))?;
        for e in entries {
            if !pred_holds(&e.pred, rec)? {
                return Ok(Some((*a, tag.clone())));
            }
        }
    }
    Ok(None)
}

pub fn inv_sat(inv: &Invariant, memory: &Memory, globals: &Globals) -> Result<bool, EvalError> {
    Ok(first_violation(inv, memory, globals)?.is_none())
}

pub fn action_check(inv: &Invariant, action: &Action) -> Result<bool, EvalError> {
    inv_sat(inv, &action.memory, &action.globals)
}

/// Index of the first action whose snapshot breaks the invariant.
pub fn first_failing_action(inv: &Invariant, trace: &[Action]) -> Result<Option<usize>, EvalError> {
    for (i, a) in trace.iter().enumerate() {
        if !action_check(inv, a)? {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

pub fn trace_check(inv: &Invariant, trace: &[Action]) -> Result<bool, EvalError> {
    Ok(first_failing_action(inv, trace)?.is_none())
}

/// The part of a state the attacker can reach directly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttackerPart {
    pub locals: Vec<Value>,
    pub stack: Vec<Value>,
    pub globals: Globals,
    pub memory: BTreeMap<Loc, Value>,
}

/// Locations named by values: bound locations and the bases of references.
pub fn locsof<'a>(values: impl IntoIterator<Item = &'a Value>) -> BTreeSet<Loc> {
    values
        .into_iter()
        .filter_map(|v| match v {
            Value::Loc(l) => Some(*l),
            Value::Ref(r) => Some(r.loc),
            _ => None,
        })
        .collect()
}

pub fn attacker_part(trusted: &CodeEnv, state: &State) -> AttackerPart {
    let locals: Vec<Value> = state
        .callstack
        .iter()
        .filter(|f| !trusted.defines_proc(&f.proc))
        .flat_map(|f| f.locals.values().cloned())
        .collect();
    let mut stack = vec![];
    let mut attacker_segment = true;
    for e in &state.stack {
        match e {
            StackEntry::Canary(p) => attacker_segment = !trusted.defines_proc(p),
            StackEntry::Value(v) if attacker_segment => stack.push(v.clone()),
            StackEntry::Value(_) => {}
        }
    }
    let globals: Globals = state
        .globals
        .iter()
        .filter(|((_, t), _)| !trusted.declares_struct(t))
        .map(|(k, l)| (k.clone(), *l))
        .collect();
    let mut roots = locsof(locals.iter().chain(&stack));
    roots.extend(globals.values().copied());
    let memory = roots
        .iter()
        .filter_map(|l| state.memory.get(*l).map(|v| (*l, v.clone())))
        .collect();
    AttackerPart {
        locals,
        stack,
        globals,
        memory,
    }
}

pub fn weak_local(inv: &Invariant, state: &State) -> Result<bool, EvalError> {
    inv_sat(inv, &state.memory, &state.globals)
}

/// Governed globals are neither attacker keys nor reachable from the attacker.
pub fn weak_unreach(inv: &Invariant, trusted: &CodeEnv, state: &State) -> bool {
    let atk = attacker_part(trusted, state);
    dom_g(inv, &state.globals)
        .iter()
        .all(|k| !atk.globals.contains_key(k) && state.globals.get(k).is_none_or(|l| !atk.memory.contains_key(l)))
}

pub fn strong(inv: &Invariant, trusted: &CodeEnv, state: &State) -> Result<bool, EvalError> {
    Ok(weak_local(inv, state)? && weak_unreach(inv, trusted, state))
}
