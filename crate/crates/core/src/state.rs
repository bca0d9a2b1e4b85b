// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Runtime values and machine states.

use crate::ir::*;
use std::{collections::BTreeMap, fmt};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Loc(pub u64);

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Record {
    pub tag: StructTag,
    pub fields: Vec<(Ident, Value)>,
}

impl Record {
    pub fn field(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(f, _)| &**f == name).map(|(_, v)| v)
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.fields.iter_mut().find(|(f, _)| &**f == name).map(|(_, v)| v)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Reference {
    pub loc: Loc,
    pub path: Vec<Ident>,
    pub mutable: bool,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Value {
    Bool(bool),
    Nat(u64),
    Address(Address),
    Record(Record),
    Ref(Reference),
    Loc(Loc),
}

impl Value {
    /// Ground values and records; the only values memory cells may hold.
    pub fn is_storable(&self) -> bool {
        matches!(
            self,
            Value::Bool(_) | Value::Nat(_) | Value::Address(_) | Value::Record(_)
        )
    }

    pub fn at_path(&self, path: &[Ident]) -> Option<&Value> {
        let mut v = self;
        for f in path {
            match v {
                Value::Record(r) => v = r.field(f)?,
                _ => return None,
            }
        }
        Some(v)
    }

    pub fn at_path_mut(&mut self, path: &[Ident]) -> Option<&mut Value> {
        let mut v = self;
        for f in path {
            match v {
                Value::Record(r) => v = r.field_mut(f)?,
                _ => return None,
            }
        }
        Some(v)
    }

    /// Same ground kind, or records of the same tag.
    pub fn same_shape(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Bool(_), Value::Bool(_))
            | (Value::Nat(_), Value::Nat(_))
            | (Value::Address(_), Value::Address(_)) => true,
            (Value::Record(a), Value::Record(b)) => a.tag == b.tag,
            _ => false,
        }
    }
}

impl From<Const> for Value {
    fn from(c: Const) -> Value {
        match c {
            Const::Bool(b) => Value::Bool(b),
            Const::Nat(n) => Value::Nat(n),
            Const::Address(a) => Value::Address(a),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Nat(n) => write!(f, "{n}"),
            Value::Address(a) => write!(f, "@{a}"),
            Value::Record(r) => {
                write!(f, "{} {{", r.tag.name)?;
                for (i, (name, v)) in r.fields.iter().enumerate() {
                    let sep = if i == 0 { " " } else { ", " };
                    write!(f, "{sep}{name}: {v}")?;
                }
                if r.fields.is_empty() {
                    write!(f, "}}")
                } else {
                    write!(f, " }}")
                }
            }
            Value::Ref(r) => {
                write!(f, "&{}{}", if r.mutable { "mut " } else { "" }, r.loc)?;
                for p in &r.path {
                    write!(f, ".{p}")?;
                }
                Ok(())
            }
            Value::Loc(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum StackEntry {
    Value(Value),
    Canary(ProcId),
}

impl StackEntry {
    pub fn as_value(&self) -> Option<&Value> {
        match self {
            StackEntry::Value(v) => Some(v),
            StackEntry::Canary(_) => None,
        }
    }
}

pub type Locals = BTreeMap<Ident, Value>;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Frame {
    pub proc: ProcId,
    pub pc: usize,
    pub locals: Locals,
}

impl Frame {
    pub fn new(proc: ProcId) -> Frame {
        Frame {
            proc,
            pc: 0,
            locals: Locals::new(),
        }
    }
}

/// Memory cells plus a monotone allocation counter; locations are never reused.
#[derive(Clone, Default, PartialEq, Eq, Debug)]
pub struct Memory {
    cells: BTreeMap<Loc, Value>,
    next: u64,
}

impl Memory {
    pub fn new() -> Memory {
        Memory::default()
    }

    pub fn alloc(&mut self, v: Value) -> Loc {
        let l = Loc(self.next);
        self.next += 1;
        self.cells.insert(l, v);
        l
    }

    pub fn get(&self, l: Loc) -> Option<&Value> {
        self.cells.get(&l)
    }

    pub fn get_mut(&mut self, l: Loc) -> Option<&mut Value> {
        self.cells.get_mut(&l)
    }

    pub fn remove(&mut self, l: Loc) -> Option<Value> {
        self.cells.remove(&l)
    }

    pub fn contains(&self, l: Loc) -> bool {
        self.cells.contains_key(&l)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Loc, &Value)> {
        self.cells.iter().map(|(l, v)| (*l, v))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn next_fresh(&self) -> u64 {
        self.next
    }

    pub fn deref(&self, r: &Reference) -> Option<&Value> {
        self.cells.get(&r.loc)?.at_path(&r.path)
    }
}

pub type Globals = BTreeMap<(Address, StructTag), Loc>;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct State {
    pub callstack: Vec<Frame>,
    pub memory: Memory,
    pub globals: Globals,
    pub stack: Vec<StackEntry>,
}

impl State {
    pub fn top_frame(&self) -> Option<&Frame> {
        self.callstack.last()
    }

    /// Index of the first stack entry above the topmost canary.
    pub fn segment_start(&self) -> usize {
        self.stack
            .iter()
            .rposition(|e| matches!(e, StackEntry::Canary(_)))
            .map_or(0, |i| i + 1)
    }

    /// Values of the top frame's operand segment, bottom first.
    pub fn segment(&self) -> &[StackEntry] {
        &self.stack[self.segment_start()..]
    }

    /// The record stored under a global key.
    pub fn global(&self, addr: Address, tag: &StructTag) -> Option<&Value> {
        let l = self.globals.get(&(addr, tag.clone()))?;
        self.memory.get(*l)
    }
}

/// `addr tag -> record`, one line per global key.
pub fn dump_globals(memory: &Memory, globals: &Globals) -> Vec<String> {
    globals
        .iter()
        .map(|((a, tag), l)| match memory.get(*l) {
            Some(v) => format!("{a} {tag} -> {v}"),
            None => format!("{a} {tag} -> <dangling {l}>"),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counter(f: u64) -> Value {
        Value::Record(Record {
            tag: ModuleId::new(1, "M").struct_tag("Counter"),
            fields: vec![(ident("f"), Value::Nat(f))],
        })
    }

    #[test]
    fn locations_are_never_reused() {
        let mut m = Memory::new();
        let a = m.alloc(Value::Nat(1));
        m.remove(a);
        let b = m.alloc(Value::Nat(2));
        assert_ne!(a, b);
    }

    #[test]
    fn paths_reach_nested_fields() {
        let mut v = counter(3);
        assert_eq!(v.at_path(&[ident("f")]), Some(&Value::Nat(3)));
        *v.at_path_mut(&[ident("f")]).unwrap() = Value::Nat(0);
        assert_eq!(v, counter(0));
        assert_eq!(v.at_path(&[ident("g")]), None);
    }

    #[test]
    fn record_display() {
        assert_eq!(counter(0).to_string(), "Counter { f: 0 }");
    }
}
