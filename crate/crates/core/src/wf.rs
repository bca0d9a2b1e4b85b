// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Static well-formedness checks on code environments.

use crate::ir::*;
use serde::Serialize;
use std::{collections::BTreeSet, fmt};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Site {
    Struct(StructTag),
    Proc(ProcId),
    Instr(ProcId, usize),
    Module(ModuleId),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Struct(t) => write!(f, "struct {t}"),
            Site::Proc(p) => write!(f, "proc {p}"),
            Site::Instr(p, pc) => write!(f, "{p}@{pc}"),
            Site::Module(m) => write!(f, "module {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    UnresolvedProc(ProcId),
    NotPublic(ProcId),
    UnresolvedStruct(StructTag),
    UnknownField(FieldRef),
    ForeignField(FieldRef),
    BranchOutOfRange(usize),
    StackUnderflow {
        needed: usize,
        depth: usize,
    },
    InconsistentStackDepth,
    RetArity {
        expected: usize,
        found: usize,
    },
    FallsOffEnd,
    RefInStruct(Ident),
    NestedRef,
    DuplicateField(Ident),
    /// Attacker and trusted code share a module.
    Overlap(ModuleId),
    TrustedCallsAttacker(ProcId),
    BadMain(String),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::UnresolvedProc(p) => write!(f, "unresolved proc {p}"),
            ViolationKind::NotPublic(p) => write!(f, "call to non-public proc {p}"),
            ViolationKind::UnresolvedStruct(t) => write!(f, "unresolved struct {t}"),
            ViolationKind::UnknownField(fr) => write!(f, "unknown field {fr}"),
            ViolationKind::ForeignField(fr) => {
                write!(f, "field {fr} borrowed outside its declaring module")
            }
            ViolationKind::BranchOutOfRange(t) => write!(f, "branch target {t} out of range"),
            ViolationKind::StackUnderflow { needed, depth } => {
                write!(f, "needs {needed} operands, stack has {depth}")
            }
            ViolationKind::InconsistentStackDepth => write!(f, "inconsistent stack depth at join"),
            ViolationKind::RetArity { expected, found } => {
                write!(f, "returns {found} values, signature has {expected}")
            }
            ViolationKind::FallsOffEnd => write!(f, "control falls off the end of the body"),
            ViolationKind::RefInStruct(field) => write!(f, "reference-typed field {field}"),
            ViolationKind::NestedRef => write!(f, "reference to a reference"),
            ViolationKind::DuplicateField(field) => write!(f, "duplicate field {field}"),
            ViolationKind::Overlap(m) => write!(f, "module {m} is defined by both sides"),
            ViolationKind::TrustedCallsAttacker(p) => write!(f, "trusted code calls {p}"),
            ViolationKind::BadMain(why) => write!(f, "bad entry point: {why}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub site: Site,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.site, self.kind)
    }
}

pub fn well_formed(env: &CodeEnv) -> Vec<Violation> {
    well_formed_in(env, &CodeEnv::new())
}

/// Checks the modules of `env`, resolving names against `env` and `context`.
pub fn well_formed_in(env: &CodeEnv, context: &CodeEnv) -> Vec<Violation> {
    let scope = Scope { env, context };
    let mut out = vec![];
    for (tag, def) in env.structs() {
        let site = || Site::Struct(tag.clone());
        let mut seen = BTreeSet::new();
        for (field, ty) in &def.fields {
            if !seen.insert(field.clone()) {
                out.push(Violation {
                    site: site(),
                    kind: ViolationKind::DuplicateField(field.clone()),
                });
            }
            if ty.is_ref() {
                out.push(Violation {
                    site: site(),
                    kind: ViolationKind::RefInStruct(field.clone()),
                });
            }
            scope.check_type(ty, &site, &mut out);
        }
    }
    for (pid, def) in env.procs() {
        let site = || Site::Proc(pid.clone());
        for ty in def.params.iter().chain(&def.returns) {
            scope.check_type(ty, &site, &mut out);
        }
        check_body(&scope, &pid, def, &mut out);
    }
    out
}

struct Scope<'a> {
    env: &'a CodeEnv,
    context: &'a CodeEnv,
}

impl Scope<'_> {
    fn proc(&self, id: &ProcId) -> Option<&ProcDef> {
        self.env.proc(id).or_else(|| self.context.proc(id))
    }

    fn struct_def(&self, tag: &StructTag) -> Option<&StructDef> {
        self.env.struct_def(tag).or_else(|| self.context.struct_def(tag))
    }

    fn check_type(&self, ty: &Type, site: &dyn Fn() -> Site, out: &mut Vec<Violation>) {
        match ty {
            Type::Struct(tag) if self.struct_def(tag).is_none() => out.push(Violation {
                site: site(),
                kind: ViolationKind::UnresolvedStruct(tag.clone()),
            }),
            Type::Ref { inner, .. } => {
                if inner.is_ref() {
                    out.push(Violation {
                        site: site(),
                        kind: ViolationKind::NestedRef,
                    });
                }
                self.check_type(inner, site, out);
            }
            _ => {}
        }
    }
}

fn check_body(scope: &Scope<'_>, pid: &ProcId, def: &ProcDef, out: &mut Vec<Violation>) {
    let n = def.code.len();
    let at = |pc: usize, kind: ViolationKind| Violation {
        site: Site::Instr(pid.clone(), pc),
        kind,
    };
    if n == 0 {
        out.push(Violation {
            site: Site::Proc(pid.clone()),
            kind: ViolationKind::FallsOffEnd,
        });
        return;
    }
    let local_tag = |s: &Ident| StructTag {
        module: pid.module.clone(),
        name: s.clone(),
    };
    // Per-instruction operand effect; `None` when a name does not resolve.
    let mut effects: Vec<Option<(usize, usize)>> = Vec::with_capacity(n);
    for (pc, instr) in def.code.iter().enumerate() {
        let effect = match instr {
            Instr::Call(target) => match scope.proc(target) {
                Some(callee) => {
                    if !callee.public && target.module != pid.module {
                        out.push(at(pc, ViolationKind::NotPublic(target.clone())));
                    }
                    Some((callee.params.len(), callee.returns.len()))
                }
                None => {
                    out.push(at(pc, ViolationKind::UnresolvedProc(target.clone())));
                    None
                }
            },
            Instr::Ret => Some((0, 0)),
            Instr::Branch(t) | Instr::BranchCond(t) => {
                if *t >= n {
                    out.push(at(pc, ViolationKind::BranchOutOfRange(*t)));
                }
                Some((usize::from(matches!(instr, Instr::BranchCond(_))), 0))
            }
            Instr::Abort => Some((0, 0)),
            Instr::MoveTo(s)
            | Instr::MoveFrom(s)
            | Instr::BorrowGlobal(s)
            | Instr::Exists(s)
            | Instr::Pack(s)
            | Instr::Unpack(s) => match scope.env.struct_def(&local_tag(s)) {
                None => {
                    out.push(at(pc, ViolationKind::UnresolvedStruct(local_tag(s))));
                    None
                }
                Some(sd) => Some(match instr {
                    Instr::MoveTo(_) => (2, 0),
                    Instr::Pack(_) => (sd.fields.len(), 1),
                    Instr::Unpack(_) => (1, sd.fields.len()),
                    _ => (1, 1),
                }),
            },
            Instr::MvLoc(_) | Instr::CpLoc(_) | Instr::BorrowLoc(_) | Instr::LoadConst(_) => Some((0, 1)),
            Instr::StLoc(_) | Instr::Pop => Some((1, 0)),
            Instr::Op(_) => Some((2, 1)),
            Instr::ReadRef => Some((1, 1)),
            Instr::WriteRef => Some((2, 0)),
            Instr::BorrowFld(fr) => {
                match scope.struct_def(&fr.tag) {
                    None => out.push(at(pc, ViolationKind::UnresolvedStruct(fr.tag.clone()))),
                    Some(sd) if sd.field_type(&fr.field).is_none() => {
                        out.push(at(pc, ViolationKind::UnknownField(fr.clone())))
                    }
                    Some(_) if fr.tag.module != pid.module => out.push(at(pc, ViolationKind::ForeignField(fr.clone()))),
                    Some(_) => {}
                }
                Some((1, 1))
            }
        };
        effects.push(effect);
    }

    // Stack-depth dataflow from the entry depth |params|.
    let mut depth: Vec<Option<usize>> = vec![None; n];
    let mut reported_join = false;
    depth[0] = Some(def.params.len());
    let mut work = vec![0usize];
    while let Some(pc) = work.pop() {
        let d = depth[pc].expect("queued pcs have a depth");
        let instr = &def.code[pc];
        let Some((pops, pushes)) = effects[pc] else {
            continue;
        };
        if d < pops {
            out.push(at(pc, ViolationKind::StackUnderflow { needed: pops, depth: d }));
            continue;
        }
        if let Instr::Ret = instr {
            if d != def.returns.len() {
                out.push(at(
                    pc,
                    ViolationKind::RetArity {
                        expected: def.returns.len(),
                        found: d,
                    },
                ));
            }
            continue;
        }
        let next = d - pops + pushes;
        for s in instr.successors(pc) {
            if s >= n {
                if s == pc + 1 && !matches!(instr, Instr::Branch(_)) {
                    out.push(at(pc, ViolationKind::FallsOffEnd));
                }
                continue;
            }
            match depth[s] {
                None => {
                    depth[s] = Some(next);
                    work.push(s);
                }
                Some(prev) if prev != next && !reported_join => {
                    reported_join = true;
                    out.push(at(s, ViolationKind::InconsistentStackDepth));
                }
                Some(_) => {}
            }
        }
    }
}
