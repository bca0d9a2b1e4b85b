// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Combining trusted and attacker code, and the initial machine state.

use crate::{
    ir::*,
    state::*,
    wf::{well_formed_in, Site, Violation, ViolationKind},
};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("`{0}` is defined on both sides")]
    DuplicateName(String),
    #[error("unresolved name `{0}`")]
    UnresolvedName(String),
}

/// Attacker code and its entry point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attacker {
    pub env: CodeEnv,
    pub main: ProcId,
}

/// Union of two environments. Module ids must be disjoint and every name
/// referenced by the result must resolve.
pub fn link(a: &CodeEnv, b: &CodeEnv) -> Result<CodeEnv, LinkError> {
    let mut overlap: Option<String> = None;
    for (id, ma) in &a.modules {
        if let Some(mb) = b.modules.get(id) {
            let member = ma
                .procs
                .keys()
                .find(|p| mb.procs.contains_key(*p))
                .or_else(|| ma.structs.keys().find(|s| mb.structs.contains_key(*s)));
            let name = match member {
                Some(m) => format!("{id}::{m}"),
                None => id.to_string(),
            };
            if overlap.as_ref().is_none_or(|o| name < *o) {
                overlap = Some(name);
            }
        }
    }
    if let Some(name) = overlap {
        return Err(LinkError::DuplicateName(name));
    }
    let mut out = a.clone();
    out.modules
        .extend(b.modules.iter().map(|(k, v)| (k.clone(), v.clone())));
    if let Some(name) = first_unresolved(&out) {
        return Err(LinkError::UnresolvedName(name));
    }
    Ok(out)
}

fn first_unresolved(env: &CodeEnv) -> Option<String> {
    let mut missing = BTreeSet::new();
    let check_ty = |ty: &Type, missing: &mut BTreeSet<String>| {
        let mut t = ty;
        while let Type::Ref { inner, .. } = t {
            t = inner;
        }
        if let Type::Struct(tag) = t {
            if !env.declares_struct(tag) {
                missing.insert(tag.to_string());
            }
        }
    };
    for (_, s) in env.structs() {
        for (_, ty) in &s.fields {
            check_ty(ty, &mut missing);
        }
    }
    for (pid, p) in env.procs() {
        for ty in p.params.iter().chain(&p.returns) {
            check_ty(ty, &mut missing);
        }
        for i in &p.code {
            match i {
                Instr::Call(target) if !env.defines_proc(target) => {
                    missing.insert(target.to_string());
                }
                Instr::BorrowFld(fr) if env.field_type(fr).is_none() => {
                    missing.insert(fr.to_string());
                }
                Instr::MoveTo(s)
                | Instr::MoveFrom(s)
                | Instr::BorrowGlobal(s)
                | Instr::Exists(s)
                | Instr::Pack(s)
                | Instr::Unpack(s) => {
                    let tag = StructTag {
                        module: pid.module.clone(),
                        name: s.clone(),
                    };
                    if !env.declares_struct(&tag) {
                        missing.insert(tag.to_string());
                    }
                }
                _ => {}
            }
        }
    }
    missing.into_iter().next()
}

/// Checks that `atk` is a legal attacker against `trusted`.
pub fn validate_attacker(trusted: &CodeEnv, atk: &Attacker) -> Result<(), Vec<Violation>> {
    let mut out = vec![];
    for id in atk.env.modules.keys() {
        if trusted.modules.contains_key(id) {
            out.push(Violation {
                site: Site::Module(id.clone()),
                kind: ViolationKind::Overlap(id.clone()),
            });
        }
    }
    let disjoint = CodeEnv::from_modules(
        atk.env
            .modules
            .values()
            .filter(|m| !trusted.modules.contains_key(&m.id))
            .cloned(),
    );
    out.extend(well_formed_in(&disjoint, trusted));
    for (pid, p) in trusted.procs() {
        for (pc, i) in p.code.iter().enumerate() {
            if let Instr::Call(target) = i {
                if atk.env.defines_proc(target) && !trusted.defines_proc(target) {
                    out.push(Violation {
                        site: Site::Instr(pid.clone(), pc),
                        kind: ViolationKind::TrustedCallsAttacker(target.clone()),
                    });
                }
            }
        }
    }
    match atk.env.proc(&atk.main) {
        None => out.push(Violation {
            site: Site::Proc(atk.main.clone()),
            kind: ViolationKind::BadMain("not defined".into()),
        }),
        Some(m) => {
            if !m.public {
                out.push(Violation {
                    site: Site::Proc(atk.main.clone()),
                    kind: ViolationKind::BadMain("not public".into()),
                });
            }
            if m.params != [Type::Nat] {
                out.push(Violation {
                    site: Site::Proc(atk.main.clone()),
                    kind: ViolationKind::BadMain("must take exactly one u64".into()),
                });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Entry state: `main` at pc 0 with the literal argument 0 above its canary.
pub fn initial_config(main: &ProcId) -> State {
    State {
        callstack: vec![Frame::new(main.clone())],
        memory: Memory::new(),
        globals: Globals::new(),
        stack: vec![StackEntry::Canary(main.clone()), StackEntry::Value(Value::Nat(0))],
    }
}
