// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use rand::{rngs::StdRng, seq::IndexedRandom, RngExt, SeedableRng};
use robustmove::{ir::*, state::*};
use std::collections::BTreeMap;

pub mod checks;

/// Random well-formed modules. Code is a sequence of statements that each
/// leave the operand stack empty, so branches may target any statement.
pub struct ModuleGen {
    rng: StdRng,
    fresh: usize,
}

const BASE: [Type; 3] = [Type::Nat, Type::Bool, Type::Address];

impl ModuleGen {
    pub fn new(seed: u64) -> Self {
        ModuleGen {
            rng: StdRng::seed_from_u64(seed),
            fresh: 0,
        }
    }

    pub fn module(&mut self, addr: u128, name: &str, procs: usize, stmts: usize) -> Module {
        let id = ModuleId::new(addr, name);
        let mut m = Module::new(id.clone());
        let nstructs = self.rng.random_range(1..=3);
        let mut tags: Vec<StructTag> = vec![];
        for s in 0..nstructs {
            let nfields = self.rng.random_range(1..=3);
            let fields = (0..nfields)
                .map(|f| {
                    let ty = if !tags.is_empty() && self.rng.random_bool(0.2) {
                        Type::Struct(tags.choose(&mut self.rng).unwrap().clone())
                    } else {
                        BASE.choose(&mut self.rng).unwrap().clone()
                    };
                    (ident(&format!("f{f}")), ty)
                })
                .collect();
            let def = StructDef {
                name: ident(&format!("S{s}")),
                fields,
            };
            tags.push(id.struct_tag(&def.name));
            m.structs.insert(def.name.clone(), def);
        }
        let sigs: Vec<(Vec<Type>, Vec<Type>)> = (0..procs).map(|_| self.signature(&tags)).collect();
        for (i, (params, returns)) in sigs.iter().enumerate() {
            let name = ident(&format!("p{i}"));
            let code = self.body(&m, &id, &sigs, params, returns, stmts);
            m.procs.insert(
                name.clone(),
                ProcDef {
                    name,
                    params: params.clone(),
                    returns: returns.clone(),
                    public: self.rng.random_bool(0.5),
                    code,
                },
            );
        }
        m
    }

    fn signature(&mut self, tags: &[StructTag]) -> (Vec<Type>, Vec<Type>) {
        let pick = |rng: &mut StdRng| -> Type {
            match rng.random_range(0..6) {
                0..=2 => BASE.choose(rng).unwrap().clone(),
                3 => Type::reference(rng.random_bool(0.5), Type::Nat),
                4 => Type::reference(rng.random_bool(0.5), Type::Struct(tags.choose(rng).unwrap().clone())),
                _ => Type::Struct(tags.choose(rng).unwrap().clone()),
            }
        };
        let np = self.rng.random_range(0..=3);
        let nr = self.rng.random_range(0..=2);
        let params = (0..np).map(|_| pick(&mut self.rng)).collect();
        let returns = (0..nr)
            .map(|_| match self.rng.random_range(0..4) {
                0 => Type::reference(true, Type::Nat),
                _ => BASE.choose(&mut self.rng).unwrap().clone(),
            })
            .collect();
        (params, returns)
    }

    fn var(&mut self) -> Ident {
        self.fresh += 1;
        ident(&format!("v{}", self.fresh))
    }

    /// Pushes a value of type `ty`, using a local when one is available.
    fn push_value(&mut self, ty: &Type, locals: &BTreeMap<Ident, Type>, m: &Module, out: &mut Vec<Instr>) -> bool {
        let candidates: Vec<&Ident> = locals.iter().filter(|(_, t)| *t == ty).map(|(x, _)| x).collect();
        if !candidates.is_empty() && self.rng.random_bool(0.6) {
            out.push(Instr::CpLoc((*candidates.choose(&mut self.rng).unwrap()).clone()));
            return true;
        }
        match ty {
            Type::Nat => out.push(Instr::LoadConst(Const::Nat(self.rng.random_range(0..5)))),
            Type::Bool => out.push(Instr::LoadConst(Const::Bool(self.rng.random_bool(0.5)))),
            Type::Address => out.push(Instr::LoadConst(Const::Address(Address(self.rng.random_range(1..4))))),
            Type::Struct(tag) => {
                let Some(def) = m.structs.get(&tag.name) else {
                    return false;
                };
                for (_, fty) in def.fields.iter().rev() {
                    if !self.push_value(fty, locals, m, out) {
                        return false;
                    }
                }
                out.push(Instr::Pack(tag.name.clone()));
            }
            Type::Ref { inner, .. } => {
                let bound: Vec<&Ident> = locals.iter().filter(|(_, t)| *t == &**inner).map(|(x, _)| x).collect();
                match bound.choose(&mut self.rng) {
                    Some(x) => out.push(Instr::BorrowLoc((*x).clone())),
                    None => {
                        let refs: Vec<&Ident> = locals
                            .iter()
                            .filter(|(_, t)| matches!(t, Type::Ref { inner: i, .. } if i == inner))
                            .map(|(x, _)| x)
                            .collect();
                        match refs.choose(&mut self.rng) {
                            Some(x) => out.push(Instr::CpLoc((*x).clone())),
                            None => return false,
                        }
                    }
                }
            }
        }
        true
    }

    fn body(
        &mut self,
        m: &Module,
        id: &ModuleId,
        sigs: &[(Vec<Type>, Vec<Type>)],
        params: &[Type],
        returns: &[Type],
        stmts: usize,
    ) -> Vec<Instr> {
        let mut locals: BTreeMap<Ident, Type> = BTreeMap::new();
        let mut blocks: Vec<Vec<Instr>> = vec![];
        let mut prologue = vec![];
        for (i, ty) in params.iter().enumerate().rev() {
            let x = ident(&format!("a{i}"));
            prologue.push(Instr::StLoc(x.clone()));
            locals.insert(x, ty.clone());
        }
        blocks.push(prologue);
        // Branch targets are block indices until the end.
        let mut pending: Vec<(usize, usize, usize)> = vec![];
        for _ in 0..stmts {
            let mut b = vec![];
            let k = self.rng.random_range(0..11);
            let nats: Vec<Ident> = locals
                .iter()
                .filter(|(_, t)| **t == Type::Nat)
                .map(|(x, _)| x.clone())
                .collect();
            match k {
                0 => {
                    let ty = BASE.choose(&mut self.rng).unwrap().clone();
                    self.push_value(&ty, &locals, m, &mut b);
                    let x = self.var();
                    b.push(Instr::StLoc(x.clone()));
                    locals.insert(x, ty);
                }
                1 => {
                    self.push_value(&Type::Nat, &locals, m, &mut b);
                    self.push_value(&Type::Nat, &locals, m, &mut b);
                    b.push(Instr::Op(
                        *[OpKind::Add, OpKind::Sub, OpKind::Mul].choose(&mut self.rng).unwrap(),
                    ));
                    let x = self.var();
                    b.push(Instr::StLoc(x.clone()));
                    locals.insert(x, Type::Nat);
                }
                2 => {
                    self.push_value(&Type::Nat, &locals, m, &mut b);
                    self.push_value(&Type::Nat, &locals, m, &mut b);
                    b.push(Instr::Op(
                        *[OpKind::Lt, OpKind::Le, OpKind::Eq].choose(&mut self.rng).unwrap(),
                    ));
                    let target = self.rng.random_range(0..=stmts + 1);
                    pending.push((blocks.len(), b.len(), target));
                    b.push(Instr::BranchCond(0));
                }
                3 if !nats.is_empty() => {
                    let x = nats.choose(&mut self.rng).unwrap().clone();
                    b.push(Instr::BorrowLoc(x));
                    b.push(Instr::LoadConst(Const::Nat(self.rng.random_range(0..5))));
                    b.push(Instr::WriteRef);
                }
                4 => {
                    let refs: Vec<(Ident, Type)> = locals
                        .iter()
                        .filter_map(|(x, t)| match t {
                            Type::Ref { inner, .. } => Some((x.clone(), (**inner).clone())),
                            _ => None,
                        })
                        .collect();
                    if let Some((x, inner)) = refs.choose(&mut self.rng) {
                        b.push(Instr::CpLoc(x.clone()));
                        b.push(Instr::ReadRef);
                        let y = self.var();
                        b.push(Instr::StLoc(y.clone()));
                        locals.insert(y, inner.clone());
                    }
                }
                5 => {
                    let def = m
                        .structs
                        .values()
                        .collect::<Vec<_>>()
                        .choose(&mut self.rng)
                        .copied()
                        .unwrap()
                        .clone();
                    let tag = id.struct_tag(&def.name);
                    let mut pushed = vec![];
                    if self.push_value(&Type::Struct(tag.clone()), &locals, m, &mut pushed) {
                        let s = self.var();
                        pushed.push(Instr::StLoc(s.clone()));
                        let (f, fty) = def.fields.choose(&mut self.rng).unwrap().clone();
                        pushed.push(Instr::BorrowLoc(s.clone()));
                        pushed.push(Instr::BorrowFld(tag.field(&f)));
                        pushed.push(Instr::ReadRef);
                        let y = self.var();
                        pushed.push(Instr::StLoc(y.clone()));
                        locals.insert(s, Type::Struct(tag));
                        locals.insert(y, fty);
                        b = pushed;
                    }
                }
                6 => {
                    let def = m
                        .structs
                        .values()
                        .collect::<Vec<_>>()
                        .choose(&mut self.rng)
                        .copied()
                        .unwrap()
                        .clone();
                    let tag = id.struct_tag(&def.name);
                    let mut pushed = vec![];
                    if self.push_value(&Type::Struct(tag.clone()), &locals, m, &mut pushed) {
                        self.push_value(&Type::Address, &locals, m, &mut pushed);
                        pushed.push(Instr::MoveTo(def.name.clone()));
                        b = pushed;
                    }
                }
                7 => {
                    let name = m
                        .structs
                        .keys()
                        .collect::<Vec<_>>()
                        .choose(&mut self.rng)
                        .copied()
                        .unwrap()
                        .clone();
                    let tag = id.struct_tag(&name);
                    self.push_value(&Type::Address, &locals, m, &mut b);
                    match self.rng.random_range(0..3) {
                        0 => {
                            b.push(Instr::Exists(name));
                            let x = self.var();
                            b.push(Instr::StLoc(x.clone()));
                            locals.insert(x, Type::Bool);
                        }
                        1 => {
                            b.push(Instr::MoveFrom(name.clone()));
                            b.push(Instr::Unpack(name.clone()));
                            for (_, fty) in &m.structs[&name].fields {
                                let x = self.var();
                                b.push(Instr::StLoc(x.clone()));
                                locals.insert(x, fty.clone());
                            }
                        }
                        _ => {
                            b.push(Instr::BorrowGlobal(name));
                            let x = self.var();
                            b.push(Instr::StLoc(x.clone()));
                            locals.insert(x, Type::reference(true, Type::Struct(tag)));
                        }
                    }
                }
                8 => {
                    let callee = self.rng.random_range(0..sigs.len());
                    let (ps, rs) = &sigs[callee];
                    let mut pushed = vec![];
                    if ps.iter().all(|t| self.push_value(t, &locals, m, &mut pushed)) {
                        pushed.push(Instr::Call(id.proc_id(&format!("p{callee}"))));
                        for t in rs.iter().rev() {
                            let x = self.var();
                            pushed.push(Instr::StLoc(x.clone()));
                            locals.insert(x, t.clone());
                        }
                        b = pushed;
                    }
                }
                9 => {
                    let target = self.rng.random_range(0..=stmts + 1);
                    pending.push((blocks.len(), 0, target));
                    b.push(Instr::Branch(0));
                }
                _ => {
                    self.push_value(&Type::Nat, &locals, m, &mut b);
                    b.push(Instr::Pop);
                }
            }
            blocks.push(b);
        }
        let mut epilogue = vec![];
        if self.rng.random_bool(0.05) {
            epilogue.push(Instr::Abort);
        } else {
            for ty in returns {
                if !self.push_value(ty, &locals, m, &mut epilogue) {
                    let t = self.var();
                    epilogue.push(Instr::LoadConst(Const::Nat(0)));
                    epilogue.push(Instr::StLoc(t.clone()));
                    epilogue.push(Instr::BorrowLoc(t));
                }
            }
            epilogue.push(Instr::Ret);
        }
        blocks.push(epilogue);
        let mut starts = vec![];
        let mut pc = 0;
        for b in &blocks {
            starts.push(pc);
            pc += b.len();
        }
        for (block, idx, target) in pending {
            // Block 0 is the prologue; statement targets start at block 1.
            let t = starts[(target + 1).min(blocks.len() - 1)];
            blocks[block][idx] = match blocks[block][idx] {
                Instr::Branch(_) => Instr::Branch(t),
                _ => Instr::BranchCond(t),
            };
        }
        blocks.concat()
    }
}

pub fn random_env(seed: u64, modules: usize, procs: usize, stmts: usize) -> CodeEnv {
    let mut g = ModuleGen::new(seed);
    CodeEnv::from_modules((0..modules).map(|i| g.module(1 + i as u128, &format!("Gen{i}"), procs, stmts)))
}

/// A caller frame holding referenced arguments, with `args` pushed above
/// its canary as a call to `proc` would see them.
pub fn call_state(proc: &ProcDef, caller: ProcId, args: &[Value], globals: &[(Address, StructTag, Value)]) -> State {
    let mut memory = Memory::new();
    let mut g = Globals::new();
    for (a, tag, v) in globals {
        let l = memory.alloc(v.clone());
        g.insert((*a, tag.clone()), l);
    }
    let mut frame = Frame::new(caller.clone());
    let mut stack = vec![StackEntry::Canary(caller)];
    for (i, (ty, v)) in proc.params.iter().zip(args).enumerate() {
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
    State {
        callstack: vec![frame],
        memory,
        globals: g,
        stack,
    }
}

pub fn harness_id() -> ModuleId {
    ModuleId::new(0xBEEF, "Harness")
}

/// `env` plus a harness whose `main` calls `target` and discards its results.
pub fn harness(env: &CodeEnv, target: &ProcId) -> (CodeEnv, ProcId) {
    let def = env.proc(target).expect("target exists");
    let mut code = vec![Instr::Call(target.clone())];
    code.extend(std::iter::repeat_n(Instr::Pop, def.returns.len()));
    code.push(Instr::Ret);
    let mut m = Module::new(harness_id());
    m.procs.insert(
        ident("main"),
        ProcDef {
            name: ident("main"),
            params: def.params.clone(),
            returns: vec![],
            public: true,
            code,
        },
    );
    let mut whole = env.clone();
    whole.modules.insert(m.id.clone(), m);
    (whole, harness_id().proc_id("main"))
}

pub fn random_value(rng: &mut StdRng, env: &CodeEnv, ty: &Type) -> Value {
    match ty {
        Type::Bool => Value::Bool(rng.random_bool(0.5)),
        Type::Nat => Value::Nat(rng.random_range(0..4)),
        Type::Address => Value::Address(Address(rng.random_range(1..4))),
        Type::Struct(tag) => {
            let def = env.struct_def(tag).expect("declared struct");
            Value::Record(Record {
                tag: tag.clone(),
                fields: def
                    .fields
                    .iter()
                    .map(|(f, t)| (f.clone(), random_value(rng, env, t)))
                    .collect(),
            })
        }
        Type::Ref { inner, .. } => random_value(rng, env, inner),
    }
}

/// Random starting state for a call of `target` from the harness: random
/// arguments and a few random globals of the target's module.
pub fn random_call(rng: &mut StdRng, env: &CodeEnv, target: &ProcId) -> (CodeEnv, State) {
    let (whole, main) = harness(env, target);
    let def = env.proc(target).unwrap();
    let args: Vec<Value> = def.params.iter().map(|t| random_value(rng, env, t)).collect();
    let mut globals = vec![];
    let tags: Vec<StructTag> = env
        .structs()
        .map(|(t, _)| t)
        .filter(|t| t.module == target.module)
        .collect();
    for _ in 0..rng.random_range(0..4) {
        if let Some(tag) = tags.choose(rng) {
            let a = Address(rng.random_range(1..4));
            if !globals.iter().any(|(b, t, _)| *b == a && t == tag) {
                let v = random_value(rng, env, &Type::Struct(tag.clone()));
                globals.push((a, tag.clone(), v));
            }
        }
    }
    let st = call_state(def, main, &args, &globals);
    (whole, st)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
