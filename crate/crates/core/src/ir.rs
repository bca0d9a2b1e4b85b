// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Code environments: modules, struct declarations, procedures and instructions.

use serde::{Deserialize, Serialize};
use std::{collections::BTreeMap, fmt, str::FromStr, sync::Arc};

pub type Ident = Arc<str>;

pub fn ident(s: &str) -> Ident {
    Arc::from(s)
}

#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address(pub u128);

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:X}", self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let hex = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or_else(|| format!("address `{s}` must start with 0x"))?;
        u128::from_str_radix(hex, 16)
            .map(Address)
            .map_err(|_| format!("bad address `{s}`"))
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModuleId {
    pub addr: Address,
    pub name: Ident,
}

impl ModuleId {
    pub fn new(addr: u128, name: &str) -> Self {
        ModuleId {
            addr: Address(addr),
            name: ident(name),
        }
    }

    pub fn struct_tag(&self, name: &str) -> StructTag {
        StructTag {
            module: self.clone(),
            name: ident(name),
        }
    }

    pub fn proc_id(&self, name: &str) -> ProcId {
        ProcId {
            module: self.clone(),
            name: ident(name),
        }
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.addr, self.name)
    }
}

impl fmt::Debug for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StructTag {
    pub module: ModuleId,
    pub name: Ident,
}

impl StructTag {
    pub fn field(&self, name: &str) -> FieldRef {
        FieldRef {
            tag: self.clone(),
            field: ident(name),
        }
    }
}

impl fmt::Display for StructTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.module, self.name)
    }
}

impl fmt::Debug for StructTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProcId {
    pub module: ModuleId,
    pub name: Ident,
}

impl fmt::Display for ProcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.module, self.name)
    }
}

impl fmt::Debug for ProcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A field of a particular struct.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldRef {
    pub tag: StructTag,
    pub field: Ident,
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.tag, self.field)
    }
}

impl fmt::Debug for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Type {
    Bool,
    Nat,
    Address,
    Struct(StructTag),
    Ref { mutable: bool, inner: Box<Type> },
}

impl Type {
    pub fn reference(mutable: bool, inner: Type) -> Type {
        Type::Ref {
            mutable,
            inner: Box::new(inner),
        }
    }

    pub fn is_ref(&self) -> bool {
        matches!(self, Type::Ref { .. })
    }

    pub fn is_mut_ref(&self) -> bool {
        matches!(self, Type::Ref { mutable: true, .. })
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => write!(f, "bool"),
            Type::Nat => write!(f, "u64"),
            Type::Address => write!(f, "address"),
            Type::Struct(tag) => write!(f, "{tag}"),
            Type::Ref { mutable: true, inner } => write!(f, "&mut {inner}"),
            Type::Ref { mutable: false, inner } => write!(f, "&{inner}"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Const {
    Bool(bool),
    Nat(u64),
    Address(Address),
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Bool(b) => write!(f, "{b}"),
            Const::Nat(n) => write!(f, "{n}"),
            Const::Address(a) => write!(f, "@{a}"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
    Le,
    And,
    Or,
}

impl OpKind {
    pub const ALL: [OpKind; 8] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Eq,
        OpKind::Lt,
        OpKind::Le,
        OpKind::And,
        OpKind::Or,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "Add",
            OpKind::Sub => "Sub",
            OpKind::Mul => "Mul",
            OpKind::Eq => "Eq",
            OpKind::Lt => "Lt",
            OpKind::Le => "Le",
            OpKind::And => "And",
            OpKind::Or => "Or",
        }
    }

    pub fn from_name(s: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Struct operands of `Pack`, `MoveTo` and friends are bare names; the tag
/// is completed with the module of the executing procedure.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Instr {
    Call(ProcId),
    Ret,
    Branch(usize),
    BranchCond(usize),
    Abort,
    MoveTo(Ident),
    MoveFrom(Ident),
    BorrowGlobal(Ident),
    Exists(Ident),
    Pack(Ident),
    Unpack(Ident),
    MvLoc(Ident),
    StLoc(Ident),
    CpLoc(Ident),
    BorrowLoc(Ident),
    Pop,
    LoadConst(Const),
    Op(OpKind),
    ReadRef,
    WriteRef,
    BorrowFld(FieldRef),
}

impl Instr {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instr::Call(_) => "Call",
            Instr::Ret => "Ret",
            Instr::Branch(_) => "Branch",
            Instr::BranchCond(_) => "BranchCond",
            Instr::Abort => "Abort",
            Instr::MoveTo(_) => "MoveTo",
            Instr::MoveFrom(_) => "MoveFrom",
            Instr::BorrowGlobal(_) => "BorrowGlobal",
            Instr::Exists(_) => "Exists",
            Instr::Pack(_) => "Pack",
            Instr::Unpack(_) => "Unpack",
            Instr::MvLoc(_) => "MvLoc",
            Instr::StLoc(_) => "StLoc",
            Instr::CpLoc(_) => "CpLoc",
            Instr::BorrowLoc(_) => "BorrowLoc",
            Instr::Pop => "Pop",
            Instr::LoadConst(_) => "LoadConst",
            Instr::Op(_) => "Op",
            Instr::ReadRef => "ReadRef",
            Instr::WriteRef => "WriteRef",
            Instr::BorrowFld(_) => "BorrowFld",
        }
    }

    /// Instructions that never fall through to `pc + 1`.
    pub fn is_terminator(&self) -> bool {
        matches!(self, Instr::Ret | Instr::Abort | Instr::Branch(_))
    }

    pub fn branch_target(&self) -> Option<usize> {
        match self {
            Instr::Branch(t) | Instr::BranchCond(t) => Some(*t),
            _ => None,
        }
    }

    /// Control-flow successors of the instruction at `pc`.
    pub fn successors(&self, pc: usize) -> Vec<usize> {
        match self {
            Instr::Ret | Instr::Abort => vec![],
            Instr::Branch(t) => vec![*t],
            Instr::BranchCond(t) => vec![pc + 1, *t],
            _ => vec![pc + 1],
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct StructDef {
    pub name: Ident,
    pub fields: Vec<(Ident, Type)>,
}

impl StructDef {
    pub fn field_type(&self, field: &str) -> Option<&Type> {
        self.fields.iter().find(|(f, _)| &**f == field).map(|(_, t)| t)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ProcDef {
    pub name: Ident,
    pub params: Vec<Type>,
    pub returns: Vec<Type>,
    pub public: bool,
    pub code: Vec<Instr>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Module {
    pub id: ModuleId,
    pub structs: BTreeMap<Ident, StructDef>,
    pub procs: BTreeMap<Ident, ProcDef>,
}

impl Module {
    pub fn new(id: ModuleId) -> Self {
        Module {
            id,
            structs: BTreeMap::new(),
            procs: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Default, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct CodeEnv {
    pub modules: BTreeMap<ModuleId, Module>,
}

impl CodeEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_modules(modules: impl IntoIterator<Item = Module>) -> Self {
        CodeEnv {
            modules: modules.into_iter().map(|m| (m.id.clone(), m)).collect(),
        }
    }

    pub fn module(&self, id: &ModuleId) -> Option<&Module> {
        self.modules.get(id)
    }

    pub fn proc(&self, id: &ProcId) -> Option<&ProcDef> {
        self.modules.get(&id.module)?.procs.get(&id.name)
    }

    pub fn proc_mut(&mut self, id: &ProcId) -> Option<&mut ProcDef> {
        self.modules.get_mut(&id.module)?.procs.get_mut(&id.name)
    }

    pub fn struct_def(&self, tag: &StructTag) -> Option<&StructDef> {
        self.modules.get(&tag.module)?.structs.get(&tag.name)
    }

    pub fn defines_proc(&self, id: &ProcId) -> bool {
        self.proc(id).is_some()
    }

    pub fn declares_struct(&self, tag: &StructTag) -> bool {
        self.struct_def(tag).is_some()
    }

    pub fn field_type(&self, field: &FieldRef) -> Option<&Type> {
        self.struct_def(&field.tag)?.field_type(&field.field)
    }

    pub fn procs(&self) -> impl Iterator<Item = (ProcId, &ProcDef)> {
        self.modules.values().flat_map(|m| {
            m.procs.values().map(move |p| {
                (
                    ProcId {
                        module: m.id.clone(),
                        name: p.name.clone(),
                    },
                    p,
                )
            })
        })
    }

    pub fn structs(&self) -> impl Iterator<Item = (StructTag, &StructDef)> {
        self.modules.values().flat_map(|m| {
            m.structs.values().map(move |s| {
                (
                    StructTag {
                        module: m.id.clone(),
                        name: s.name.clone(),
                    },
                    s,
                )
            })
        })
    }

    pub fn instruction_count(&self) -> usize {
        self.procs().map(|(_, p)| p.code.len()).sum()
    }

    /// The sub-environment made of the given modules.
    pub fn restrict<'a>(&self, modules: impl IntoIterator<Item = &'a ModuleId>) -> CodeEnv {
        CodeEnv::from_modules(modules.into_iter().filter_map(|id| self.modules.get(id).cloned()))
    }
}
