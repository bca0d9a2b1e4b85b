// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Textual assembly for code environments.
//!
//! ```text
//! module 0x1 Counter
//! struct Counter { f: u64 }
//! proc read_mut(&mut Counter) -> (&mut u64) public:
//!     BorrowFld Counter.f
//!     Ret
//! ```
//!
//! Names may be written bare (current module), as `Module::name` (current
//! address) or fully qualified as `0xA::Module::name`. `#` starts a comment.

use crate::ir::*;
use std::{collections::HashMap, fmt::Write as _};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(String),
    ColonColon,
    Colon,
    Comma,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Arrow,
    Amp,
    At,
    Dot,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Num(s) => format!("`{s}`"),
            Tok::ColonColon => "`::`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Amp => "`&`".into(),
            Tok::At => "`@`".into(),
            Tok::Dot => "`.`".into(),
        }
    }
}

fn lex(line: usize, text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = vec![];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            if c == '0' && matches!(chars.get(i + 1), Some('x') | Some('X')) {
                i += 2;
                while i < chars.len() && chars[i].is_ascii_hexdigit() {
                    i += 1;
                }
            } else {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), col));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, len) = match (c, two.as_str()) {
            (_, "::") => (Tok::ColonColon, 2),
            (_, "->") => (Tok::Arrow, 2),
            (':', _) => (Tok::Colon, 1),
            (',', _) => (Tok::Comma, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            ('&', _) => (Tok::Amp, 1),
            ('@', _) => (Tok::At, 1),
            ('.', _) => (Tok::Dot, 1),
            _ => {
                return Err(ParseError {
                    line,
                    col,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((tok, col));
        i += len;
    }
    Ok(out)
}

struct Cursor<'a> {
    line: usize,
    toks: &'a [(Tok, usize)],
    pos: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: self.line,
            col: self.col(),
            message: message.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => self.err(format!("expected {}, found {}", want.describe(), t.describe())),
            None => self.err(format!("expected {}", want.describe())),
        }
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek() == Some(want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(t) => self.err(format!("expected identifier, found {}", t.describe())),
            None => self.err("expected identifier"),
        }
    }

    fn address(&mut self) -> Result<Address, ParseError> {
        match self.peek() {
            Some(Tok::Num(s)) => {
                let parsed = s.parse::<Address>();
                match parsed {
                    Ok(a) => {
                        self.pos += 1;
                        Ok(a)
                    }
                    Err(e) => self.err(e),
                }
            }
            _ => self.err("expected address like 0x1"),
        }
    }

    fn done(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => self.err(format!("unexpected {}", t.describe())),
        }
    }

    /// `[0xA ::] seg (:: seg)*`
    fn path(&mut self) -> Result<(Option<Address>, Vec<String>), ParseError> {
        let addr = if matches!(self.peek(), Some(Tok::Num(_))) {
            let a = self.address()?;
            self.expect(Tok::ColonColon)?;
            Some(a)
        } else {
            None
        };
        let mut segs = vec![self.ident()?];
        while self.eat(&Tok::ColonColon) {
            segs.push(self.ident()?);
        }
        Ok((addr, segs))
    }

    fn qualified(&mut self, current: &ModuleId) -> Result<(ModuleId, Ident), ParseError> {
        let col = self.col();
        let (addr, segs) = self.path()?;
        let bad = || ParseError {
            line: self.line,
            col,
            message: "expected `name`, `Module::name` or `0xA::Module::name`".into(),
        };
        match (addr, segs.as_slice()) {
            (None, [name]) => Ok((current.clone(), ident(name))),
            (None, [m, name]) => Ok((
                ModuleId {
                    addr: current.addr,
                    name: ident(m),
                },
                ident(name),
            )),
            (Some(a), [m, name]) => Ok((
                ModuleId {
                    addr: a,
                    name: ident(m),
                },
                ident(name),
            )),
            _ => Err(bad()),
        }
    }

    fn ty(&mut self, current: &ModuleId) -> Result<Type, ParseError> {
        if self.eat(&Tok::Amp) {
            let mutable = matches!(self.peek(), Some(Tok::Ident(s)) if s == "mut");
            if mutable {
                self.pos += 1;
            }
            return Ok(Type::reference(mutable, self.ty(current)?));
        }
        if let Some(Tok::Ident(s)) = self.peek() {
            let prim = match s.as_str() {
                "bool" => Some(Type::Bool),
                "u64" => Some(Type::Nat),
                "address" => Some(Type::Address),
                _ => None,
            };
            if let Some(t) = prim {
                self.pos += 1;
                return Ok(t);
            }
        }
        let (module, name) = self.qualified(current)?;
        Ok(Type::Struct(StructTag { module, name }))
    }

    fn type_list(&mut self, current: &ModuleId) -> Result<Vec<Type>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut tys = vec![];
        if self.eat(&Tok::RParen) {
            return Ok(tys);
        }
        loop {
            tys.push(self.ty(current)?);
            if self.eat(&Tok::RParen) {
                return Ok(tys);
            }
            self.expect(Tok::Comma)?;
        }
    }
}

struct ProcBuilder {
    module: ModuleId,
    def: ProcDef,
    labels: HashMap<String, usize>,
    fixups: Vec<(usize, String, usize, usize)>,
}

impl ProcBuilder {
    fn finish(mut self, env: &mut CodeEnv) -> Result<(), ParseError> {
        for (idx, label, line, col) in self.fixups {
            let target = *self.labels.get(&label).ok_or_else(|| ParseError {
                line,
                col,
                message: format!("unknown label `{label}`"),
            })?;
            match &mut self.def.code[idx] {
                Instr::Branch(t) | Instr::BranchCond(t) => *t = target,
                _ => unreachable!("fixups are only recorded for branches"),
            }
        }
        let m = env.modules.get_mut(&self.module).expect("module exists");
        m.procs.insert(self.def.name.clone(), self.def);
        Ok(())
    }
}

/// Parses one or more modules into a code environment.
pub fn parse_module(text: &str) -> Result<CodeEnv, ParseError> {
    let mut env = CodeEnv::new();
    let mut current: Option<ModuleId> = None;
    let mut proc: Option<ProcBuilder> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks = lex(line, raw)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            line,
            toks: &toks,
            pos: 0,
            end_col: raw.chars().count() + 1,
        };
        let head = match cur.peek() {
            Some(Tok::Ident(s)) => s.clone(),
            _ => String::new(),
        };
        match head.as_str() {
            "module" => {
                if let Some(p) = proc.take() {
                    p.finish(&mut env)?;
                }
                cur.next();
                let addr = cur.address()?;
                let name = cur.ident()?;
                cur.done()?;
                let id = ModuleId {
                    addr,
                    name: ident(&name),
                };
                if env.modules.contains_key(&id) {
                    return Err(ParseError {
                        line,
                        col: 1,
                        message: format!("module {id} declared twice"),
                    });
                }
                env.modules.insert(id.clone(), Module::new(id.clone()));
                current = Some(id);
            }
            "struct" => {
                if let Some(p) = proc.take() {
                    p.finish(&mut env)?;
                }
                let Some(mid) = current.clone() else {
                    return cur.err("struct outside of a module");
                };
                cur.next();
                let name_col = cur.col();
                let name = cur.ident()?;
                cur.expect(Tok::LBrace)?;
                let mut fields = vec![];
                while !cur.eat(&Tok::RBrace) {
                    let f = cur.ident()?;
                    cur.expect(Tok::Colon)?;
                    fields.push((ident(&f), cur.ty(&mid)?));
                    if !cur.eat(&Tok::Comma) {
                        cur.expect(Tok::RBrace)?;
                        break;
                    }
                }
                cur.done()?;
                let m = env.modules.get_mut(&mid).expect("module exists");
                if m.structs.contains_key(name.as_str()) {
                    return Err(ParseError {
                        line,
                        col: name_col,
                        message: format!("struct {name} declared twice"),
                    });
                }
                m.structs.insert(
                    ident(&name),
                    StructDef {
                        name: ident(&name),
                        fields,
                    },
                );
            }
            "proc" => {
                if let Some(p) = proc.take() {
                    p.finish(&mut env)?;
                }
                let Some(mid) = current.clone() else {
                    return cur.err("proc outside of a module");
                };
                cur.next();
                let name_col = cur.col();
                let name = cur.ident()?;
                let params = cur.type_list(&mid)?;
                cur.expect(Tok::Arrow)?;
                let returns = cur.type_list(&mid)?;
                let public = matches!(cur.peek(), Some(Tok::Ident(s)) if s == "public");
                if public {
                    cur.next();
                }
                cur.expect(Tok::Colon)?;
                cur.done()?;
                if env.modules[&mid].procs.contains_key(name.as_str()) {
                    return Err(ParseError {
                        line,
                        col: name_col,
                        message: format!("proc {name} declared twice"),
                    });
                }
                proc = Some(ProcBuilder {
                    module: mid,
                    def: ProcDef {
                        name: ident(&name),
                        params,
                        returns,
                        public,
                        code: vec![],
                    },
                    labels: HashMap::new(),
                    fixups: vec![],
                });
            }
            _ => {
                let Some(p) = proc.as_mut() else {
                    return cur.err("instruction outside of a proc");
                };
                if matches!(
                    (toks.first(), toks.get(1)),
                    (Some((Tok::Ident(_), _)), Some((Tok::Colon, _)))
                ) {
                    let label_col = cur.col();
                    let label = cur.ident()?;
                    cur.next();
                    if p.labels.insert(label.clone(), p.def.code.len()).is_some() {
                        return Err(ParseError {
                            line,
                            col: label_col,
                            message: format!("label `{label}` defined twice"),
                        });
                    }
                    if cur.peek().is_none() {
                        continue;
                    }
                }
                let instr = parse_instr(&mut cur, p)?;
                cur.done()?;
                p.def.code.push(instr);
            }
        }
    }
    if let Some(p) = proc.take() {
        p.finish(&mut env)?;
    }
    Ok(env)
}

fn parse_instr(cur: &mut Cursor<'_>, p: &mut ProcBuilder) -> Result<Instr, ParseError> {
    let mcol = cur.col();
    let mnemonic = cur.ident()?;
    let mid = p.module.clone();
    let instr = match mnemonic.as_str() {
        "Call" => {
            let (module, name) = cur.qualified(&mid)?;
            Instr::Call(ProcId { module, name })
        }
        "Ret" => Instr::Ret,
        "Abort" => Instr::Abort,
        "Pop" => Instr::Pop,
        "ReadRef" => Instr::ReadRef,
        "WriteRef" => Instr::WriteRef,
        "Branch" | "BranchCond" => {
            let col = cur.col();
            let target = match cur.next() {
                Some(Tok::Num(n)) if !n.starts_with("0x") => match n.parse::<usize>() {
                    Ok(t) => t,
                    Err(_) => return Err(parse_err(cur.line, col, "bad branch target")),
                },
                Some(Tok::Ident(label)) => {
                    p.fixups.push((p.def.code.len(), label, cur.line, col));
                    0
                }
                _ => return Err(parse_err(cur.line, col, "expected label or pc")),
            };
            if mnemonic == "Branch" {
                Instr::Branch(target)
            } else {
                Instr::BranchCond(target)
            }
        }
        "MoveTo" | "MoveFrom" | "BorrowGlobal" | "Exists" | "Pack" | "Unpack" => {
            let s = ident(&cur.ident()?);
            match mnemonic.as_str() {
                "MoveTo" => Instr::MoveTo(s),
                "MoveFrom" => Instr::MoveFrom(s),
                "BorrowGlobal" => Instr::BorrowGlobal(s),
                "Exists" => Instr::Exists(s),
                "Pack" => Instr::Pack(s),
                _ => Instr::Unpack(s),
            }
        }
        "MvLoc" | "StLoc" | "CpLoc" | "BorrowLoc" => {
            let x = ident(&cur.ident()?);
            match mnemonic.as_str() {
                "MvLoc" => Instr::MvLoc(x),
                "StLoc" => Instr::StLoc(x),
                "CpLoc" => Instr::CpLoc(x),
                _ => Instr::BorrowLoc(x),
            }
        }
        "LoadConst" => {
            let col = cur.col();
            match cur.next() {
                Some(Tok::Ident(s)) if s == "true" => Instr::LoadConst(Const::Bool(true)),
                Some(Tok::Ident(s)) if s == "false" => Instr::LoadConst(Const::Bool(false)),
                Some(Tok::Num(n)) if !n.starts_with("0x") => match n.parse::<u64>() {
                    Ok(v) => Instr::LoadConst(Const::Nat(v)),
                    Err(_) => return Err(parse_err(cur.line, col, "constant does not fit in u64")),
                },
                Some(Tok::At) => Instr::LoadConst(Const::Address(cur.address()?)),
                _ => return Err(parse_err(cur.line, col, "expected constant")),
            }
        }
        "Op" => {
            let col = cur.col();
            let k = cur.ident()?;
            Instr::Op(OpKind::from_name(&k).ok_or_else(|| parse_err(cur.line, col, format!("unknown op `{k}`")))?)
        }
        "BorrowFld" => {
            let (module, name) = cur.qualified(&mid)?;
            cur.expect(Tok::Dot)?;
            let field = ident(&cur.ident()?);
            Instr::BorrowFld(FieldRef {
                tag: StructTag { module, name },
                field,
            })
        }
        other => match OpKind::from_name(other) {
            Some(k) => Instr::Op(k),
            None => return Err(parse_err(cur.line, mcol, format!("unknown instruction `{other}`"))),
        },
    };
    Ok(instr)
}

fn parse_err(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        col,
        message: message.into(),
    }
}

pub fn instr_to_string(i: &Instr) -> String {
    match i {
        Instr::Call(p) => format!("Call {p}"),
        Instr::Branch(t) => format!("Branch L{t}"),
        Instr::BranchCond(t) => format!("BranchCond L{t}"),
        Instr::MoveTo(s)
        | Instr::MoveFrom(s)
        | Instr::BorrowGlobal(s)
        | Instr::Exists(s)
        | Instr::Pack(s)
        | Instr::Unpack(s)
        | Instr::MvLoc(s)
        | Instr::StLoc(s)
        | Instr::CpLoc(s)
        | Instr::BorrowLoc(s) => format!("{} {s}", i.mnemonic()),
        Instr::LoadConst(c) => format!("LoadConst {c}"),
        Instr::Op(k) => format!("Op {}", k.name()),
        Instr::BorrowFld(f) => format!("BorrowFld {f}"),
        Instr::Ret | Instr::Abort | Instr::Pop | Instr::ReadRef | Instr::WriteRef => i.mnemonic().to_string(),
    }
}

fn type_list(tys: &[Type]) -> String {
    tys.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

/// Canonical text for a whole environment; `parse_module` reads it back.
pub fn serialize_module(env: &CodeEnv) -> String {
    let mut out = String::new();
    for (i, m) in env.modules.values().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        writeln!(out, "module {} {}", m.id.addr, m.id.name).unwrap();
        for s in m.structs.values() {
            let fields = s
                .fields
                .iter()
                .map(|(f, t)| format!("{f}: {t}"))
                .collect::<Vec<_>>()
                .join(", ");
            if fields.is_empty() {
                writeln!(out, "struct {} {{}}", s.name).unwrap();
            } else {
                writeln!(out, "struct {} {{ {fields} }}", s.name).unwrap();
            }
        }
        for p in m.procs.values() {
            writeln!(
                out,
                "proc {}({}) -> ({}){}:",
                p.name,
                type_list(&p.params),
                type_list(&p.returns),
                if p.public { " public" } else { "" }
            )
            .unwrap();
            let mut targets: Vec<usize> = p.code.iter().filter_map(|i| i.branch_target()).collect();
            targets.sort_unstable();
            targets.dedup();
            for (pc, instr) in p.code.iter().enumerate() {
                if targets.binary_search(&pc).is_ok() {
                    writeln!(out, "  L{pc}:").unwrap();
                }
                writeln!(out, "    {}", instr_to_string(instr)).unwrap();
            }
            for t in targets.iter().filter(|t| **t >= p.code.len()) {
                writeln!(out, "  L{t}:").unwrap();
            }
        }
    }
    out
}
