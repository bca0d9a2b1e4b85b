// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! C ABI over the checker. Parsed modules and invariants are opaque handles
//! owned by the caller; strings returned through out-parameters must be
//! released with `rm_string_free`. Every entry point returns an `RmStatus`
//! and records a message retrievable with `rm_last_error`.

use robustmove::{
    asm::parse_module,
    cli::check,
    encapsulator::{analyze_module, strict_mode_analyze},
    invariants::Invariant,
    ir::CodeEnv,
    oracle::{robust_safety_oracle, Bounds, OracleVerdict},
};
use std::{
    cell::RefCell,
    ffi::{c_char, CStr, CString},
    panic::{catch_unwind, AssertUnwindSafe},
    ptr,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvariantError = 4,
    AnalysisError = 5,
    OracleError = 6,
    Panic = 7,
}

/// A parsed trusted code environment.
pub struct RmEnv(CodeEnv);

/// An invariant resolved against an `RmEnv`.
pub struct RmInvariant(Invariant);

/// Oracle bounds. Value and address domains are the library defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RmBounds {
    pub max_instr: u32,
    pub fuel: u64,
    pub max_locals: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let msg = CString::new(msg).unwrap_or_else(|_| CString::from(c"error message contained NUL"));
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: RmStatus, msg: impl ToString) -> RmStatus {
    set_error(msg.to_string());
    status
}

fn guard(f: impl FnOnce() -> RmStatus) -> RmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(RmStatus::Panic, "internal panic"))
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, RmStatus> {
    if s.is_null() {
        return Err(fail(RmStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(RmStatus::InvalidUtf8, e))
}

fn owned(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NULs replaced").into_raw()
}

fn to_bounds(b: &RmBounds) -> Bounds {
    Bounds {
        max_instr: b.max_instr as usize,
        fuel: b.fuel,
        max_locals: b.max_locals as usize,
        ..Bounds::default()
    }
}

/// The message of the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn rm_default_bounds() -> RmBounds {
    let b = Bounds::default();
    RmBounds {
        max_instr: b.max_instr as u32,
        fuel: b.fuel,
        max_locals: b.max_locals as u32,
    }
}

/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_env_parse(source: *const c_char, out: *mut *mut RmEnv) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return fail(RmStatus::NullArgument, "null out pointer");
        }
        let src = match text(source) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match parse_module(src) {
            Ok(env) => {
                *out = Box::into_raw(Box::new(RmEnv(env)));
                RmStatus::Ok
            }
            Err(e) => fail(RmStatus::ParseError, e),
        }
    })
}

/// # Safety
/// `env` must come from `rm_env_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rm_env_free(env: *mut RmEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of procedures in the environment.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rm_env_proc_count(env: *const RmEnv) -> usize {
    env.as_ref().map_or(0, |e| e.0.procs().count())
}

/// # Safety
/// `env` must be a live handle, `source` a NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_invariant_parse(
    env: *const RmEnv,
    source: *const c_char,
    out: *mut *mut RmInvariant,
) -> RmStatus {
    guard(|| {
        let (Some(env), false) = (env.as_ref(), out.is_null()) else {
            return fail(RmStatus::NullArgument, "null handle or out pointer");
        };
        let src = match text(source) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match Invariant::parse(src, &env.0) {
            Ok(inv) => {
                *out = Box::into_raw(Box::new(RmInvariant(inv)));
                RmStatus::Ok
            }
            Err(e) => fail(RmStatus::InvariantError, e),
        }
    })
}

/// # Safety
/// `inv` must come from `rm_invariant_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rm_invariant_free(inv: *mut RmInvariant) {
    if !inv.is_null() {
        drop(Box::from_raw(inv));
    }
}

/// Runs the escape analysis. `inv` may be NULL, in which case every field is
/// relevant and strict mode is used. On success `*flagged` holds the number
/// of flagged procedures and `*report` (if non-NULL) one `FLAG` line each.
///
/// # Safety
/// Handles must be live; out pointers valid or NULL where allowed.
#[no_mangle]
pub unsafe extern "C" fn rm_analyze(
    env: *const RmEnv,
    inv: *const RmInvariant,
    strict: bool,
    flagged: *mut usize,
    report: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let (Some(env), false) = (env.as_ref(), flagged.is_null()) else {
            return fail(RmStatus::NullArgument, "null handle or out pointer");
        };
        let inv = inv.as_ref().map(|i| &i.0);
        let res = match (inv, strict) {
            (Some(inv), false) => analyze_module(&env.0, inv),
            (inv, _) => strict_mode_analyze(&env.0, inv),
        };
        match res {
            Ok(r) => {
                *flagged = r.flagged().count();
                if !report.is_null() {
                    *report = owned(r.to_string());
                }
                RmStatus::Ok
            }
            Err(e) => fail(RmStatus::AnalysisError, e),
        }
    })
}

/// Runs well-formedness, analysis and the local prover. `*passed` is the
/// overall verdict; `*summary` (if non-NULL) has one line per stage.
///
/// # Safety
/// Handles must be live; out pointers valid or NULL where allowed.
#[no_mangle]
pub unsafe extern "C" fn rm_check(
    env: *const RmEnv,
    inv: *const RmInvariant,
    bounds: RmBounds,
    passed: *mut bool,
    summary: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let (Some(env), Some(inv), false) = (env.as_ref(), inv.as_ref(), passed.is_null()) else {
            return fail(RmStatus::NullArgument, "null handle or out pointer");
        };
        let s = check(&env.0, &inv.0, &to_bounds(&bounds));
        *passed = s.overall;
        if !summary.is_null() {
            let lines: Vec<String> = s
                .stages
                .iter()
                .map(|st| {
                    let status = match st.passed {
                        Some(true) => "pass",
                        Some(false) => "FAIL",
                        None => "skipped",
                    };
                    format!("{} {status}", st.stage)
                })
                .collect();
            *summary = owned(lines.join("\n"));
        }
        RmStatus::Ok
    })
}

/// Bounded search for an attacker. `*found` tells whether one exists;
/// `*attacker` (if non-NULL) receives its assembly, or NULL when none.
///
/// # Safety
/// Handles must be live; out pointers valid or NULL where allowed.
#[no_mangle]
pub unsafe extern "C" fn rm_fuzz(
    env: *const RmEnv,
    inv: *const RmInvariant,
    bounds: RmBounds,
    found: *mut bool,
    attacker: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let (Some(env), Some(inv), false) = (env.as_ref(), inv.as_ref(), found.is_null()) else {
            return fail(RmStatus::NullArgument, "null handle or out pointer");
        };
        match robust_safety_oracle(&env.0, &inv.0, &to_bounds(&bounds)) {
            Ok(OracleVerdict::NoCounterexample { .. }) => {
                *found = false;
                if !attacker.is_null() {
                    *attacker = ptr::null_mut();
                }
                RmStatus::Ok
            }
            Ok(OracleVerdict::Counterexample(cx)) => {
                *found = true;
                if !attacker.is_null() {
                    *attacker = owned(cx.assembly());
                }
                RmStatus::Ok
            }
            Err(e) => fail(RmStatus::OracleError, e),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
