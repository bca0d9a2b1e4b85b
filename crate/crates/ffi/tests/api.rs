// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

use robustmove::corpus::sample;
use robustmove_ffi::*;
use std::{
    ffi::{CStr, CString},
    ptr,
};

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = rm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn load(name: &str) -> (*mut RmEnv, *mut RmInvariant) {
    let s = sample(name).unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(rm_env_parse(c(s.source).as_ptr(), &mut env), RmStatus::Ok);
    let mut inv = ptr::null_mut();
    assert_eq!(
        rm_invariant_parse(env, c(s.invariant.unwrap()).as_ptr(), &mut inv),
        RmStatus::Ok
    );
    (env, inv)
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    rm_string_free(s);
    out
}

#[test]
fn analyze_reports_the_leaking_accessor() {
    unsafe {
        let (env, inv) = load("counter");
        assert_eq!(rm_env_proc_count(env), 6);
        let (mut n, mut report) = (0, ptr::null_mut());
        assert_eq!(rm_analyze(env, inv, true, &mut n, &mut report), RmStatus::Ok);
        assert_eq!(n, 1);
        assert_eq!(take(report), "FLAG 0x1::Counter::read_mut ret#0\n");
        rm_invariant_free(inv);
        rm_env_free(env);
    }
}

#[test]
fn check_and_fuzz_on_a_safe_module() {
    unsafe {
        let (env, inv) = load("counter_safe");
        let mut b = rm_default_bounds();
        b.max_instr = 3;
        let (mut passed, mut summary) = (false, ptr::null_mut());
        assert_eq!(rm_check(env, inv, b, &mut passed, &mut summary), RmStatus::Ok);
        assert!(passed);
        assert_eq!(take(summary), "well-formed pass\nencapsulator pass\nlocal-prover pass");
        let (mut found, mut atk) = (true, ptr::null_mut());
        assert_eq!(rm_fuzz(env, inv, b, &mut found, &mut atk), RmStatus::Ok);
        assert!(!found);
        assert!(atk.is_null());
        rm_invariant_free(inv);
        rm_env_free(env);
    }
}

#[test]
fn fuzz_returns_attacker_assembly() {
    let src = "module 0x1 Leaky\nstruct Counter { f: u64 }\n\
        proc publish() -> () public:\n LoadConst 1\n Pack Counter\n LoadConst @0x1\n MoveTo Counter\n Ret\n\
        proc leak() -> (&mut u64) public:\n LoadConst @0x1\n BorrowGlobal Counter\n BorrowFld Counter.f\n Ret\n\
        proc noop() -> () public:\n Ret\n";
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(rm_env_parse(c(src).as_ptr(), &mut env), RmStatus::Ok);
        let mut inv = ptr::null_mut();
        let inv_src = c("owner 0x1 Leaky\nentry Counter @any : .f > 0\n");
        assert_eq!(rm_invariant_parse(env, inv_src.as_ptr(), &mut inv), RmStatus::Ok);
        let mut b = rm_default_bounds();
        b.max_instr = 5;
        let (mut found, mut atk) = (false, ptr::null_mut());
        assert_eq!(rm_fuzz(env, inv, b, &mut found, &mut atk), RmStatus::Ok);
        assert!(found);
        let text = take(atk);
        assert!(text.starts_with("module 0xA77AC Attacker"), "{text}");
        assert!(text.contains("Call 0x1::Leaky::leak"));
        rm_invariant_free(inv);
        rm_env_free(env);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(rm_env_parse(ptr::null(), &mut env), RmStatus::NullArgument);
        assert_eq!(rm_env_parse(c("module").as_ptr(), &mut env), RmStatus::ParseError);
        assert!(!last_error().is_empty());
        assert!(env.is_null());

        let bad = [0xffu8, 0];
        assert_eq!(rm_env_parse(bad.as_ptr().cast(), &mut env), RmStatus::InvalidUtf8);

        let (env, _) = load("counter");
        let mut inv = ptr::null_mut();
        assert_eq!(
            rm_invariant_parse(env, c("entry Nope @any : .f > 0\n").as_ptr(), &mut inv),
            RmStatus::InvariantError
        );
        let mut n = 0;
        assert_eq!(
            rm_analyze(ptr::null(), ptr::null(), false, &mut n, ptr::null_mut()),
            RmStatus::NullArgument
        );
        // A successful call clears the message.
        assert_eq!(
            rm_analyze(env, ptr::null(), false, &mut n, ptr::null_mut()),
            RmStatus::Ok
        );
        assert!(rm_last_error().is_null());
        rm_env_free(env);
        rm_env_free(ptr::null_mut());
        rm_string_free(ptr::null_mut());
    }
}
