// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

mod common;

use proptest::prelude::*;
use robustmove::{
    corpus::SAMPLES,
    invariants::{attacker_part, dom_g, parse_pred, BinOp, Pred},
    ir::*,
    linking::{initial_config, link},
    oracle::{enumerate_attackers, Bounds},
    state::*,
    vm::run_with,
};
use std::collections::{BTreeSet, VecDeque};

fn module_pair(seed: u64, overlap: bool) -> (CodeEnv, CodeEnv) {
    let mut g = common::ModuleGen::new(seed);
    let a = g.module(1, "A", 3, 6);
    let b = if overlap {
        g.module(1, "A", 2, 6)
    } else {
        g.module(2, "B", 2, 6)
    };
    (CodeEnv::from_modules([a]), CodeEnv::from_modules([b]))
}

proptest! {
    #[test]
    fn link_is_commutative(seed in any::<u64>(), overlap in any::<bool>()) {
        let (a, b) = module_pair(seed, overlap);
        let ab = link(&a, &b);
        let ba = link(&b, &a);
        prop_assert_eq!(ab.is_err(), ba.is_err());
        prop_assert_eq!(ab.is_err(), overlap);
        if let (Ok(x), Ok(y)) = (ab, ba) {
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn predicates_print_and_parse_back(p in pred(3)) {
        prop_assert_eq!(parse_pred(&p.to_string()).unwrap(), p);
    }
}

fn pred(depth: u32) -> impl Strategy<Value = Pred> {
    let leaf = prop_oneof![
        prop::sample::select(vec!["f", "g", "total_supply"]).prop_map(|f| Pred::Field(vec![ident(f)])),
        prop::sample::select(vec![("v", "len"), ("a", "b")]).prop_map(|(x, y)| Pred::Field(vec![ident(x), ident(y)])),
        any::<u64>().prop_map(Pred::Nat),
        any::<bool>().prop_map(Pred::Bool),
        (1u128..0xFFFF).prop_map(|a| Pred::Addr(Address(a))),
    ];
    let ops = vec![
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::And,
        BinOp::Or,
    ];
    leaf.prop_recursive(depth, 16, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|p| Pred::Not(Box::new(p))),
            (prop::sample::select(ops.clone()), inner.clone(), inner).prop_map(|(op, a, b)| Pred::Bin(
                op,
                Box::new(a),
                Box::new(b)
            )),
        ]
    })
}

/// Locations reachable from the attacker's roots by following every
/// location and reference, to any depth.
fn reachable(trusted: &CodeEnv, st: &State) -> BTreeSet<Loc> {
    let mut roots: Vec<Value> = vec![];
    for f in &st.callstack {
        if !trusted.defines_proc(&f.proc) {
            roots.extend(f.locals.values().cloned());
        }
    }
    let mut owner_is_attacker = true;
    for e in &st.stack {
        match e {
            StackEntry::Canary(p) => owner_is_attacker = !trusted.defines_proc(p),
            StackEntry::Value(v) if owner_is_attacker => roots.push(v.clone()),
            StackEntry::Value(_) => {}
        }
    }
    let mut queue: VecDeque<Loc> = st
        .globals
        .iter()
        .filter(|((_, t), _)| !trusted.declares_struct(t))
        .map(|(_, l)| *l)
        .collect();
    let mut pending: Vec<Value> = roots;
    let mut seen = BTreeSet::new();
    loop {
        while let Some(v) = pending.pop() {
            match v {
                Value::Loc(l) => queue.push_back(l),
                Value::Ref(r) => queue.push_back(r.loc),
                Value::Record(r) => pending.extend(r.fields.into_iter().map(|(_, v)| v)),
                _ => {}
            }
        }
        let Some(l) = queue.pop_front() else { break };
        if !seen.insert(l) {
            continue;
        }
        if let Some(v) = st.memory.get(l) {
            pending.push(v.clone());
        }
    }
    seen.retain(|l| st.memory.contains(*l));
    seen
}

#[test]
fn attacker_memory_matches_reachability() {
    let bounds = Bounds {
        max_instr: 3,
        ..Bounds::default()
    };
    let mut states = 0;
    for s in SAMPLES {
        let env = s.env();
        let inv = s.inv(&env);
        for atk in enumerate_attackers(&env, &bounds) {
            let whole = link(&env, &atk.env).unwrap();
            run_with(&whole, initial_config(&atk.main), 1000, |st, _| {
                let part = attacker_part(&env, st);
                let ours: BTreeSet<Loc> = part.memory.keys().copied().collect();
                assert_eq!(ours, reachable(&env, st), "{}", s.name);
                if let Some(inv) = &inv {
                    let governed = dom_g(inv, &st.globals);
                    assert!(governed.iter().all(|k| st.memory.contains(st.globals[k])));
                    let restricted: Globals = st
                        .globals
                        .iter()
                        .filter(|(k, _)| governed.contains(*k))
                        .map(|(k, l)| (k.clone(), *l))
                        .collect();
                    assert_eq!(dom_g(inv, &restricted), governed);
                }
                states += 1;
            });
        }
    }
    assert!(states > 10_000, "{states}");
}
