// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

mod common;

use proptest::prelude::*;
use robustmove::{
    asm::{parse_module, serialize_module},
    wf::well_formed,
};

#[test]
fn generated_modules_are_well_formed_and_round_trip() {
    for seed in 0..1000 {
        let env = common::random_env(seed, 1 + (seed % 3) as usize, 1 + (seed % 5) as usize, 12);
        assert_eq!(well_formed(&env), vec![], "seed {seed}");
        let text = serialize_module(&env);
        let back = parse_module(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));
        assert_eq!(back, env, "seed {seed}");
        assert_eq!(serialize_module(&back), text);
    }
}

proptest! {
    #[test]
    fn serializer_is_a_fixpoint(seed in any::<u64>(), procs in 1usize..6, stmts in 0usize..20) {
        let env = common::random_env(seed, 1, procs, stmts);
        let text = serialize_module(&env);
        let back = parse_module(&text).unwrap();
        prop_assert_eq!(serialize_module(&back), text);
        prop_assert_eq!(back, env);
    }

    #[test]
    fn parser_never_panics(text in "[ -~\n]{0,200}") {
        let _ = parse_module(&text);
    }
}
