// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Example modules shipped with the crate.

use crate::{asm::parse_module, invariants::Invariant, ir::CodeEnv};

#[derive(Clone, Copy, Debug)]
pub struct Sample {
    pub name: &'static str,
    pub source: &'static str,
    pub invariant: Option<&'static str>,
}

macro_rules! sample {
    ($name:literal) => {
        Sample {
            name: $name,
            source: include_str!(concat!("../corpus/", $name, ".masm")),
            invariant: Some(include_str!(concat!("../corpus/", $name, ".inv"))),
        }
    };
    ($name:literal, no_invariant) => {
        Sample {
            name: $name,
            source: include_str!(concat!("../corpus/", $name, ".masm")),
            invariant: None,
        }
    };
}

pub const SAMPLES: &[Sample] = &[
    sample!("counter"),
    sample!("counter_safe"),
    sample!("nextcoin"),
    sample!("nextcoin_safe"),
    sample!("option_variant"),
    sample!("owned_vector", no_invariant),
];

pub fn sample(name: &str) -> Option<&'static Sample> {
    SAMPLES.iter().find(|s| s.name == name)
}

impl Sample {
    pub fn env(&self) -> CodeEnv {
        parse_module(self.source).unwrap_or_else(|e| panic!("corpus {}: {e}", self.name))
    }

    pub fn inv(&self, env: &CodeEnv) -> Option<Invariant> {
        self.invariant
            .map(|text| Invariant::parse(text, env).unwrap_or_else(|e| panic!("corpus {} invariant: {e}", self.name)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wf::well_formed;

    #[test]
    fn every_sample_is_well_formed() {
        for s in SAMPLES {
            let env = s.env();
            assert_eq!(well_formed(&env), vec![], "{}", s.name);
            s.inv(&env);
        }
    }
}
