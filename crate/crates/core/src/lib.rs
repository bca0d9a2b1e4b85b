// Copyright (c) The Move Contributors
// SPDX-License-Identifier: Apache-2.0

//! Robust safety checking for a small Move bytecode language.

pub mod asm;
pub mod cli;
pub mod corpus;
pub mod encapsulator;
pub mod invariants;
pub mod ir;
pub mod linking;
pub mod oracle;
pub mod state;
pub mod traces;
pub mod vm;
pub mod wf;
