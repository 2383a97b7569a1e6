#![allow(dead_code)]

pub mod grammar_oracle;
