//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

pub mod graph_oracle;
pub mod kernel_fixtures;
pub mod kernel_gen;
pub mod ring_model;
pub mod shader_fixtures;
pub mod store_model;
