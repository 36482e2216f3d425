//! The guide's listings, run by `cargo test --doc`. mdbook cannot link
//! against workspace crates, so each chapter is included here as a module
//! doc comment instead.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/instances.md")]
pub mod instances {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/programs.md")]
pub mod programs {}
#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}
#[doc = include_str!("../../../book/src/inventory.md")]
pub mod inventory {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
