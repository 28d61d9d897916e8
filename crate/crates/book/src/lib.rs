//! The chapters of the guide in `book/src`, included so that `cargo test`
//! runs every Rust snippet in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/dpd-loss.md")]
pub mod dpd_loss {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/competitors.md")]
pub mod competitors {}

#[doc = include_str!("../../../book/src/influence.md")]
pub mod influence {}

#[doc = include_str!("../../../book/src/benchmarks.md")]
pub mod benchmarks {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
