//! Compiles and runs the code listings of the guide in `book/` as doctests.
//!
//! mdbook cannot link its listings against workspace crates, so each chapter
//! is included here as the documentation of an empty module and checked by
//! `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}

#[doc = include_str!("../../../book/src/protocol.md")]
pub mod protocol {}

#[doc = include_str!("../../../book/src/theory.md")]
pub mod theory {}

#[doc = include_str!("../../../book/src/communication.md")]
pub mod communication {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
