//! Runs every code block of the guide in `book/src` as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/markov-chains.md")]
pub mod markov_chains {}

#[doc = include_str!("../../../book/src/arrival-families.md")]
pub mod arrival_families {}

#[doc = include_str!("../../../book/src/single-server.md")]
pub mod single_server {}

#[doc = include_str!("../../../book/src/switch-geometry.md")]
pub mod switch_geometry {}

#[doc = include_str!("../../../book/src/maxweight.md")]
pub mod maxweight {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
