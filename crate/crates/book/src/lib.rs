//! Doctests for the guide in `book/`.
//!
//! Each chapter is its own module so a failing listing points at its file.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/tensors.md")]
mod tensors {}

#[doc = include_str!("../../../book/src/images.md")]
mod images {}

#[doc = include_str!("../../../book/src/model.md")]
mod model {}

#[doc = include_str!("../../../book/src/training.md")]
mod training {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
