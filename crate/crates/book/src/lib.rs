//! The guide's chapters, included as doc comments so that `cargo test` runs
//! every Rust listing in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/uncertainty.md")]
pub mod uncertainty {}

#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}

#[doc = include_str!("../../../book/src/continuous-fits.md")]
pub mod continuous_fits {}

#[doc = include_str!("../../../book/src/binned-fits.md")]
pub mod binned_fits {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
