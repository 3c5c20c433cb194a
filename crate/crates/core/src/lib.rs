pub mod error;
pub mod experiments;
pub mod fit;
pub mod io;
pub mod json;
pub mod model;
pub mod numerics;
pub mod report;
pub mod sampling;
pub mod uncertainty;

pub use error::{Error, Result};
