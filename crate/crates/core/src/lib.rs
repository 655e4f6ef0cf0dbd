pub mod error;
pub mod geometry;
pub mod harmonics;
pub mod harness;
pub mod io;
pub mod operators;
pub mod oracle;
pub mod parallel;
pub mod solver;
pub mod trace_space;

pub use error::{Error, Result};
