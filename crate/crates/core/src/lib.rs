pub mod cli;
pub mod error;
pub mod greens;
pub mod guidance;
pub mod lqg;
pub mod oracles;
pub mod schedule;
pub mod score;
pub mod simulate;

pub use error::{Error, Result};
