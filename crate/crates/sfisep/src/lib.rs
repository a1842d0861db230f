//! File formats, corpus tooling, experiments and the command line around
//! [`sfisep_core`].

pub mod cli;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod model_file;
mod parallel;
pub mod wav;

pub use error::{Error, Result};
pub use parallel::par_map;
