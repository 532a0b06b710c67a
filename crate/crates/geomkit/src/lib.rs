//! File formats, run configuration and the experiment pipeline around
//! `geomkit-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod run;
pub mod store;

pub use config::RunConfig;
pub use error::{KitError, Result};
