//! Command-line front end: config files, CSV ingestion, the housing-price
//! pipeline, results archives and table rendering.

pub mod archive;
pub mod boston;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod render;

pub use archive::ResultsArchive;
pub use commands::{Cli, Command};
pub use error::{CliError, Result};
pub use render::{Cell, Format, Table};
