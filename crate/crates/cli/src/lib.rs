//! File formats and the `meddis` command line over [`meddis_core`].

pub mod commands;
pub mod output;
pub mod schema;
