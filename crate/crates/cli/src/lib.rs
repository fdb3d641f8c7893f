//! Ingestion, forecasting runs, simulations and report artifacts behind the
//! `floodcast` binary.

pub mod commands;
pub mod forecast;
pub mod ingest;
pub mod plot;

pub use commands::{execute, Command, Outcome, Overrides, RunConfig, DEFAULT_SEED};
pub use ingest::{ingest_readings, parse_readings, write_readings, IngestError, Ingested};
