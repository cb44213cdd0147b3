//! File formats and command-line front end for `mtt-core`.
//!
//! * [`config`] reads and writes the flat `key = value` run configuration.
//! * [`output`] writes `metrics.csv`, `truth.csv`, `particles.json` and
//!   `manifest.json`.
//! * [`cli`] implements the `simulate`, `track`, `eval` and `sweep`
//!   subcommands of the `mtt` binary.

pub mod cli;
pub mod config;
pub mod output;
