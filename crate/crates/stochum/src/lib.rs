//! Scenario runner for `stochum-core`: scenario files, the mode runners,
//! the built-in selftest and the result files.
//!
//! A run reads a TOML scenario ([`config`]), executes one mode ([`run`]) and
//! writes `result.json` plus CSV curves into the output directory
//! ([`output`]). Every run ends with an invariant ledger ([`record`]) whose
//! `FAIL` entries decide the exit status.

pub mod config;
pub mod output;
pub mod record;
pub mod run;
pub mod selftest;
