use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stochum::config::{parse_config, Mode};
use stochum::record::Status;
use stochum::run::{run, RunOptions};
use stochum::selftest::DEFAULT_SEED;

/// Minimal-norm and minimal-time null controls for the stochastic heat
/// equation on a binomial scenario tree.
///
/// Exit status: 0 when every ledger check passes or is skipped, 1 when a
/// check fails or an output cannot be written, 2 on a configuration error.
#[derive(Parser, Debug)]
#[command(name = "stochum", version)]
struct Cli {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Overrides `[solve] mode`.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cross-checks against the dense oracle (small sizes only).
    #[arg(long)]
    dense_oracle: bool,
    /// Skips checks that draw random inputs.
    #[arg(long)]
    seedless: bool,
    /// Seed for the randomized checks.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    prop_seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match parse_config(&cli.config, cli.mode) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        out_dir: cli.out,
        dense_oracle: cli.dense_oracle,
        seedless: cli.seedless,
        prop_seed: cli.prop_seed,
        write_files: true,
    };
    let outcome = run(&config, &opts);
    for c in &outcome.record.ledger.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("{tag} {:<32} {}", c.name, c.detail);
    }
    for path in &outcome.files {
        println!("wrote {}", path.display());
    }
    for e in &outcome.write_errors {
        eprintln!("write error: {e}");
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
