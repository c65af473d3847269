use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlperim::commands::{run, RunOptions};
use nlperim::{config, CliError, Task};

#[derive(Parser)]
#[command(name = "nlperim", version, about = "Nonlocal perimeter experiments on Cartesian grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set kernel.s=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0, global = true)]
    threads: usize,
    /// Ordered reductions everywhere, for byte-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory (default: the config's `output`, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate J_K for a field.
    Energy,
    /// Solve the Plateau problem with the field's exterior as datum.
    Minimize {
        /// `halfspace:n1,n2[@offset]`; adds the L1 comparison.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Check a calibration certificate against random competitors.
    Calibrate,
    /// Sweep rescaled energies against the local limit.
    Gamma,
    /// Run the built-in acceptance checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.set.clone();
    let task = match &cli.command {
        Command::Energy => Task::Energy,
        Command::Minimize { reference } => {
            if let Some(r) = reference {
                overrides.push(format!("minimize.reference=\"{r}\""));
            }
            Task::Minimize
        }
        Command::Calibrate => Task::Calibrate,
        Command::Gamma => Task::Gamma,
        Command::Selftest => Task::Selftest,
    };
    let result = (|| -> Result<_, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cli: cannot start thread pool: {e}")))?;
        let loaded = config::load(cli.config.as_deref(), &overrides)?;
        run(
            &loaded,
            &RunOptions {
                task,
                overrides,
                deterministic: cli.deterministic,
                threads: cli.threads,
                out: cli.out.clone(),
            },
        )
    })();
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
