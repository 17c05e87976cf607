use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, GlobalOptions};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "adaprecon", version, about = "Run adaptive-preconditioning experiments")]
pub struct Cli {
    /// Output directory (overrides the config and ADAPRECON_OUT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Added to every configured seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed_offset: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration over all its seeds.
    Run { config: PathBuf },
    /// Run the cross product of one or more axes.
    Sweep {
        config: PathBuf,
        /// Dotted key such as `optimizer.eta`; repeat for more axes.
        #[arg(long = "axis")]
        axes: Vec<String>,
        /// Comma-separated values, one list per `--axis`.
        #[arg(long = "values", allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Measure sup-norm preconditioner error against η and fit the log-log slope.
    EstimationScaling { config: PathBuf },
    /// Aggregate summaries into per-iteration quantile bands.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
}

impl Cli {
    fn global(&self) -> GlobalOptions {
        GlobalOptions { out: self.out.clone(), jobs: self.jobs, seed_offset: self.seed_offset }
    }
}

/// Executes a parsed command line; progress goes to stderr.
pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let g = cli.global();
    match &cli.command {
        Command::Run { config } => {
            let r = commands::cmd_run(config, &g)?;
            eprintln!("wrote {}", r.summary_path.display());
            r.into_result().map(|_| ())
        }
        Command::Sweep { config, axes, values } => {
            let axes = commands::axes_from_flags(axes, values)?;
            let r = commands::cmd_sweep(config, &axes, &g)?;
            eprintln!("wrote {} ({} runs)", r.summary_path.display(), r.outcomes.len());
            r.into_result().map(|_| ())
        }
        Command::EstimationScaling { config } => {
            let r = commands::cmd_estimation_scaling(config, &g)?;
            for p in &r.points {
                eprintln!(
                    "eta={:e} sup_error={:.4e} bound={:.4e}",
                    p.eta, p.sup_error, p.bound
                );
            }
            eprintln!("slope={:.4} -> {}", r.slope, r.fit_path.display());
            Ok(())
        }
        Command::Report { summaries } => {
            for p in commands::cmd_report(summaries, &g)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

