//! Experiment runner for the forestgan library.
//!
//! Commands: `xor` (parity sweep across seeds), `clf-cond` (classifier
//! conditioning at base and 10× learning rate), `gan-train` (adversarial
//! training on 2-D synthetic data), `tournament` (cross-evaluation of
//! finished runs), and `plot` (CSV columns → SVG).  Every command writes a
//! run directory of `config.json`, `log.csv`, and optional `checkpoints/`
//! and `plots/`; given identical flags and seed the artifacts byte-match.
//!
//! Exit codes: 0 success, 1 runtime failure (e.g. a divergence abort),
//! 2 usage error.

mod clf_cond;
mod gan;
mod plot;
mod rundir;
mod runstats;
mod svg;
mod sweep;
mod tournament;
mod xor;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forestgan::error::{Error, Result};
use forestgan::train::TrainConfig;

#[derive(Parser)]
#[command(name = "forestgan", version, about = "Train and compare forest-head models")]
struct Cli {
    /// Base RNG seed; sweeps use consecutive seeds starting here.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory (default: runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Training-config JSON overriding the built-in recipe; command flags
    /// still override individual fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parity classification sweep over seeds for one head family.
    Xor(xor::XorArgs),
    /// Spiral classifier at base and 10x learning rate, with condition logs.
    ClfCond(clf_cond::ClfCondArgs),
    /// Adversarial training of a preset discriminator on 2-D data.
    GanTrain(gan::GanArgs),
    /// Cross-evaluate finished training runs against each other.
    Tournament(tournament::TournamentArgs),
    /// Render columns of a run log to an SVG chart.
    Plot(plot::PlotArgs),
}

/// Global context shared by every command.
pub struct Ctx {
    pub seed: u64,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
}

impl Ctx {
    /// The run directory: `--out` if given, else `runs/<command>`.
    pub fn out_dir(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(command))
    }

    /// Parses `--config` when present.
    pub fn load_config(&self) -> Result<Option<TrainConfig>> {
        match &self.config {
            None => Ok(None),
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let config: TrainConfig = serde_json::from_str(&text)
                    .map_err(|e| Error::Contract(format!("bad config {}: {e}", path.display())))?;
                Ok(Some(config))
            }
        }
    }
}

/// Broken preconditions are usage errors (2); anything that failed at
/// runtime — divergence aborts, degenerate numerics, I/O — is a 1.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Contract(_)
        | Error::Spec(_)
        | Error::Domain { .. }
        | Error::ShapeMismatch { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx { seed: cli.seed, out: cli.out, config: cli.config };
    let result = match cli.command {
        Command::Xor(args) => xor::run(&ctx, &args),
        Command::ClfCond(args) => clf_cond::run(&ctx, &args),
        Command::GanTrain(args) => gan::run(&ctx, &args),
        Command::Tournament(args) => tournament::run(&ctx, &args),
        Command::Plot(args) => plot::run(&ctx, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_and_runtime_errors_map_to_distinct_codes() {
        assert_eq!(exit_code_for(&Error::Contract("x".into())), 2);
        assert_eq!(exit_code_for(&Error::Spec("x".into())), 2);
        assert_eq!(
            exit_code_for(&Error::Divergence { step: 3, detail: "nan".into() }),
            1
        );
        assert_eq!(exit_code_for(&Error::NonFinite { op: "probe".into() }), 1);
    }

    #[test]
    fn default_out_dir_is_per_command() {
        let ctx = Ctx { seed: 0, out: None, config: None };
        assert_eq!(ctx.out_dir("xor"), PathBuf::from("runs/xor"));
        let ctx = Ctx { seed: 0, out: Some(PathBuf::from("elsewhere")), config: None };
        assert_eq!(ctx.out_dir("xor"), PathBuf::from("elsewhere"));
    }
}
