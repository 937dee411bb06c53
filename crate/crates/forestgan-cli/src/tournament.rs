//! Cross-evaluation of finished training runs: every discriminator scores
//! every rival generator's fakes plus the withheld validation split, and
//! the adjusted-loss matrix, its antisymmetric difference, and the implied
//! ordering are written as JSON, text tables, and a heatmap.

use std::path::PathBuf;

use clap::Args;
use forestgan::data::{generate, DatasetSpec};
use forestgan::error::{Error, Result};
use forestgan::eval::{tournament, TournamentEntry};
use forestgan::network::Network;
use forestgan::train::TrainConfig;

use crate::{rundir, svg, Ctx};

#[derive(Args)]
pub struct TournamentArgs {
    /// Finished run directories, each holding config.json and
    /// checkpoints/final/{generator,discriminator}.json.
    #[arg(long, num_args = 2.., required = true)]
    pub runs: Vec<PathBuf>,

    /// Fake samples per generator (default: the validation split size).
    #[arg(long)]
    pub n_g: Option<usize>,
}

pub fn run(ctx: &Ctx, args: &TournamentArgs) -> Result<()> {
    let out = ctx.out_dir("tournament");
    let mut entries = Vec::new();
    let mut shared: Option<(DatasetSpec, PathBuf)> = None;
    for dir in &args.runs {
        let config_path = dir.join("config.json");
        let text = std::fs::read_to_string(&config_path).map_err(|e| {
            Error::Contract(format!("cannot read {}: {e}", config_path.display()))
        })?;
        let config: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Contract(format!("bad config {}: {e}", config_path.display())))?;
        match &shared {
            None => shared = Some((config.dataset.clone(), dir.clone())),
            Some((dataset, first)) if *dataset != config.dataset => {
                return Err(Error::Contract(format!(
                    "runs must share one dataset, but {} and {} differ",
                    first.display(),
                    dir.display()
                )));
            }
            Some(_) => {}
        }
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Contract(format!("no usable name in {}", dir.display())))?
            .to_string();
        let final_dir = dir.join("checkpoints/final");
        if !final_dir.is_dir() {
            return Err(Error::Contract(format!(
                "no final checkpoint under {}",
                dir.display()
            )));
        }
        entries.push(TournamentEntry {
            name,
            generator: Network::load(&final_dir.join("generator.json"))?,
            discriminator: Network::load(&final_dir.join("discriminator.json"))?,
        });
    }

    let (dataset_spec, _) = shared.expect("at least two runs parsed");
    let dataset = generate(&dataset_spec)?;
    let report = tournament(&entries, &dataset.val.features, args.n_g, ctx.seed)?;

    rundir::write_text(&out.join("report.json"), &(report.to_json()? + "\n"))?;
    let tables = report.text_tables();
    rundir::write_text(&out.join("tables.txt"), &tables)?;
    rundir::write_text(
        &out.join("heatmap.svg"),
        &svg::heatmap(
            "Adjusted loss differences (positive favors the column model)",
            &report.models,
            &report.diff_matrix,
        ),
    )?;
    print!("{tables}");
    Ok(())
}
