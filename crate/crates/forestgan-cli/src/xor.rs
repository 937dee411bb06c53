//! Parity sweep: trains one head family on the exhaustive XOR truth table
//! across consecutive seeds, then reduces the runs into a summary with a
//! success rate at a fixed loss threshold.

use std::path::Path;

use clap::{Args, ValueEnum};
use forestgan::error::{Error, Result};
use forestgan::train::{train_classifier, xor_recipe, TrainConfig, TrainRun};
use serde_json::json;

use crate::{rundir, runstats, svg, sweep, Ctx};

/// A run counts as solved below this final log loss.
const SUCCESS_THRESHOLD: f64 = 0.01;

#[derive(Args)]
pub struct XorArgs {
    /// Input dimension of the parity problem (at least 2).
    #[arg(long, default_value_t = 3)]
    pub dim: usize,

    /// Head family to train.
    #[arg(long, value_enum)]
    pub model: Model,

    /// Training epochs; the batch covers the full truth table, so one
    /// optimisation step is one epoch.
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Number of consecutive seeds to run, starting at --seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum Model {
    /// Fully-connected head on a small ReLU body.
    Fc,
    /// Soft decision tree head.
    Tree,
}

impl Model {
    fn label(self) -> &'static str {
        match self {
            Model::Fc => "fc",
            Model::Tree => "tree",
        }
    }
}

pub fn run(ctx: &Ctx, args: &XorArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::Contract("need at least one seed".into()));
    }
    let out = ctx.out_dir("xor");
    let (mut base, spec) = xor_recipe(args.dim, matches!(args.model, Model::Tree), ctx.seed)?;
    if let Some(config) = ctx.load_config()? {
        base = config;
    }
    if let Some(epochs) = args.epochs {
        base.steps = epochs;
    }
    rundir::write_json(&out.join("config.json"), &base)?;

    let runs = sweep::fan_out(args.seeds, |i| {
        let seed = ctx.seed + i as u64;
        let mut config = base.clone();
        config.seed = seed;
        config.dataset.seed = seed;
        let run = train_classifier(&config, &spec)?;
        write_seed_dir(&out.join(format!("seed_{seed}")), &config, &run)?;
        Ok(run)
    })?;

    let mut per_seed = Vec::new();
    let mut successes = 0usize;
    for (i, run) in runs.iter().enumerate() {
        let seed = ctx.seed + i as u64;
        let final_loss = run.records.last().map(|r| r.d_loss);
        let diverged = run.divergence.is_some();
        let solved = !diverged && final_loss.is_some_and(|l| l < SUCCESS_THRESHOLD);
        successes += solved as usize;
        let cond = runstats::last_cond(&run.records);
        per_seed.push(json!({
            "seed": seed,
            "final_loss": runstats::json_opt(final_loss),
            "final_val_loss": runstats::json_opt(runstats::last_val_loss(&run.records)),
            "final_cond": runstats::json_opt(cond.map(|c| c.0)),
            "final_rank": cond.map(|c| c.1),
            "diverged": diverged,
            "solved": solved,
        }));
    }
    let success_rate = successes as f64 / args.seeds as f64;
    rundir::write_json(
        &out.join("summary.json"),
        &json!({
            "dim": args.dim,
            "model": args.model.label(),
            "epochs": base.steps,
            "seeds": args.seeds,
            "base_seed": ctx.seed,
            "success_threshold": SUCCESS_THRESHOLD,
            "success_rate": success_rate,
            "per_seed": per_seed,
        }),
    )?;
    write_plots(&out, ctx.seed, &runs)?;

    println!(
        "xor dim={} model={}: {successes}/{} seeds below loss {SUCCESS_THRESHOLD}",
        args.dim,
        args.model.label(),
        args.seeds
    );
    Ok(())
}

fn write_seed_dir(dir: &Path, config: &TrainConfig, run: &TrainRun) -> Result<()> {
    rundir::write_json(&dir.join("config.json"), config)?;
    rundir::write_text(&dir.join("log.csv"), &run.to_csv())?;
    rundir::write_json(&dir.join("classifier.json"), &run.discriminator)?;
    Ok(())
}

fn write_plots(out: &Path, base_seed: u64, runs: &[TrainRun]) -> Result<()> {
    let series = |f: &dyn Fn(&TrainRun) -> Vec<(f64, f64)>| -> Vec<svg::Series> {
        runs.iter()
            .enumerate()
            .map(|(i, run)| svg::Series::new(format!("seed {}", base_seed + i as u64), f(run)))
            .collect()
    };
    let losses = series(&|run| runstats::loss_series(&run.records));
    rundir::write_text(
        &out.join("plots/loss.svg"),
        &svg::line_chart("Training log loss", "epoch", "log loss", false, true, &losses),
    )?;
    let conds = series(&|run| runstats::cond_series(&run.records));
    rundir::write_text(
        &out.join("plots/condition.svg"),
        &svg::line_chart(
            "Head Jacobian condition number",
            "epoch",
            "condition number",
            false,
            true,
            &conds,
        ),
    )?;
    Ok(())
}
