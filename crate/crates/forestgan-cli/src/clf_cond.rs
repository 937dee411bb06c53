//! Conditioning comparison on the spiral classification task: one head
//! family trained twice with matched seeds — at the base learning rate and
//! at 10× — logging loss and head-Jacobian condition numbers, with overlay
//! plots.  A divergence abort in either run still writes all artifacts,
//! then surfaces as a runtime failure.

use std::path::Path;

use clap::{Args, ValueEnum};
use forestgan::error::Result;
use forestgan::train::{spiral_recipe, train_classifier, TrainConfig, TrainRun};
use serde_json::json;

use crate::{rundir, runstats, svg, Ctx};

/// The stress run multiplies the base learning rate by this factor.
const STRESS_FACTOR: f64 = 10.0;

#[derive(Args)]
pub struct ClfCondArgs {
    /// Head family to train.
    #[arg(long, value_enum)]
    pub head: Head,

    /// Base learning rate; the stress run uses 10x this value.
    #[arg(long)]
    pub lr: Option<f64>,

    /// Optimisation steps for both runs.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum Head {
    /// Fully-connected classifier head.
    Fc,
    /// Soft decision forest classifier head.
    Forest,
}

impl Head {
    fn label(self) -> &'static str {
        match self {
            Head::Fc => "fc",
            Head::Forest => "forest",
        }
    }
}

pub fn run(ctx: &Ctx, args: &ClfCondArgs) -> Result<()> {
    let out = ctx.out_dir("clf-cond");
    let (mut base, spec) = spiral_recipe(matches!(args.head, Head::Forest), ctx.seed)?;
    if let Some(mut config) = ctx.load_config()? {
        config.seed = ctx.seed;
        base = config;
    }
    if let Some(lr) = args.lr {
        base.learning_rate = lr;
    }
    if let Some(steps) = args.steps {
        base.steps = steps;
    }
    let mut stress = base.clone();
    stress.learning_rate *= STRESS_FACTOR;

    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for (label, config) in [("base", &base), ("stress", &stress)] {
        let run = train_classifier(config, &spec)?;
        write_run_dir(&out.join(label), config, &run)?;
        reports.push(report_for(label, config, &run));
        println!(
            "clf-cond head={} {label}: lr={} {}",
            args.head.label(),
            config.learning_rate,
            match &run.divergence {
                Some(info) => format!("diverged at step {}", info.step),
                None => format!(
                    "final val loss {:.4}",
                    runstats::last_val_loss(&run.records).unwrap_or(f64::NAN)
                ),
            }
        );
        runs.push(run);
    }
    write_plots(&out, &base, &stress, &runs[0], &runs[1])?;
    rundir::write_json(
        &out.join("summary.json"),
        &json!({
            "head": args.head.label(),
            "stress_factor": STRESS_FACTOR,
            "seed": ctx.seed,
            "runs": reports,
        }),
    )?;

    // Artifacts are all on disk; only now does a divergence fail the command.
    for run in &runs {
        run.ensure_completed()?;
    }
    Ok(())
}

fn write_run_dir(dir: &Path, config: &TrainConfig, run: &TrainRun) -> Result<()> {
    rundir::write_json(&dir.join("config.json"), config)?;
    rundir::write_text(&dir.join("log.csv"), &run.to_csv())?;
    rundir::write_json(&dir.join("classifier.json"), &run.discriminator)?;
    Ok(())
}

fn report_for(label: &str, config: &TrainConfig, run: &TrainRun) -> serde_json::Value {
    let cond = runstats::last_cond(&run.records);
    json!({
        "label": label,
        "learning_rate": config.learning_rate,
        "steps": config.steps,
        "steps_completed": run.records.len(),
        "diverged": run.divergence.is_some(),
        "divergence_step": run.divergence.as_ref().map(|d| d.step),
        "final_loss": runstats::json_opt(run.records.last().map(|r| r.d_loss)),
        "final_val_loss": runstats::json_opt(runstats::last_val_loss(&run.records)),
        "final_cond": runstats::json_opt(cond.map(|c| c.0)),
        "final_rank": cond.map(|c| c.1),
    })
}

fn write_plots(
    out: &Path,
    base: &TrainConfig,
    stress: &TrainConfig,
    base_run: &TrainRun,
    stress_run: &TrainRun,
) -> Result<()> {
    let base_name = format!("lr {}", base.learning_rate);
    let stress_name = format!("lr {}", stress.learning_rate);
    let losses = [
        svg::Series::new(base_name.clone(), runstats::loss_series(&base_run.records)),
        svg::Series::new(stress_name.clone(), runstats::loss_series(&stress_run.records)),
    ];
    rundir::write_text(
        &out.join("plots/loss.svg"),
        &svg::line_chart("Training log loss", "step", "log loss", false, true, &losses),
    )?;
    let conds = [
        svg::Series::new(base_name, runstats::cond_series(&base_run.records)),
        svg::Series::new(stress_name, runstats::cond_series(&stress_run.records)),
    ];
    rundir::write_text(
        &out.join("plots/condition.svg"),
        &svg::line_chart(
            "Head Jacobian condition number",
            "step",
            "condition number",
            false,
            true,
            &conds,
        ),
    )?;
    Ok(())
}
