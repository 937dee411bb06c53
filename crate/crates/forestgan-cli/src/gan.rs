//! Adversarial training on a 2-D synthetic dataset with a preset
//! discriminator head.  Emits the run log, parameter checkpoints, scatter
//! snapshots of generator output over time, and a summary with ring mode
//! coverage where that applies.

use std::path::Path;

use clap::{Args, ValueEnum};
use forestgan::data::{generate, ring_centers, DatasetKind};
use forestgan::error::Result;
use forestgan::eval::{mode_coverage, sample_generator};
use forestgan::network::{preset, Checkpoint, Network};
use forestgan::train::{ring_gan_config, train_gan, TrainRun};
use serde_json::json;

use crate::{rundir, runstats, svg, Ctx};

/// Latent stream for plot samples, decorrelated from the training stream.
const SCATTER_SALT: u64 = 0x5CA7_7E2F_0000_0001;
/// Points per scatter cloud.
const SCATTER_POINTS: usize = 512;
/// Samples drawn for the mode-coverage summary.
const COVERAGE_SAMPLES: usize = 1000;

#[derive(Args)]
pub struct GanArgs {
    /// Discriminator preset.
    #[arg(long, value_enum, default_value_t = Preset::GanForestShallow)]
    pub preset: Preset,

    /// Training dataset family (default: the recipe's gaussian_ring).
    #[arg(long, value_enum)]
    pub data: Option<Data>,

    /// Adversarial steps.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum Preset {
    /// Fully-connected discriminator head.
    #[value(name = "gan_fc")]
    GanFc,
    /// Wide one-level forest head.
    #[value(name = "gan_forest_shallow")]
    GanForestShallow,
    /// Narrow five-level forest head.
    #[value(name = "gan_forest_deep")]
    GanForestDeep,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::GanFc => "gan_fc",
            Preset::GanForestShallow => "gan_forest_shallow",
            Preset::GanForestDeep => "gan_forest_deep",
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
pub enum Data {
    /// Eight-mode Gaussian ring.
    #[value(name = "gaussian_ring")]
    GaussianRing,
    /// Two interleaved moons.
    #[value(name = "two_moons")]
    TwoMoons,
}

pub fn run(ctx: &Ctx, args: &GanArgs) -> Result<()> {
    let out = ctx.out_dir("gan-train");
    let mut config = match ctx.load_config()? {
        Some(mut file) => {
            file.seed = ctx.seed;
            file
        }
        None => ring_gan_config(ctx.seed),
    };
    match args.data {
        Some(Data::GaussianRing) => {
            config.dataset.kind = DatasetKind::GaussianRing { modes: 8, radius: 2.0, sigma: 0.05 };
        }
        Some(Data::TwoMoons) => {
            config.dataset.kind = DatasetKind::TwoMoons { noise: 0.05 };
        }
        None => {}
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if config.checkpoint_every == 0 && config.steps > 0 {
        // Ten snapshots by default, so the scatter series shows evolution.
        config.checkpoint_every = (config.steps / 10).max(1);
    }

    let gen_spec = preset("gan_generator")?;
    let disc_spec = preset(args.preset.name())?;
    let run = train_gan(&config, &gen_spec, &disc_spec)?;

    rundir::write_json(&out.join("config.json"), &config)?;
    rundir::write_text(&out.join("log.csv"), &run.to_csv())?;
    for snap in &run.snapshots {
        let dir = out.join(format!("checkpoints/step_{:05}", snap.step));
        if let Some(gen) = &snap.generator {
            rundir::write_json(&dir.join("generator.json"), gen)?;
        }
        rundir::write_json(&dir.join("discriminator.json"), &snap.discriminator)?;
    }
    if let Some(gen) = &run.generator {
        rundir::write_json(&out.join("checkpoints/final/generator.json"), gen)?;
    }
    rundir::write_json(&out.join("checkpoints/final/discriminator.json"), &run.discriminator)?;

    let real = generate(&config.dataset)?;
    let real_cloud = tensor_points(real.val.features.data(), SCATTER_POINTS);
    for snap in &run.snapshots {
        if let Some(gen) = &snap.generator {
            write_scatter(
                &out.join(format!("plots/samples_step_{:05}.svg", snap.step)),
                &format!("Generator output at step {}", snap.step),
                &real_cloud,
                gen,
                ctx.seed,
            )?;
        }
    }
    if let Some(gen) = &run.generator {
        write_scatter(
            &out.join("plots/samples_final.svg"),
            "Generator output after training",
            &real_cloud,
            gen,
            ctx.seed,
        )?;
    }
    write_curves(&out, &run)?;

    let coverage = match (&config.dataset.kind, &run.generator) {
        (DatasetKind::GaussianRing { modes, radius, sigma }, Some(gen)) => {
            let net = Network::from_checkpoint(gen.clone())?;
            let samples =
                sample_generator(&net, COVERAGE_SAMPLES, ctx.seed.wrapping_add(SCATTER_SALT))?;
            let centers = ring_centers(*modes, *radius);
            let cov = mode_coverage(&samples, &centers, 3.0 * sigma)?;
            json!({ "covered": cov.covered, "histogram": cov.histogram })
        }
        _ => serde_json::Value::Null,
    };
    let cond = runstats::last_cond(&run.records);
    rundir::write_json(
        &out.join("summary.json"),
        &json!({
            "preset": args.preset.name(),
            "dataset": config.dataset,
            "steps": config.steps,
            "seed": ctx.seed,
            "diverged": run.divergence.is_some(),
            "divergence_step": run.divergence.as_ref().map(|d| d.step),
            "final_d_loss": runstats::json_opt(run.records.last().map(|r| r.d_loss)),
            "final_g_loss": runstats::json_opt(run.records.last().and_then(|r| r.g_loss)),
            "final_cond": runstats::json_opt(cond.map(|c| c.0)),
            "final_rank": cond.map(|c| c.1),
            "mode_coverage": coverage,
        }),
    )?;

    println!(
        "gan-train preset={} seed={}: {}",
        args.preset.name(),
        ctx.seed,
        match &run.divergence {
            Some(info) => format!("diverged at step {}", info.step),
            None => format!("completed {} steps", config.steps),
        }
    );
    run.ensure_completed()?;
    Ok(())
}

/// First `cap` rows of a flat `[n, 2]` buffer as points.
fn tensor_points(data: &[f64], cap: usize) -> Vec<(f64, f64)> {
    data.chunks_exact(2).take(cap).map(|p| (p[0], p[1])).collect()
}

fn write_scatter(
    path: &Path,
    title: &str,
    real_cloud: &[(f64, f64)],
    gen: &Checkpoint,
    seed: u64,
) -> Result<()> {
    let net = Network::from_checkpoint(gen.clone())?;
    let samples = sample_generator(&net, SCATTER_POINTS, seed.wrapping_add(SCATTER_SALT))?;
    let groups = [
        svg::Series::new("real", real_cloud.to_vec()),
        svg::Series::new("generated", tensor_points(samples.data(), SCATTER_POINTS)),
    ];
    rundir::write_text(path, &svg::scatter_chart(title, &groups))
}

fn write_curves(out: &Path, run: &TrainRun) -> Result<()> {
    let losses = [
        svg::Series::new("discriminator", runstats::loss_series(&run.records)),
        svg::Series::new("generator", runstats::gen_loss_series(&run.records)),
    ];
    rundir::write_text(
        &out.join("plots/loss.svg"),
        &svg::line_chart("Adversarial losses", "step", "loss", false, false, &losses),
    )?;
    let conds = [svg::Series::new("discriminator head", runstats::cond_series(&run.records))];
    rundir::write_text(
        &out.join("plots/condition.svg"),
        &svg::line_chart(
            "Discriminator head condition number",
            "step",
            "condition number",
            false,
            true,
            &conds,
        ),
    )?;
    Ok(())
}
