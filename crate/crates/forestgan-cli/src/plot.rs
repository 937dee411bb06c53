//! Renders columns of a run's `log.csv` to SVG.  Without a plot spec it
//! emits the standard loss and condition charts; a spec file selects
//! arbitrary columns, axis labels, and log scales.

use std::path::Path;

use clap::Args;
use forestgan::error::{Error, Result};
use serde::Deserialize;

use crate::{rundir, svg, Ctx};

#[derive(Args)]
pub struct PlotArgs {
    /// Run directory containing log.csv.
    #[arg(long)]
    pub run: std::path::PathBuf,

    /// Plot-spec JSON; omitted renders the standard loss/condition charts.
    #[arg(long)]
    pub spec: Option<std::path::PathBuf>,
}

fn default_x() -> String {
    "step".into()
}

/// Declarative chart over run-log columns.  `series` and `x` must name
/// existing columns.
#[derive(Debug, Deserialize)]
pub struct PlotSpec {
    #[serde(default)]
    pub title: Option<String>,
    /// Column for the horizontal axis.
    #[serde(default = "default_x")]
    pub x: String,
    /// Columns drawn as lines.
    pub series: Vec<String>,
    #[serde(default)]
    pub x_label: Option<String>,
    #[serde(default)]
    pub y_label: Option<String>,
    #[serde(default)]
    pub log_x: bool,
    #[serde(default)]
    pub log_y: bool,
    /// Output file name under `<run>/plots/`.
    #[serde(default)]
    pub out: Option<String>,
}

/// Parsed log: header names and one optional-value column per name.
pub struct Log {
    columns: Vec<(String, Vec<Option<f64>>)>,
}

impl Log {
    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Paired `(x, y)` rows where both cells are present.
    fn series(&self, x: &str, y: &str) -> Option<Vec<(f64, f64)>> {
        let xs = self.column(x)?;
        let ys = self.column(y)?;
        Some(
            xs.iter()
                .zip(ys)
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .collect(),
        )
    }
}

/// Parses a run log.  Empty cells become `None`; `inf` and `NaN` parse to
/// their IEEE values.
pub fn parse_log(text: &str) -> Result<Log> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Contract("log is empty".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut columns: Vec<(String, Vec<Option<f64>>)> =
        header.into_iter().map(|name| (name, Vec::new())).collect();
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::Contract(format!(
                "log line {} has {} cells, expected {}",
                lineno + 2,
                cells.len(),
                columns.len()
            )));
        }
        for (cell, (name, column)) in cells.iter().zip(&mut columns) {
            let value = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|_| {
                    Error::Contract(format!("bad number {cell:?} in column {name}"))
                })?)
            };
            column.push(value);
        }
    }
    Ok(Log { columns })
}

pub fn run(ctx: &Ctx, args: &PlotArgs) -> Result<()> {
    let _ = ctx;
    let log_path = args.run.join("log.csv");
    let text = std::fs::read_to_string(&log_path)
        .map_err(|e| Error::Contract(format!("cannot read {}: {e}", log_path.display())))?;
    let log = parse_log(&text)?;
    match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Contract(format!("cannot read {}: {e}", path.display())))?;
            let spec: PlotSpec = serde_json::from_str(&text)
                .map_err(|e| Error::Contract(format!("bad plot spec {}: {e}", path.display())))?;
            render_spec(&args.run, &log, &spec)
        }
        None => render_default(&args.run, &log),
    }
}

fn render_spec(run: &Path, log: &Log, spec: &PlotSpec) -> Result<()> {
    if spec.series.is_empty() {
        return Err(Error::Contract("plot spec selects no series".into()));
    }
    for name in spec.series.iter().chain(std::iter::once(&spec.x)) {
        if log.column(name).is_none() {
            return Err(Error::Contract(format!("log has no column named {name:?}")));
        }
    }
    let series: Vec<svg::Series> = spec
        .series
        .iter()
        .map(|name| {
            svg::Series::new(name.clone(), log.series(&spec.x, name).expect("checked above"))
        })
        .collect();
    let title = spec.title.clone().unwrap_or_else(|| spec.series.join(", "));
    let x_label = spec.x_label.clone().unwrap_or_else(|| spec.x.clone());
    let y_label = spec.y_label.clone().unwrap_or_else(|| "value".into());
    let chart = svg::line_chart(&title, &x_label, &y_label, spec.log_x, spec.log_y, &series);
    let file = spec.out.clone().unwrap_or_else(|| "custom.svg".into());
    rundir::write_text(&run.join("plots").join(file), &chart)
}

/// Loss chart over whichever loss columns carry data, plus a log-scale
/// condition chart.
fn render_default(run: &Path, log: &Log) -> Result<()> {
    let mut losses = Vec::new();
    for name in ["d_loss", "g_loss", "val_loss"] {
        if let Some(points) = log.series("step", name) {
            if !points.is_empty() {
                losses.push(svg::Series::new(name, points));
            }
        }
    }
    if !losses.is_empty() {
        rundir::write_text(
            &run.join("plots/loss.svg"),
            &svg::line_chart("Losses", "step", "loss", false, false, &losses),
        )?;
    }
    if let Some(points) = log.series("step", "cond") {
        if !points.is_empty() {
            let series = [svg::Series::new("cond", points)];
            rundir::write_text(
                &run.join("plots/condition.svg"),
                &svg::line_chart(
                    "Head condition number",
                    "step",
                    "condition number",
                    false,
                    true,
                    &series,
                ),
            )?;
        }
    }
    Ok(())
}
