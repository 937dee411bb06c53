//! Cross-evaluation of trained adversarial pairs, and distribution metrics
//! for synthetic mixture targets.
//!
//! The centrepiece is the adjusted loss: discriminator A is scored against
//! generator B's fakes *and* against a withheld real validation set, so a
//! discriminator that merely memorised its training reals pays for it. A
//! tournament evaluates every (generator, discriminator) pairing into a
//! score matrix, derives the antisymmetric difference matrix, and reads a
//! best-to-worst ordering off the pairwise signs.
//!
//! Matrix entries are independent pure computations over frozen networks;
//! they are filled in a fixed index order so reports are deterministic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ring_centers;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{sigmoid_scalar, Tensor};
use crate::train::{draw_latents, CLAMP_HI, CLAMP_LO};

/// Shared settings of a tournament, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Number of fake samples drawn per generator.
    pub n_g: usize,
    /// Number of withheld real validation samples.
    pub n_v: usize,
    /// Seed for the deterministic latent draws.
    pub seed: u64,
}

/// Adjusted cross-entropy of discriminator `disc` against generator `gen`:
/// `−(1/N_g) Σ log(1 − D(G(z_i))) − (1/N_v) Σ log D(x_v)`, with the same
/// probability clamp as the training losses so entries are comparable with
/// training logs. The `z_i` are drawn from a ChaCha stream seeded with
/// `seed`, so the score is a pure function of its arguments.
///
/// `n_g` defaults to the validation size, balancing the two terms.
pub fn adjusted_loss(
    disc: &Network,
    gen: &Network,
    validation: &Tensor,
    n_g: Option<usize>,
    seed: u64,
) -> Result<f64> {
    let n_v = validation.shape()[0];
    if n_v == 0 {
        return Err(Error::Contract(
            "adjusted loss needs a nonempty validation set".into(),
        ));
    }
    if disc.output_width() != 1 {
        return Err(Error::Contract(format!(
            "discriminator must emit one score, got width {}",
            disc.output_width()
        )));
    }
    if validation.shape()[1] != disc.input_width() {
        return Err(Error::Contract(format!(
            "validation rows have width {} but the discriminator expects {}",
            validation.shape()[1],
            disc.input_width()
        )));
    }
    if gen.output_width() != disc.input_width() {
        return Err(Error::Contract(format!(
            "generator emits width {} but the discriminator expects {}",
            gen.output_width(),
            disc.input_width()
        )));
    }
    let n_g = n_g.unwrap_or(n_v);
    if n_g == 0 {
        return Err(Error::Contract("n_g must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = draw_latents(&mut rng, n_g, gen.input_width());
    let fakes = gen.forward(&z)?;
    let fake_scores = disc.forward(&fakes)?;
    let val_scores = disc.forward(validation)?;

    let fake_term = mean_clamped(fake_scores.data(), |p| -(1.0 - p).ln());
    let val_term = mean_clamped(val_scores.data(), |p| -p.ln());
    Ok(fake_term + val_term)
}

fn mean_clamped(scores: &[f64], term: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = scores
        .iter()
        .map(|s| term(sigmoid_scalar(*s).clamp(CLAMP_LO, CLAMP_HI)))
        .sum();
    total / scores.len() as f64
}

/// Draws `n` samples from a generator using a latent stream seeded with
/// `seed`; the same seed and generator always give the same samples.
pub fn sample_generator(gen: &Network, n: usize, seed: u64) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::Contract("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = draw_latents(&mut rng, n, gen.input_width());
    gen.forward(&z)
}

/// One competitor: a frozen generator/discriminator pair under a label.
#[derive(Debug, Clone)]
pub struct TournamentEntry {
    pub name: String,
    pub generator: Network,
    pub discriminator: Network,
}

/// Adjusted losses for every pairing. Rows follow generators, columns
/// follow discriminators: `entries[g][d]` scores discriminator `d` on
/// generator `g`'s fakes. The diagonal evaluates each discriminator
/// against its own generator with the same formula as every other cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub models: Vec<String>,
    pub entries: Vec<Vec<f64>>,
    pub config: EvalConfig,
}

/// Pairwise score differences `D[i][j] = M[j][i] − M[i][j]`: positive when
/// model `j`'s row beats model `i`'s under the transposed comparison, the
/// sign convention that makes the upper triangle trend upward for
/// better-ordered model lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffMatrix {
    pub models: Vec<String>,
    pub entries: Vec<Vec<f64>>,
}

/// `D[i][j] = M[j][i] − M[i][j]` for a square matrix. The result is
/// exactly antisymmetric with a zero diagonal (IEEE subtraction negates
/// exactly under operand swap).
pub fn difference_matrix(matrix: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = matrix.len();
    if matrix.iter().any(|row| row.len() != n) {
        return Err(Error::Contract(
            "difference matrix needs a square input".into(),
        ));
    }
    Ok((0..n)
        .map(|i| (0..n).map(|j| matrix[j][i] - matrix[i][j]).collect())
        .collect())
}

impl DiffMatrix {
    pub fn from_scores(scores: &ScoreMatrix) -> Result<DiffMatrix> {
        Ok(DiffMatrix {
            models: scores.models.clone(),
            entries: difference_matrix(&scores.entries)?,
        })
    }
}

/// Best-to-worst reading of a difference matrix. `order` is a topological
/// sort of the "beats" relation (`j` beats `i` when `D[i][j] > 0`); when
/// the relation contains a cycle no total order exists, so `order` keeps
/// only the models sortable ahead of the cycle and `cycle` is flagged
/// instead of forcing a ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub order: Vec<String>,
    pub cycle: bool,
}

/// Kahn's algorithm over winner→loser edges, visiting equal candidates in
/// model-list order so the result is deterministic.
pub fn ordering(diff: &DiffMatrix) -> Result<Ordering> {
    let n = diff.models.len();
    if diff.entries.len() != n || diff.entries.iter().any(|r| r.len() != n) {
        return Err(Error::Contract(
            "difference matrix shape does not match its model list".into(),
        ));
    }
    // beats[w][l]: w beats l.
    let mut beats = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if diff.entries[i][j] > 0.0 {
                beats[j][i] = true;
            }
        }
    }
    let mut lost_to = vec![0usize; n];
    for w in 0..n {
        for l in 0..n {
            if beats[w][l] {
                lost_to[l] += 1;
            }
        }
    }
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let Some(next) = (0..n).find(|m| !placed[*m] && lost_to[*m] == 0) else {
            break; // every remaining model has lost to another: a cycle
        };
        placed[next] = true;
        order.push(diff.models[next].clone());
        for l in 0..n {
            if beats[next][l] {
                lost_to[l] -= 1;
            }
        }
    }
    let cycle = order.len() < n;
    Ok(Ordering { order, cycle })
}

/// Full cross-evaluation artifact: the score matrix, its differences, the
/// induced ordering and the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentReport {
    pub models: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub diff_matrix: Vec<Vec<f64>>,
    pub ordering: Ordering,
    pub config: EvalConfig,
}

/// Scores every discriminator against every generator over one shared
/// validation set. Entries are filled generator-major; each generator's
/// latent batch depends only on `seed` and its own latent width, so the
/// report is equivariant under reordering of the entry list.
pub fn tournament(
    entries: &[TournamentEntry],
    validation: &Tensor,
    n_g: Option<usize>,
    seed: u64,
) -> Result<TournamentReport> {
    if entries.len() < 2 {
        return Err(Error::Contract(format!(
            "a tournament needs at least two models, got {}",
            entries.len()
        )));
    }
    for (i, a) in entries.iter().enumerate() {
        for b in &entries[..i] {
            if a.name == b.name {
                return Err(Error::Contract(format!(
                    "duplicate model name `{}`",
                    a.name
                )));
            }
        }
    }
    let n_v = validation.shape()[0];
    let models: Vec<String> = entries.iter().map(|e| e.name.clone()).collect();
    let mut matrix = Vec::with_capacity(entries.len());
    for g in entries {
        let mut row = Vec::with_capacity(entries.len());
        for d in entries {
            let score = adjusted_loss(&d.discriminator, &g.generator, validation, n_g, seed)?;
            debug_assert!(score >= 0.0, "cross-entropies cannot be negative");
            row.push(score);
        }
        matrix.push(row);
    }
    let config = EvalConfig { n_g: n_g.unwrap_or(n_v), n_v, seed };
    let scores = ScoreMatrix { models: models.clone(), entries: matrix.clone(), config: config.clone() };
    let diff = DiffMatrix::from_scores(&scores)?;
    let ordering = ordering(&diff)?;
    Ok(TournamentReport {
        models,
        matrix,
        diff_matrix: diff.entries,
        ordering,
        config,
    })
}

impl TournamentReport {
    /// Aligned text rendering: one block of adjusted losses (rows are
    /// generators, columns discriminators) and one block of differences.
    pub fn text_tables(&self) -> String {
        let mut out = String::new();
        out.push_str(&render_table(
            "Adjusted losses (rows: generator, columns: discriminator)",
            &self.models,
            &self.matrix,
        ));
        out.push('\n');
        out.push_str(&render_table(
            "Adjusted loss differences (transposed minus itself)",
            &self.models,
            &self.diff_matrix,
        ));
        out.push('\n');
        if self.ordering.cycle {
            out.push_str("Ordering: cyclic pairwise results; no total order.\n");
        } else {
            out.push_str(&format!("Ordering (best first): {}\n", self.ordering.order.join(" > ")));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn render_table(title: &str, models: &[String], cells: &[Vec<f64>]) -> String {
    let name_w = models.iter().map(|m| m.len()).max().unwrap_or(0).max(4);
    let cell_w = models
        .iter()
        .map(|m| m.len())
        .chain(cells.iter().flatten().map(|v| format!("{v:.2}").len()))
        .max()
        .unwrap_or(4);
    let mut out = format!("{title}\n");
    out.push_str(&format!("{:name_w$}", ""));
    for m in models {
        out.push_str(&format!("  {m:>cell_w$}"));
    }
    out.push('\n');
    for (m, row) in models.iter().zip(cells) {
        out.push_str(&format!("{m:<name_w$}"));
        for v in row {
            out.push_str(&format!("  {:>cell_w$}", format!("{v:.2}")));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Distribution metrics for mixture targets
// ---------------------------------------------------------------------------

/// Isotropic Gaussian mixture over the plane with equal component weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub centers: Vec<(f64, f64)>,
    pub sigma: f64,
}

impl GaussianMixture {
    /// The standard ring target: `modes` components evenly spaced on a
    /// circle of the given radius.
    pub fn ring(modes: usize, radius: f64, sigma: f64) -> GaussianMixture {
        GaussianMixture { centers: ring_centers(modes, radius), sigma }
    }
}

/// Per-mode sample counts and the number of covered modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    /// Modes holding at least 1% of the samples within `radius`.
    pub covered: usize,
    /// Samples within `radius` of each center, in center order.
    pub histogram: Vec<usize>,
}

/// Counts samples within `radius` of each center; a mode is covered when
/// it holds at least 1% of all samples. Needs ≥ 100 samples so the 1%
/// threshold is meaningful.
pub fn mode_coverage(
    samples: &Tensor,
    centers: &[(f64, f64)],
    radius: f64,
) -> Result<ModeCoverage> {
    let n = check_planar(samples)?;
    if !(radius > 0.0) {
        return Err(Error::Contract(format!("radius must be positive, got {radius}")));
    }
    let data = samples.data();
    let mut histogram = vec![0usize; centers.len()];
    for row in 0..n {
        let (x, y) = (data[2 * row], data[2 * row + 1]);
        for (m, (cx, cy)) in centers.iter().enumerate() {
            if (x - cx).hypot(y - cy) <= radius {
                histogram[m] += 1;
            }
        }
    }
    // `count/N ≥ 1%` compared in integers: 100·count ≥ N.
    let covered = histogram.iter().filter(|c| 100 * **c >= n).count();
    Ok(ModeCoverage { covered, histogram })
}

/// Histogram extent of [`kl_to_mixture`]: the box `[−3, 3]²`.
pub const KL_BOX: f64 = 3.0;
/// Bins per axis of the KL histogram (40×40 cells over the box).
pub const KL_BINS: usize = 40;
/// Smoothing mass added to every target bin before normalisation, keeping
/// the estimate finite when a sample lands where the target has no mass.
pub const KL_SMOOTHING: f64 = 1e-12;

/// KL divergence from the empirical sample distribution to the mixture,
/// estimated on a fixed 40×40 histogram over `[−3, 3]²`:
///
/// - samples are binned by coordinate, with out-of-box samples clamped
///   into the boundary bins;
/// - the mixture's bin masses are exact rectangle integrals (products of
///   1-D Gaussian CDF differences), smoothed by `KL_SMOOTHING` per bin and
///   renormalised over the box;
/// - the estimate is `Σ P(b) ln(P(b)/Q(b))` over nonempty bins.
pub fn kl_to_mixture(samples: &Tensor, mixture: &GaussianMixture) -> Result<f64> {
    let n = check_planar(samples)?;
    if mixture.centers.is_empty() {
        return Err(Error::Contract("mixture needs at least one component".into()));
    }
    if !(mixture.sigma > 0.0) {
        return Err(Error::Contract(format!(
            "mixture sigma must be positive, got {}",
            mixture.sigma
        )));
    }

    let mut counts = vec![0usize; KL_BINS * KL_BINS];
    let data = samples.data();
    for row in 0..n {
        let bx = bin_index(data[2 * row]);
        let by = bin_index(data[2 * row + 1]);
        counts[by * KL_BINS + bx] += 1;
    }

    // Exact per-axis CDF differences for every component, combined into
    // rectangle masses; equal component weights.
    let edges: Vec<f64> = (0..=KL_BINS)
        .map(|i| -KL_BOX + 2.0 * KL_BOX * i as f64 / KL_BINS as f64)
        .collect();
    let weight = 1.0 / mixture.centers.len() as f64;
    let mut target = vec![KL_SMOOTHING; KL_BINS * KL_BINS];
    for (cx, cy) in &mixture.centers {
        let px: Vec<f64> = (0..KL_BINS)
            .map(|i| interval_mass(edges[i], edges[i + 1], *cx, mixture.sigma))
            .collect();
        let py: Vec<f64> = (0..KL_BINS)
            .map(|i| interval_mass(edges[i], edges[i + 1], *cy, mixture.sigma))
            .collect();
        for by in 0..KL_BINS {
            for bx in 0..KL_BINS {
                target[by * KL_BINS + bx] += weight * px[bx] * py[by];
            }
        }
    }
    let total: f64 = target.iter().sum();

    let mut kl = 0.0;
    for (count, q) in counts.iter().zip(&target) {
        if *count > 0 {
            let p = *count as f64 / n as f64;
            kl += p * (p / (q / total)).ln();
        }
    }
    Ok(kl)
}

fn check_planar(samples: &Tensor) -> Result<usize> {
    if samples.shape().len() != 2 || samples.shape()[1] != 2 {
        return Err(Error::Contract(format!(
            "expected [N, 2] planar samples, got shape {:?}",
            samples.shape()
        )));
    }
    let n = samples.shape()[0];
    if n < 100 {
        return Err(Error::Contract(format!(
            "distribution metrics need at least 100 samples, got {n}"
        )));
    }
    Ok(n)
}

fn bin_index(x: f64) -> usize {
    let scaled = (x + KL_BOX) / (2.0 * KL_BOX) * KL_BINS as f64;
    (scaled.floor().max(0.0) as usize).min(KL_BINS - 1)
}

/// Mass a 1-D Gaussian `N(c, s²)` assigns to `[lo, hi]`.
fn interval_mass(lo: f64, hi: f64, c: f64, s: f64) -> f64 {
    0.5 * (libm::erf((hi - c) / (s * std::f64::consts::SQRT_2))
        - libm::erf((lo - c) / (s * std::f64::consts::SQRT_2)))
}
