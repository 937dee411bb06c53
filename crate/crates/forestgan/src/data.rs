//! Deterministic synthetic datasets for the experiments.
//!
//! Four families: the binary parity truth table, a ring of 2-D Gaussians,
//! the interleaved two-moons shape, and a multi-class spiral.  Generation is
//! a pure function of a [`DatasetSpec`] — a stream-cipher generator keyed by
//! the seed drives every draw, and the train/validation split is positional
//! over independently drawn rows, so the two sides are disjoint for the
//! continuous families.
//!
//! The parity task is exhaustive: its "dataset" is the full truth table
//! (2^dim corners), and validation coincides with training by construction,
//! because parity on unseen corners would be arbitrary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn default_modes() -> usize {
    8
}

fn default_radius() -> f64 {
    2.0
}

fn default_sigma() -> f64 {
    0.05
}

fn default_noise() -> f64 {
    0.05
}

fn default_split() -> f64 {
    0.9
}

/// The sample distribution a [`DatasetSpec`] draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    /// All `2^dim` binary corners labelled by parity.
    Xor { dim: usize },
    /// Mixture of `modes` isotropic Gaussians with centres equally spaced
    /// on a circle.
    GaussianRing {
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// Two interleaved half-circles with additive Gaussian noise.
    TwoMoons {
        #[serde(default = "default_noise")]
        noise: f64,
    },
    /// `classes` interleaved spiral arms with additive Gaussian noise.
    SpiralMulticlass {
        classes: usize,
        #[serde(default = "default_noise")]
        noise: f64,
    },
}

/// Recipe for a reproducible dataset draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub kind: DatasetKind,
    /// Total rows drawn before splitting; ignored by the exhaustive parity
    /// table.
    pub n_samples: usize,
    /// Train fraction, strictly inside (0, 1).
    #[serde(default = "default_split")]
    pub split: f64,
    pub seed: u64,
}

/// One side of a split: features `[n, d]` plus labels where the family
/// defines them.
#[derive(Debug, Clone)]
pub struct Split {
    pub features: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A generated dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
    pub input_width: usize,
    /// Number of label classes, when the family is labelled.
    pub classes: Option<usize>,
}

/// Centres of the ring mixture, counter-clockwise from the positive x-axis.
pub fn ring_centers(modes: usize, radius: f64) -> Vec<(f64, f64)> {
    (0..modes)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / modes as f64;
            (radius * angle.cos(), radius * angle.sin())
        })
        .collect()
}

/// The full parity truth table for `dim` bits, rows ordered by the integer
/// encoding of the corner, with labels `popcount mod 2`.
pub fn parity_table(dim: usize) -> Result<(Tensor, Vec<usize>)> {
    if dim < 2 {
        return Err(Error::Contract(format!("parity needs dim ≥ 2, got {dim}")));
    }
    if dim > 20 {
        return Err(Error::Contract(format!(
            "parity table for dim {dim} would hold 2^{dim} rows; cap is 20"
        )));
    }
    let rows = 1usize << dim;
    let mut features = Vec::with_capacity(rows * dim);
    let mut labels = Vec::with_capacity(rows);
    for code in 0..rows {
        for bit in 0..dim {
            features.push(((code >> bit) & 1) as f64);
        }
        labels.push((code.count_ones() % 2) as usize);
    }
    Ok((Tensor::new(vec![rows, dim], features)?, labels))
}

impl DatasetSpec {
    fn validate(&self) -> Result<()> {
        match &self.kind {
            DatasetKind::Xor { dim } => {
                if *dim < 2 {
                    return Err(Error::Contract(format!("parity needs dim ≥ 2, got {dim}")));
                }
                return Ok(()); // exhaustive: n_samples and split are unused
            }
            DatasetKind::GaussianRing { modes, radius, sigma } => {
                if *modes == 0 {
                    return Err(Error::Contract("ring needs at least one mode".into()));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Contract(format!("ring radius must be positive, got {radius}")));
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Contract(format!("ring sigma must be positive, got {sigma}")));
                }
            }
            DatasetKind::TwoMoons { noise } => {
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(Error::Contract(format!("moons noise must be non-negative, got {noise}")));
                }
            }
            DatasetKind::SpiralMulticlass { classes, noise } => {
                if *classes < 2 {
                    return Err(Error::Contract(format!("spiral needs ≥ 2 classes, got {classes}")));
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(Error::Contract(format!("spiral noise must be non-negative, got {noise}")));
                }
            }
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Contract(format!(
                "split must lie strictly inside (0, 1), got {}",
                self.split
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::Contract(format!(
                "sampled datasets need n_samples ≥ 2, got {}",
                self.n_samples
            )));
        }
        let train = self.train_rows();
        if train == 0 || train >= self.n_samples {
            return Err(Error::Contract(format!(
                "split {} leaves an empty side for {} samples",
                self.split, self.n_samples
            )));
        }
        Ok(())
    }

    fn train_rows(&self) -> usize {
        ((self.n_samples as f64 * self.split).round() as usize).clamp(1, self.n_samples - 1)
    }
}

/// Draws the dataset described by `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.kind {
        DatasetKind::Xor { dim } => {
            let (features, labels) = parity_table(*dim)?;
            let train = Split { features: features.clone(), labels: Some(labels.clone()) };
            let val = Split { features, labels: Some(labels) };
            Ok(Dataset { train, val, input_width: *dim, classes: Some(2) })
        }
        DatasetKind::GaussianRing { modes, radius, sigma } => {
            let centers = ring_centers(*modes, *radius);
            let jitter = Normal::new(0.0, *sigma).expect("validated sigma");
            let rows: Vec<[f64; 2]> = (0..spec.n_samples)
                .map(|_| {
                    let (cx, cy) = centers[rng.random_range(0..centers.len())];
                    [cx + jitter.sample(&mut rng), cy + jitter.sample(&mut rng)]
                })
                .collect();
            split_unlabelled(spec, rows)
        }
        DatasetKind::TwoMoons { noise } => {
            let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("validated noise");
            let mut rows = Vec::with_capacity(spec.n_samples);
            let mut labels = Vec::with_capacity(spec.n_samples);
            for _ in 0..spec.n_samples {
                let upper = rng.random::<bool>();
                let t = PI * rng.random::<f64>();
                let (mut x, mut y) = if upper {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                if *noise > 0.0 {
                    x += jitter.sample(&mut rng);
                    y += jitter.sample(&mut rng);
                }
                rows.push([x, y]);
                labels.push(usize::from(!upper));
            }
            split_labelled(spec, rows, labels, 2)
        }
        DatasetKind::SpiralMulticlass { classes, noise } => {
            let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("validated noise");
            let mut rows = Vec::with_capacity(spec.n_samples);
            let mut labels = Vec::with_capacity(spec.n_samples);
            for _ in 0..spec.n_samples {
                let class = rng.random_range(0..*classes);
                let t = rng.random::<f64>();
                // Arm `class` sweeps 1.5 turns as the radius grows.
                let angle = 2.0 * PI * class as f64 / *classes as f64 + 3.0 * PI * t;
                let r = 0.2 + 1.8 * t;
                let (mut x, mut y) = (r * angle.cos(), r * angle.sin());
                if *noise > 0.0 {
                    x += jitter.sample(&mut rng);
                    y += jitter.sample(&mut rng);
                }
                rows.push([x, y]);
                labels.push(class);
            }
            split_labelled(spec, rows, labels, *classes)
        }
    }
}

fn tensor_from_rows(rows: &[[f64; 2]]) -> Result<Tensor> {
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Tensor::new(vec![rows.len(), 2], data)
}

fn split_unlabelled(spec: &DatasetSpec, rows: Vec<[f64; 2]>) -> Result<Dataset> {
    let cut = spec.train_rows();
    Ok(Dataset {
        train: Split { features: tensor_from_rows(&rows[..cut])?, labels: None },
        val: Split { features: tensor_from_rows(&rows[cut..])?, labels: None },
        input_width: 2,
        classes: None,
    })
}

fn split_labelled(
    spec: &DatasetSpec,
    rows: Vec<[f64; 2]>,
    labels: Vec<usize>,
    classes: usize,
) -> Result<Dataset> {
    let cut = spec.train_rows();
    Ok(Dataset {
        train: Split {
            features: tensor_from_rows(&rows[..cut])?,
            labels: Some(labels[..cut].to_vec()),
        },
        val: Split {
            features: tensor_from_rows(&rows[cut..])?,
            labels: Some(labels[cut..].to_vec()),
        },
        input_width: 2,
        classes: Some(classes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ring_spec(seed: u64) -> DatasetSpec {
        DatasetSpec {
            kind: DatasetKind::GaussianRing { modes: 8, radius: 2.0, sigma: 0.05 },
            n_samples: 1000,
            split: 0.9,
            seed,
        }
    }

    #[test]
    fn parity_table_enumerates_every_corner_once() {
        let (features, labels) = parity_table(3).unwrap();
        assert_eq!(features.shape(), &[8, 3]);
        let mut seen = HashSet::new();
        for i in 0..8 {
            let row = features.row(i);
            assert!(row.iter().all(|v| *v == 0.0 || *v == 1.0));
            let code = row
                .iter()
                .enumerate()
                .map(|(b, v)| (*v as usize) << b)
                .sum::<usize>();
            seen.insert(code);
            let ones = row.iter().filter(|v| **v == 1.0).count();
            assert_eq!(labels[i], ones % 2, "row {i}");
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn two_dimensional_parity_is_the_xor_truth_table() {
        let (_, labels) = parity_table(2).unwrap();
        assert_eq!(labels, vec![0, 1, 1, 0]);
    }

    #[test]
    fn parity_dataset_is_exhaustive_on_both_sides() {
        let spec = DatasetSpec {
            kind: DatasetKind::Xor { dim: 4 },
            n_samples: 0,
            split: 0.9,
            seed: 1,
        };
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.train.len(), 16);
        assert_eq!(ds.val.len(), 16);
        assert_eq!(ds.train.features.data(), ds.val.features.data());
        assert_eq!(ds.classes, Some(2));
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let a = generate(&ring_spec(5)).unwrap();
        let b = generate(&ring_spec(5)).unwrap();
        let c = generate(&ring_spec(6)).unwrap();
        assert_eq!(a.train.features.data(), b.train.features.data());
        assert_eq!(a.val.features.data(), b.val.features.data());
        assert_ne!(a.train.features.data(), c.train.features.data());
    }

    #[test]
    fn nine_to_one_split_sizes_and_disjointness() {
        let ds = generate(&ring_spec(7)).unwrap();
        assert_eq!(ds.train.len(), 900);
        assert_eq!(ds.val.len(), 100);
        let key = |row: &[f64]| -> (u64, u64) { (row[0].to_bits(), row[1].to_bits()) };
        let train: HashSet<_> = (0..ds.train.len()).map(|i| key(ds.train.features.row(i))).collect();
        for i in 0..ds.val.len() {
            assert!(
                !train.contains(&key(ds.val.features.row(i))),
                "validation row {i} duplicates a training row"
            );
        }
    }

    #[test]
    fn ring_samples_cluster_around_the_mode_centres() {
        let ds = generate(&ring_spec(11)).unwrap();
        let centers = ring_centers(8, 2.0);
        let mut hit = vec![false; 8];
        for i in 0..ds.train.len() {
            let row = ds.train.features.row(i);
            let (best, dist) = centers
                .iter()
                .enumerate()
                .map(|(k, (cx, cy))| {
                    (k, ((row[0] - cx).powi(2) + (row[1] - cy).powi(2)).sqrt())
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(dist < 6.0 * 0.05, "row {i} sits {dist} from its centre");
            hit[best] = true;
        }
        assert!(hit.into_iter().all(|h| h), "1000 draws should touch all 8 modes");
    }

    #[test]
    fn ring_centers_sit_on_the_circle_equally_spaced() {
        let centers = ring_centers(8, 2.0);
        assert_eq!(centers[0], (2.0, 0.0));
        for (x, y) in &centers {
            assert!(((x * x + y * y).sqrt() - 2.0).abs() < 1e-12);
        }
        let unique: HashSet<_> = centers.iter().map(|(x, y)| (x.to_bits(), y.to_bits())).collect();
        assert_eq!(unique.len(), 8);
    }

    #[test]
    fn moons_are_labelled_and_roughly_balanced() {
        let spec = DatasetSpec {
            kind: DatasetKind::TwoMoons { noise: 0.05 },
            n_samples: 400,
            split: 0.9,
            seed: 13,
        };
        let ds = generate(&spec).unwrap();
        let labels = ds.train.labels.as_ref().unwrap();
        let ones = labels.iter().filter(|l| **l == 1).count();
        assert!(ones > 100 && ones < 260, "unbalanced moons: {ones}/360");
        assert!(ds.train.features.data().iter().all(|v| v.is_finite()));
        assert_eq!(ds.classes, Some(2));
    }

    #[test]
    fn spiral_uses_every_class_with_labels_in_range() {
        let spec = DatasetSpec {
            kind: DatasetKind::SpiralMulticlass { classes: 3, noise: 0.05 },
            n_samples: 600,
            split: 0.9,
            seed: 3,
        };
        let ds = generate(&spec).unwrap();
        let labels = ds.train.labels.as_ref().unwrap();
        let mut seen = vec![0usize; 3];
        for l in labels {
            assert!(*l < 3);
            seen[*l] += 1;
        }
        assert!(seen.iter().all(|c| *c > 100), "class counts {seen:?}");
        assert_eq!(ds.classes, Some(3));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad_split = DatasetSpec { split: 1.0, ..ring_spec(0) };
        assert!(generate(&bad_split).is_err());
        let tiny = DatasetSpec { n_samples: 1, ..ring_spec(0) };
        assert!(generate(&tiny).is_err());
        let no_modes = DatasetSpec {
            kind: DatasetKind::GaussianRing { modes: 0, radius: 2.0, sigma: 0.05 },
            ..ring_spec(0)
        };
        assert!(generate(&no_modes).is_err());
        let flat_dim = DatasetSpec { kind: DatasetKind::Xor { dim: 1 }, ..ring_spec(0) };
        assert!(generate(&flat_dim).is_err());
        let one_class = DatasetSpec {
            kind: DatasetKind::SpiralMulticlass { classes: 1, noise: 0.05 },
            ..ring_spec(0)
        };
        assert!(generate(&one_class).is_err());
    }

    #[test]
    fn spec_json_round_trips_with_defaults() {
        let json = r#"{"kind":"gaussian_ring","n_samples":100,"seed":4}"#;
        let spec: DatasetSpec = serde_json::from_str(json).unwrap();
        match spec.kind {
            DatasetKind::GaussianRing { modes, radius, sigma } => {
                assert_eq!(modes, 8);
                assert_eq!(radius, 2.0);
                assert_eq!(sigma, 0.05);
            }
            other => panic!("unexpected kind {other:?}"),
        }
        assert_eq!(spec.split, 0.9);
        let text = serde_json::to_string(&spec).unwrap();
        let back: DatasetSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
