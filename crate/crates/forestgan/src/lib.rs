//! Differentiable soft decision forests as discriminator and classifier
//! heads, together with the machinery to train them adversarially and to
//! diagnose how well-conditioned the resulting models are.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors and a tape-based reverse-mode autodiff graph;
//! - [`linalg`]: one-sided Jacobi SVD and condition numbers;
//! - [`forest`]: soft (differentiable) and hard (axis-aligned) decision
//!   forests, and the blend kernels that route instances to leaves;
//! - [`network`]: model assembly — a feature body feeding a forest head;
//! - [`data`]: synthetic dataset generators with deterministic splits;
//! - [`train`]: adversarial and supervised training loops, Adam, and the
//!   conditioning probe schedule;
//! - [`eval`]: cross-evaluation tournaments, score/difference matrices, and
//!   sample-quality measures for mixture targets.
//!
//! All randomness flows through explicitly seeded ChaCha generators, so
//! every run is reproducible from its config alone.

pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod linalg;
pub mod network;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
