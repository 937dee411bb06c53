//! The published cross-evaluation tables ship as a fixture; recomputing
//! the difference table from the adjusted losses must reproduce the
//! published entries (modulo two annotated one-cent misprints), stay
//! exactly antisymmetric, and yield the published model ordering.

use std::collections::HashMap;
use std::fs;

use serde::Deserialize;

use forestgan::eval::{difference_matrix, ordering, DiffMatrix};

#[derive(Deserialize)]
struct Fixture {
    models: Vec<String>,
    datasets: HashMap<String, DatasetTables>,
}

#[derive(Deserialize)]
struct DatasetTables {
    adjusted_losses: Vec<Vec<f64>>,
    published_differences: Vec<Vec<f64>>,
    published_order: Vec<String>,
    misprints: Vec<Misprint>,
}

#[derive(Deserialize)]
struct Misprint {
    row: usize,
    col: usize,
    published: f64,
    computed: f64,
}

const TOL: f64 = 1e-12;

fn load() -> Fixture {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/cross_eval_tables.json"
    );
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// The published difference a cell should carry once annotated misprints
/// are corrected to the underlying arithmetic.
fn expected_cell(tables: &DatasetTables, i: usize, j: usize) -> f64 {
    for m in &tables.misprints {
        if (m.row, m.col) == (i, j) {
            return m.computed;
        }
        // The mirrored cell of a misprint carries the negated correction.
        if (m.row, m.col) == (j, i) {
            return -m.computed;
        }
    }
    tables.published_differences[i][j]
}

#[test]
fn difference_tables_reproduce_the_published_numbers() {
    let fixture = load();
    for (name, tables) in &fixture.datasets {
        let computed = difference_matrix(&tables.adjusted_losses).unwrap();
        for i in 0..fixture.models.len() {
            for j in 0..fixture.models.len() {
                let want = expected_cell(tables, i, j);
                assert!(
                    (computed[i][j] - want).abs() <= TOL,
                    "{name} ({i}, {j}): computed {} vs published {want}",
                    computed[i][j]
                );
            }
        }
    }
}

#[test]
fn named_example_entries_match() {
    let fixture = load();
    let oxford = &fixture.datasets["oxford_flowers"];
    let computed = difference_matrix(&oxford.adjusted_losses).unwrap();
    // DCGAN row against the ABC-GAN column, and shallow against deep.
    assert!((computed[0][1] - 0.08).abs() <= TOL);
    assert!((computed[2][3] - (-0.03)).abs() <= TOL);
}

#[test]
fn computed_differences_are_exactly_antisymmetric() {
    let fixture = load();
    for tables in fixture.datasets.values() {
        let computed = difference_matrix(&tables.adjusted_losses).unwrap();
        for i in 0..computed.len() {
            assert_eq!(computed[i][i], 0.0);
            for j in 0..computed.len() {
                // IEEE subtraction negates exactly under operand swap.
                assert_eq!(computed[i][j] + computed[j][i], 0.0, "({i}, {j})");
            }
        }
    }
}

#[test]
fn annotated_misprints_are_exactly_one_cent_off() {
    let fixture = load();
    let celeba = &fixture.datasets["celeba"];
    assert_eq!(celeba.misprints.len(), 2);
    let computed = difference_matrix(&celeba.adjusted_losses).unwrap();
    for m in &celeba.misprints {
        assert!((computed[m.row][m.col] - m.computed).abs() <= TOL);
        assert!(
            (m.published - m.computed - 0.01).abs() <= TOL,
            "published {} vs arithmetic {}",
            m.published,
            m.computed
        );
    }
    // Every unannotated cell agrees with the published table as-is.
    for i in 0..4 {
        for j in 0..4 {
            let annotated = celeba
                .misprints
                .iter()
                .any(|m| (m.row, m.col) == (i, j) || (m.row, m.col) == (j, i));
            if !annotated {
                assert!((computed[i][j] - celeba.published_differences[i][j]).abs() <= TOL);
            }
        }
    }
}

#[test]
fn published_orderings_follow_from_the_difference_tables() {
    let fixture = load();
    for (name, tables) in &fixture.datasets {
        let diff = DiffMatrix {
            models: fixture.models.clone(),
            entries: difference_matrix(&tables.adjusted_losses).unwrap(),
        };
        let order = ordering(&diff).unwrap();
        assert!(!order.cycle, "{name} should produce a clean ordering");
        assert_eq!(order.order, tables.published_order, "{name}");
    }
}
