//! Small views over training records shared by the commands: series
//! extraction for plots and JSON-safe scalar rendering for summaries.

use forestgan::train::Record;
use serde_json::Value;

/// `(step, d_loss)` for every record.
pub fn loss_series(records: &[Record]) -> Vec<(f64, f64)> {
    records.iter().map(|r| (r.step as f64, r.d_loss)).collect()
}

/// `(step, g_loss)` where present.
pub fn gen_loss_series(records: &[Record]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| r.g_loss.map(|g| (r.step as f64, g)))
        .collect()
}

/// `(step, cond)` at probe steps.
pub fn cond_series(records: &[Record]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| r.cond.map(|c| (r.step as f64, c)))
        .collect()
}

/// Last recorded condition probe, as `(cond, rank)`.
pub fn last_cond(records: &[Record]) -> Option<(f64, usize)> {
    records
        .iter()
        .rev()
        .find_map(|r| match (r.cond, r.rank) {
            (Some(c), Some(k)) => Some((c, k)),
            _ => None,
        })
}

/// Last validation loss, where the run logged one.
pub fn last_val_loss(records: &[Record]) -> Option<f64> {
    records.iter().rev().find_map(|r| r.val_loss)
}

/// JSON cannot hold non-finite numbers, so `inf`/`nan` become strings;
/// everything else stays a number.
pub fn json_f64(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v.is_nan() {
        Value::from("nan")
    } else if v > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

/// `json_f64` lifted over missing values.
pub fn json_opt(v: Option<f64>) -> Value {
    v.map(json_f64).unwrap_or(Value::Null)
}
