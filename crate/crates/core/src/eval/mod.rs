//! Accuracy and diversity metrics and the repeated-run experiment loop.

mod config;
mod harness;
mod report;

use std::collections::BTreeSet;

use crate::data::Rating;
use crate::error::{invalid, Result};

pub use config::{DatasetConfig, DroMethod, ExperimentConfig, Methods, MvMethod};
pub use harness::{prepare_users, rank_selection, run_experiment, MethodPoint, UserInput};
pub use report::{evaluate_selections, read_selections, Report, ReportRow, RunRow, SelectionRow};

/// Test items rated at least `threshold`.
pub fn relevant_items(test: &[Rating], threshold: f64) -> BTreeSet<usize> {
    test.iter().filter(|r| r.value >= threshold).map(|r| r.item).collect()
}

/// `2 |rec & rel| / (|rec| + |rel|)`, zero when nothing is relevant.
pub fn f1_score(recommended: &BTreeSet<usize>, relevant: &BTreeSet<usize>) -> Result<f64> {
    if recommended.is_empty() {
        return Err(invalid("empty recommendation list"));
    }
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let hits = recommended.intersection(relevant).count();
    Ok(2.0 * hits as f64 / (recommended.len() + relevant.len()) as f64)
}

/// One minus the Gini coefficient of recommendation counts over an item
/// universe, via the sorted form `sum (2i - m - 1) c_(i) / (m sum c)`.
pub fn gini_diversity(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(invalid("no recommendations to measure"));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let m = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &c)| (2.0 * (i + 1) as f64 - m - 1.0) * c as f64)
        .sum();
    Ok(1.0 - weighted / (m * total as f64))
}
