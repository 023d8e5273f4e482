//! Pairwise rating covariances and per-user shrinkage estimates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::RatingDataset;
use crate::error::{invalid, Result};
pub use crate::linalg::psd_repair;

/// Sparse symmetric covariance table. Each item keeps its ratings sorted by
/// user; an entry is computed on lookup from the users who rated both items,
/// centring each side on its mean over those co-raters only.
#[derive(Debug, Clone)]
pub struct CovarianceTable {
    columns: Vec<Vec<(usize, f64)>>,
}

impl CovarianceTable {
    pub fn n_items(&self) -> usize {
        self.columns.len()
    }

    /// `(sigma_ij, n_ij)`; `(0, 0)` when nobody rated both.
    pub fn get(&self, i: usize, j: usize) -> (f64, usize) {
        let (a, b) = match (self.columns.get(i), self.columns.get(j)) {
            (Some(a), Some(b)) => (a, b),
            _ => return (0.0, 0),
        };
        let mut pairs = Vec::new();
        let (mut x, mut y) = (0, 0);
        while x < a.len() && y < b.len() {
            match a[x].0.cmp(&b[y].0) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    pairs.push((a[x].1, b[y].1));
                    x += 1;
                    y += 1;
                }
            }
        }
        if pairs.is_empty() {
            return (0.0, 0);
        }
        let n = pairs.len() as f64;
        let mi = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mj = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let s = pairs.iter().map(|p| (p.0 - mi) * (p.1 - mj)).sum::<f64>() / n;
        (s, pairs.len())
    }

    /// Dense `S_u` over the given items.
    pub fn submatrix(&self, items: &[usize]) -> DMatrix<f64> {
        let n = items.len();
        let mut s = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = self.get(items[a], items[b]).0;
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
        s
    }
}

pub fn pairwise_covariance(train: &RatingDataset) -> Result<CovarianceTable> {
    if train.is_empty() {
        return Err(invalid("empty training set"));
    }
    let mut columns = vec![Vec::new(); train.n_items()];
    // ratings are sorted by user, so every column comes out user-sorted
    for r in train.ratings() {
        columns[r.item].push((r.user, r.value));
    }
    Ok(CovarianceTable { columns })
}

/// Constant-correlation target: keeps the variances and sets every
/// correlation to the average off-diagonal correlation of `s`.
pub fn shrinkage_target(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let sd: Vec<f64> = (0..n).map(|i| s[(i, i)].max(0.0).sqrt()).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if sd[i] > 0.0 && sd[j] > 0.0 {
                total += s[(i, j)] / (sd[i] * sd[j]);
            }
        }
    }
    let pairs = n * n.saturating_sub(1) / 2;
    let rho = if pairs > 0 { total / pairs as f64 } else { 0.0 };
    DMatrix::from_fn(n, n, |i, j| if i == j { s[(i, i)] } else { rho * sd[i] * sd[j] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShrinkageConfig {
    /// Weight on the sample matrix; the target gets `1 - weight`.
    pub weight: f64,
    /// Eigenvalue floor of the repaired matrix.
    pub floor: f64,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        ShrinkageConfig { weight: 0.25, floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserCovariance {
    pub matrix: DMatrix<f64>,
    /// Largest eigenvalue lift applied by the repair.
    pub jitter: f64,
}

pub fn user_covariance(table: &CovarianceTable, candidates: &[usize], cfg: &ShrinkageConfig) -> Result<UserCovariance> {
    if candidates.is_empty() {
        return Err(invalid("empty candidate list"));
    }
    if !(0.0..=1.0).contains(&cfg.weight) {
        return Err(invalid(format!("shrinkage weight {} outside [0, 1]", cfg.weight)));
    }
    let s = table.submatrix(candidates);
    let f = shrinkage_target(&s);
    let (matrix, jitter) = psd_repair(&(s * cfg.weight + f * (1.0 - cfg.weight)), cfg.floor)?;
    Ok(UserCovariance { matrix, jitter })
}
