//! Nominal selection rules the robust model is compared against.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dro::{binomial, update_z, ENUMERATION_LIMIT};
use crate::error::{invalid, Error, Result};

/// Indicator of the `n` best predicted items, ties to the lower index.
pub fn top_n_select(mu: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    update_z(mu, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MvStrategy {
    Exhaustive,
    LocalSearch,
    /// Exhaustive when the subset count is within the enumeration limit.
    #[default]
    Auto,
}

/// Local search stops after this many passes even if a swap still improves.
pub const MAX_SWEEPS: usize = 500;

/// `(1 - alpha) mu'z - alpha z'Sz`
pub fn mv_objective(mu: &DVector<f64>, sigma: &DMatrix<f64>, alpha: f64, z: &DVector<f64>) -> f64 {
    (1.0 - alpha) * mu.dot(z) - alpha * (z.transpose() * sigma * z)[0]
}

pub fn mean_variance_select(mu: &DVector<f64>, sigma: &DMatrix<f64>, alpha: f64, n: usize, strategy: MvStrategy) -> Result<DVector<f64>> {
    let m = mu.len();
    if sigma.shape() != (m, m) {
        return Err(Error::ShapeMismatch(format!("mean of length {m}, covariance {:?}", sigma.shape())));
    }
    if n > m {
        return Err(invalid(format!("list size {n} exceeds {m} items")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("risk weight {alpha} outside [0, 1]")));
    }
    let small = binomial(m, n) <= ENUMERATION_LIMIT;
    match strategy {
        MvStrategy::Exhaustive if !small => Err(Error::GuardExceeded {
            n: m,
            k: n,
            limit: ENUMERATION_LIMIT,
        }),
        MvStrategy::Exhaustive => Ok(exhaustive(mu, sigma, alpha, n)),
        MvStrategy::Auto if small => Ok(exhaustive(mu, sigma, alpha, n)),
        _ => local_search(mu, sigma, alpha, n),
    }
}

fn exhaustive(mu: &DVector<f64>, sigma: &DMatrix<f64>, alpha: f64, n: usize) -> DVector<f64> {
    let m = mu.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in (0..m).combinations(n) {
        let mean: f64 = subset.iter().map(|&i| mu[i]).sum();
        let var: f64 = subset.iter().cartesian_product(&subset).map(|(&i, &j)| sigma[(i, j)]).sum();
        let v = (1.0 - alpha) * mean - alpha * var;
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, subset));
        }
    }
    let mut z = DVector::zeros(m);
    for i in best.map(|b| b.1).unwrap_or_default() {
        z[i] = 1.0;
    }
    z
}

/// First-improvement single swaps from the top-N list.
fn local_search(mu: &DVector<f64>, sigma: &DMatrix<f64>, alpha: f64, n: usize) -> Result<DVector<f64>> {
    let mut z = top_n_select(mu, n)?;
    // row sums of sigma over the current list
    let mut load = sigma * &z;
    for _ in 0..MAX_SWEEPS {
        let mut improved = false;
        for out in 0..z.len() {
            if z[out] != 1.0 {
                continue;
            }
            for inn in 0..z.len() {
                if z[inn] != 0.0 {
                    continue;
                }
                let d_mean = mu[inn] - mu[out];
                let d_var = 2.0 * (load[inn] - load[out]) + sigma[(inn, inn)] + sigma[(out, out)] - 2.0 * sigma[(inn, out)];
                if (1.0 - alpha) * d_mean - alpha * d_var > 1e-12 {
                    z[out] = 0.0;
                    z[inn] = 1.0;
                    load += sigma.column(inn) - sigma.column(out);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(z)
}
