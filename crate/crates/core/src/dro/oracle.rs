use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use super::UserProblem;
use crate::conic::{solve, ConicProblem, SolveStatus, SolverSettings, XBlock};
use crate::error::{invalid, Error, Result};

/// Largest number of subsets [`brute_force_select`] will enumerate.
pub const ENUMERATION_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

/// Robust value of the list `z`: the dual with `x` pinned to `z`, no penalty
/// and no regularization. Items outside the list do not enter the expected
/// sum, and the moment constraints restricted to the list's coordinates are
/// exactly those of its marginal, so the dual is solved on the support only.
pub fn worst_case_value(z: &DVector<f64>, prob: &UserProblem) -> Result<WorstCase> {
    let n = prob.dim();
    if z.len() != n {
        return Err(Error::ShapeMismatch(format!("list of length {} for {n} candidates", z.len())));
    }
    if z.iter().any(|&v| v != 0.0 && v != 1.0) || z.sum() != prob.n_select as f64 {
        return Err(invalid(format!("list must be binary with {} ones", prob.n_select)));
    }
    let support: Vec<usize> = (0..n).filter(|&i| z[i] == 1.0).collect();
    let k = support.len();
    let mu = DVector::from_iterator(k, support.iter().map(|&i| prob.mu[i]));
    let sigma = DMatrix::from_fn(k, k, |a, b| prob.sigma[(support[a], support[b])]);
    let mut sub = ConicProblem::new(mu, sigma, prob.kappa1, prob.kappa2, DVector::zeros(k), 0.0);
    sub.x_block = XBlock::Fixed(DVector::from_element(k, 1.0));
    let sol = solve(&sub, &SolverSettings::default(), None)?;
    Ok(WorstCase {
        value: sol.objective,
        status: sol.status,
        iterations: sol.iterations,
    })
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k) as u128;
    let mut c: u128 = 1;
    for j in 0..k {
        c = c * (n as u128 - j) / (j + 1);
        if c > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    c as u64
}

/// Best list by enumeration of every subset of size `N`; ties go to the
/// lexicographically first subset.
pub fn brute_force_select(prob: &UserProblem) -> Result<(DVector<f64>, f64)> {
    prob.validate()?;
    let (n, k) = (prob.dim(), prob.n_select);
    if binomial(n, k) > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            n,
            k,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    for subset in (0..n).combinations(k) {
        let mut z = DVector::zeros(n);
        for i in subset {
            z[i] = 1.0;
        }
        let v = worst_case_value(&z, prob)?.value;
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((z, v));
        }
    }
    Ok(best.expect("at least one subset"))
}
