//! Per-user robust selection: the dual problem, the penalty alternating
//! direction loop and enumeration oracles.

mod oracle;
mod padm;
mod trace;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{ConicProblem, DualIterate, XBlock};
use crate::error::{invalid, Error, Result};

pub(crate) use oracle::binomial;
pub use oracle::{brute_force_select, worst_case_value, WorstCase, ENUMERATION_LIMIT};
pub use padm::{padm_solve, PadmOutcome, PadmSettings, PadmStatus};
pub use trace::{write_selections, PadmTrace, TraceRow};

/// Which matrix terms bound the dual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Formulation {
    Frobenius {
        lambda_p: f64,
        lambda_q: f64,
    },
    /// Trace caps; `None` means `|I(u)|`.
    Trace {
        tau_p: Option<f64>,
        tau_q: Option<f64>,
    },
    Plain,
}

impl Default for Formulation {
    fn default() -> Self {
        Formulation::Frobenius {
            lambda_p: 10.0,
            lambda_q: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    FirstN,
    TopkSpread,
}

/// One user's selection instance over their candidate items.
#[derive(Debug, Clone)]
pub struct UserProblem {
    pub candidates: Vec<usize>,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n_select: usize,
    pub kappa1: f64,
    pub kappa2: f64,
    pub formulation: Formulation,
}

impl UserProblem {
    pub fn new(
        candidates: Vec<usize>,
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        n_select: usize,
        kappa: (f64, f64),
        formulation: Formulation,
    ) -> Result<Self> {
        let p = UserProblem {
            candidates,
            mu,
            sigma,
            n_select,
            kappa1: kappa.0,
            kappa2: kappa.1,
            formulation,
        };
        p.validate()?;
        Ok(p)
    }

    /// Candidates are labelled `0..n`.
    pub fn anonymous(mu: DVector<f64>, sigma: DMatrix<f64>, n_select: usize, kappa: (f64, f64), formulation: Formulation) -> Result<Self> {
        Self::new((0..mu.len()).collect(), mu, sigma, n_select, kappa, formulation)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.candidates.len() != n || self.sigma.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "{} candidates, mean of length {n}, covariance {:?}",
                self.candidates.len(),
                self.sigma.shape()
            )));
        }
        if self.n_select == 0 || self.n_select > n {
            return Err(invalid(format!("list size {} must lie in 1..={n}", self.n_select)));
        }
        if !(self.kappa1 >= 0.0 && self.kappa2 >= 0.0 && self.kappa1.is_finite() && self.kappa2.is_finite()) {
            return Err(invalid(format!(
                "radii ({}, {}) must be finite and nonnegative",
                self.kappa1, self.kappa2
            )));
        }
        match self.formulation {
            Formulation::Plain => {}
            Formulation::Frobenius { lambda_p, lambda_q } => {
                if !(lambda_p >= 0.0 && lambda_q >= 0.0) {
                    return Err(invalid("regularization weights must be nonnegative"));
                }
                if self.kappa1 <= 0.0 {
                    return Err(invalid("kappa1 must be positive for the regularized formulation"));
                }
            }
            Formulation::Trace { tau_p, tau_q } => {
                let bad = |t: f64| t.is_nan() || t < 0.0;
                if tau_p.is_some_and(bad) || tau_q.is_some_and(bad) {
                    return Err(invalid("trace caps must be nonnegative"));
                }
                if self.kappa1 <= 0.0 {
                    return Err(invalid("kappa1 must be positive for the trace formulation"));
                }
            }
        }
        Ok(())
    }

    /// The continuous subproblem with the given `x` block.
    pub fn conic(&self, x_block: XBlock) -> ConicProblem {
        let mut c = ConicProblem::new(
            self.mu.clone(),
            self.sigma.clone(),
            self.kappa1,
            self.kappa2,
            DVector::zeros(0),
            0.0,
        );
        c.x_block = x_block;
        match self.formulation {
            Formulation::Plain => {}
            Formulation::Frobenius { lambda_p, lambda_q } => {
                c.reg_p = lambda_p;
                c.reg_q = lambda_q;
            }
            Formulation::Trace { tau_p, tau_q } => {
                let n = self.dim() as f64;
                c.trace_p = Some(tau_p.unwrap_or(n));
                c.trace_q = Some(tau_q.unwrap_or(n));
            }
        }
        c
    }

    fn check_shape(&self, x: &DualIterate) -> Result<()> {
        let n = self.dim();
        if x.p.len() != n || x.q.len() != n || x.x.len() != n || x.p_mat.shape() != (n, n) || x.q_mat.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "iterate of dimension {} for a problem of dimension {n}",
                x.dim()
            )));
        }
        Ok(())
    }
}

/// `(mu mu' - k2 S) . Q - S . P + 2 mu'p - k1 r - s`
pub fn dual_objective(x: &DualIterate, prob: &UserProblem) -> Result<f64> {
    prob.check_shape(x)?;
    Ok(prob.conic(XBlock::Fixed(x.x.clone())).linear_objective(x))
}

/// [`dual_objective`] minus the Frobenius terms of the formulation (equal to
/// it for the other formulations).
pub fn regularized_objective(x: &DualIterate, prob: &UserProblem) -> Result<f64> {
    prob.check_shape(x)?;
    let c = prob.conic(XBlock::Fixed(x.x.clone()));
    Ok(c.linear_objective(x) - c.regularization(x))
}

/// Indices of `n` largest keys, ties to the lower index.
fn top_indices(keys: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

fn indicator(len: usize, on: &[usize]) -> DVector<f64> {
    let mut z = DVector::zeros(len);
    for &i in on {
        z[i] = 1.0;
    }
    z
}

/// Nearest point of `{z binary, sum z = n}` to `xbar` in L1: ones on the `n`
/// largest entries, ties to the lowest index.
pub fn update_z(xbar: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    if n > xbar.len() {
        return Err(invalid(format!("list size {n} exceeds {} items", xbar.len())));
    }
    if xbar.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("z update input".into()));
    }
    Ok(indicator(xbar.len(), &top_indices(xbar.as_slice(), n)))
}

/// Starting point and binary vector for the alternating loop.
pub fn initial_point(prob: &UserProblem, mode: InitMode) -> Result<(DualIterate, DVector<f64>)> {
    prob.validate()?;
    let n = prob.dim();
    let k = prob.n_select;
    match mode {
        InitMode::FirstN => {
            let z = indicator(n, &(0..k).collect::<Vec<_>>());
            Ok((DualIterate::feasible_start(&prob.mu, z.clone()), z))
        }
        InitMode::TopkSpread => {
            // spread the list size over the ten best-predicted items (all of
            // them when fewer, and at least `k` so entries stay within 1)
            let m = n.min(10.max(k));
            let top = top_indices(prob.mu.as_slice(), m);
            let mut x = DVector::zeros(n);
            for &i in &top {
                x[i] = k as f64 / m as f64;
            }
            // every spread entry is equal; the mean ranking picks among them
            let z = indicator(n, &top[..k]);
            Ok((DualIterate::feasible_start(&prob.mu, x), z))
        }
    }
}
