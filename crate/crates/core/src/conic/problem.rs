use nalgebra::{DMatrix, DVector};

use super::iterate::DualIterate;
use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, frobenius_dot, max_asymmetry, min_eigenvalue};

/// How the selection vector `x` enters the subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum XBlock {
    /// `x` ranges over the unit box and pays `gamma * |x - center|_1`.
    Penalized { center: DVector<f64>, gamma: f64 },
    /// `x` is pinned to the given vector (no box, no penalty).
    Fixed(DVector<f64>),
}

/// One instance of the continuous subproblem
///
/// ```text
/// maximize  (mu mu' - k2 S) . Q - S . P + 2 mu'p - k1 r - s
///           - lp |P|_F^2 - lq |Q|_F^2 - gamma |x - zbar|_1
/// s.t.      p = -q/2 - Q mu
///           [[P, p], [p', r]] >= 0,  [[Q, q/2 + x/2], [., s]] >= 0
///           0 <= x <= 1
///           tr(P) <= tau_p, tr(Q) <= tau_q, f(X) >= f_lb   (optional rows)
/// ```
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub reg_p: f64,
    pub reg_q: f64,
    pub trace_p: Option<f64>,
    pub trace_q: Option<f64>,
    /// Lower-bound cut on the unregularized linear objective `f(X)`.
    pub lower_bound: Option<f64>,
    pub x_block: XBlock,
}

impl ConicProblem {
    /// Plain problem with the penalized `x` block and no optional rows.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, kappa1: f64, kappa2: f64, center: DVector<f64>, gamma: f64) -> Self {
        ConicProblem {
            mu,
            sigma,
            kappa1,
            kappa2,
            reg_p: 0.0,
            reg_q: 0.0,
            trace_p: None,
            trace_q: None,
            lower_bound: None,
            x_block: XBlock::Penalized { center, gamma },
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `mu mu' - kappa2 * Sigma`, the cost matrix paired with `Q`.
    pub fn q_cost(&self) -> DMatrix<f64> {
        &self.mu * self.mu.transpose() - &self.sigma * self.kappa2
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(invalid("conic problem has no items"));
        }
        if self.sigma.nrows() != n || self.sigma.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "sigma is {}x{}, expected {n}x{n}",
                self.sigma.nrows(),
                self.sigma.ncols()
            )));
        }
        if !all_finite(&self.sigma) || self.mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conic problem data".into()));
        }
        if max_asymmetry(&self.sigma) > 1e-10 * (1.0 + self.sigma.amax()) {
            return Err(invalid("sigma is not symmetric"));
        }
        let scale = 1.0 + self.sigma.amax();
        if min_eigenvalue(&self.sigma) < -1e-9 * scale {
            return Err(invalid("sigma is not positive semidefinite"));
        }
        for (name, v) in [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("reg_p", self.reg_p),
            ("reg_q", self.reg_q),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        for (name, v) in [("trace_p", self.trace_p), ("trace_q", self.trace_q)] {
            if let Some(t) = v {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(invalid(format!("{name} must be nonnegative, got {t}")));
                }
            }
        }
        if let Some(lb) = self.lower_bound {
            if !lb.is_finite() {
                return Err(invalid("lower bound cut must be finite"));
            }
        }
        match &self.x_block {
            XBlock::Penalized { center, gamma } => {
                if center.len() != n {
                    return Err(Error::ShapeMismatch(format!("center has length {}, expected {n}", center.len())));
                }
                if center.iter().any(|&c| c != 0.0 && c != 1.0) {
                    return Err(invalid("penalty center must be binary"));
                }
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return Err(invalid(format!("gamma must be nonnegative, got {gamma}")));
                }
            }
            XBlock::Fixed(x) => {
                if x.len() != n {
                    return Err(Error::ShapeMismatch(format!("fixed x has length {}, expected {n}", x.len())));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("fixed x".into()));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_shape(&self, x: &DualIterate) -> Result<()> {
        let n = self.dim();
        let ok = x.p.len() == n && x.q.len() == n && x.x.len() == n && x.p_mat.shape() == (n, n) && x.q_mat.shape() == (n, n);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "iterate of dimension {} does not match problem dimension {n}",
                x.dim()
            )))
        }
    }

    /// Unregularized dual objective `f(X)`.
    pub fn linear_objective(&self, x: &DualIterate) -> f64 {
        frobenius_dot(&self.q_cost(), &x.q_mat) - frobenius_dot(&self.sigma, &x.p_mat) + 2.0 * self.mu.dot(&x.p) - self.kappa1 * x.r - x.s
    }

    /// `lp |P|_F^2 + lq |Q|_F^2`
    pub fn regularization(&self, x: &DualIterate) -> f64 {
        self.reg_p * x.p_mat.norm_squared() + self.reg_q * x.q_mat.norm_squared()
    }

    /// `gamma |x - center|_1`, zero for a fixed `x` block.
    pub fn penalty(&self, x: &DualIterate) -> f64 {
        match &self.x_block {
            XBlock::Penalized { center, gamma } => gamma * x.x.iter().zip(center.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>(),
            XBlock::Fixed(_) => 0.0,
        }
    }

    /// Full subproblem objective: linear part minus regularization minus penalty.
    pub fn objective(&self, x: &DualIterate) -> f64 {
        self.linear_objective(x) - self.regularization(x) - self.penalty(x)
    }
}
