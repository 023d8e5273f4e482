use serde::Serialize;

use super::iterate::DualIterate;
use super::problem::ConicProblem;
use crate::error::Result;
use crate::linalg::min_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub pass: bool,
    /// Worst violation magnitude (0 when satisfied).
    pub violation: f64,
}

impl ConstraintCheck {
    fn from_violation(violation: f64, tol: f64) -> Self {
        ConstraintCheck {
            pass: violation <= tol,
            violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `p = -q/2 - Q mu`, max-norm residual.
    pub equality: ConstraintCheck,
    /// `[[P, p], [p', r]] >= 0`
    pub psd_p: ConstraintCheck,
    /// `[[Q, q/2 + x/2], [., s]] >= 0`
    pub psd_q: ConstraintCheck,
    /// `0 <= x <= 1`
    pub unit_box: ConstraintCheck,
    pub min_eig_p: f64,
    pub min_eig_q: f64,
    pub trace_p: Option<ConstraintCheck>,
    pub trace_q: Option<ConstraintCheck>,
}

impl FeasibilityReport {
    pub fn all_pass(&self) -> bool {
        self.equality.pass
            && self.psd_p.pass
            && self.psd_q.pass
            && self.unit_box.pass
            && self.trace_p.is_none_or(|c| c.pass)
            && self.trace_q.is_none_or(|c| c.pass)
    }

    pub fn worst_violation(&self) -> f64 {
        [
            Some(self.equality),
            Some(self.psd_p),
            Some(self.psd_q),
            Some(self.unit_box),
            self.trace_p,
            self.trace_q,
        ]
        .into_iter()
        .flatten()
        .map(|c| c.violation)
        .fold(0.0, f64::max)
    }
}

/// Checks every constraint family of the continuous feasible set.
pub fn check_feasibility(x: &DualIterate, prob: &ConicProblem, tol: f64) -> Result<FeasibilityReport> {
    prob.check_shape(x)?;
    let residual = &x.p + &x.q * 0.5 + &x.q_mat * &prob.mu;
    let eq = residual.amax();
    let min_eig_p = min_eigenvalue(&x.block_p());
    let min_eig_q = min_eigenvalue(&x.block_q());
    let box_violation = x.x.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
    let trace_check = |bound: Option<f64>, trace: f64| bound.map(|t| ConstraintCheck::from_violation((trace - t).max(0.0), tol));
    Ok(FeasibilityReport {
        equality: ConstraintCheck::from_violation(eq, tol),
        psd_p: ConstraintCheck::from_violation((-min_eig_p).max(0.0), tol),
        psd_q: ConstraintCheck::from_violation((-min_eig_q).max(0.0), tol),
        unit_box: ConstraintCheck::from_violation(box_violation, tol),
        min_eig_p,
        min_eig_q,
        trace_p: trace_check(prob.trace_p, x.p_mat.trace()),
        trace_q: trace_check(prob.trace_q, x.q_mat.trace()),
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::error::Error;

    fn problem(mu: &[f64], n_sel: usize) -> (ConicProblem, DVector<f64>) {
        let n = mu.len();
        let mu = DVector::from_column_slice(mu);
        let z = DVector::from_fn(n, |i, _| if i < n_sel { 1.0 } else { 0.0 });
        (ConicProblem::new(mu, DMatrix::identity(n, n), 1.0, 1.0, z.clone(), 0.0), z)
    }

    #[test]
    fn closed_form_point_passes_with_margin() {
        let (prob, z) = problem(&[5.0, 4.0, 3.0], 2);
        let x0 = DualIterate::feasible_start(&prob.mu, z);
        let report = check_feasibility(&x0, &prob, 0.0).unwrap();
        assert!(report.all_pass(), "{report:?}");
        assert_eq!(report.worst_violation(), 0.0);
        assert!(report.min_eig_p > 0.0);
    }

    #[test]
    fn box_violation_is_measured() {
        let (prob, z) = problem(&[5.0, 4.0, 3.0], 2);
        let mut x0 = DualIterate::feasible_start(&prob.mu, z);
        x0.x = DVector::from_element(3, 2.0);
        let report = check_feasibility(&x0, &prob, 1e-9).unwrap();
        assert!(!report.unit_box.pass);
        assert!((report.unit_box.violation - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lowering_r_breaks_first_block() {
        let (prob, z) = problem(&[5.0, 4.0, 3.0], 2);
        let mut x0 = DualIterate::feasible_start(&prob.mu, z);
        x0.r -= prob.mu.dot(&prob.mu) + 2.0;
        let report = check_feasibility(&x0, &prob, 1e-9).unwrap();
        assert!(!report.psd_p.pass);
        assert!(report.min_eig_p < 0.0);
        assert!(report.psd_q.pass);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (prob, _) = problem(&[5.0, 4.0, 3.0], 2);
        let x0 = DualIterate::zeros(2);
        assert!(matches!(check_feasibility(&x0, &prob, 1e-9), Err(Error::ShapeMismatch(_))));
    }
}
