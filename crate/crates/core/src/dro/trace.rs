use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use super::padm::PadmStatus;
use super::{dual_objective, UserProblem};
use crate::conic::{ConicSolution, DualIterate, SolveStatus};
use crate::error::{Error, Result};

/// One logged point of the alternating loop. `k = 0` rows record the state a
/// new penalty weight starts from; they carry no solver data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub k: usize,
    pub gamma: f64,
    /// Unregularized dual objective.
    pub f: f64,
    pub f_pen: f64,
    pub l1_gap: f64,
    pub change: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub solver_iterations: usize,
    pub solver_status: Option<SolveStatus>,
    /// The solve scored lower than the previous block, which was kept.
    pub kept_previous: bool,
    /// `min(r tr(P), r |P|_F) - |p|^2` at the solver's point; never negative
    /// for a feasible one.
    pub norm_margin: f64,
}

fn norm_margin(x: &DualIterate) -> f64 {
    let p2 = x.p.norm_squared();
    (x.r * x.p_mat.trace()).min(x.r * x.p_mat.norm()) - p2
}

impl TraceRow {
    pub(crate) fn start(t: usize, gamma: f64, x: &DualIterate, z: &DVector<f64>, f_pen: f64, prob: &UserProblem) -> Result<Self> {
        Ok(TraceRow {
            t,
            k: 0,
            gamma,
            f: dual_objective(x, prob)?,
            f_pen,
            l1_gap: (&x.x - z).abs().sum(),
            change: f64::NAN,
            primal_residual: 0.0,
            dual_residual: 0.0,
            solver_iterations: 0,
            solver_status: None,
            kept_previous: false,
            norm_margin: norm_margin(x),
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step(
        t: usize,
        k: usize,
        gamma: f64,
        x: &DualIterate,
        z: &DVector<f64>,
        f_pen: f64,
        change: f64,
        sol: &ConicSolution,
        kept: bool,
        prob: &UserProblem,
    ) -> Result<Self> {
        Ok(TraceRow {
            t,
            k,
            gamma,
            f: dual_objective(x, prob)?,
            f_pen,
            l1_gap: (&x.x - z).abs().sum(),
            change,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            solver_iterations: sol.iterations,
            solver_status: Some(sol.status),
            kept_previous: kept,
            norm_margin: norm_margin(&sol.iterate),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PadmTrace {
    pub rows: Vec<TraceRow>,
    pub theta: f64,
    pub status: PadmStatus,
    /// Outer iterations whose inner loop hit its cap.
    pub inner_stalls: usize,
    /// Subproblem solves that stopped short of tolerance.
    pub inexact_solves: usize,
}

impl PadmTrace {
    pub(crate) fn new(theta: f64) -> Self {
        PadmTrace {
            rows: Vec::new(),
            theta,
            status: PadmStatus::OuterCap,
            inner_stalls: 0,
            inexact_solves: 0,
        }
    }

    pub fn outer_iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.t)
    }

    pub fn solves(&self) -> usize {
        self.rows.iter().filter(|r| r.k > 0).count()
    }

    /// Largest drop of the penalized objective between consecutive rows of
    /// one inner loop (0 when it never decreases).
    pub fn worst_inner_descent(&self) -> f64 {
        self.rows
            .windows(2)
            .filter(|w| w[0].t == w[1].t)
            .map(|w| w[0].f_pen - w[1].f_pen)
            .fold(0.0, f64::max)
    }

    /// Whether each outer loop's weight is exactly `theta` times the last.
    pub fn penalty_schedule_exact(&self) -> bool {
        let mut gammas: Vec<(usize, f64)> = self.rows.iter().map(|r| (r.t, r.gamma)).collect();
        gammas.dedup_by_key(|g| g.0);
        let consistent = self.rows.iter().all(|r| gammas[r.t - 1] == (r.t, r.gamma));
        consistent && gammas.windows(2).all(|w| w[1].1 == w[0].1 * self.theta && w[1].0 == w[0].0 + 1)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Writes `user_id,rank,item_id` rows; each list is already in rank order.
pub fn write_selections(path: &Path, lists: &[(String, Vec<String>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "rank", "item_id"])?;
    for (user, items) in lists {
        for (rank, item) in items.iter().enumerate() {
            w.write_record([user.as_str(), &(rank + 1).to_string(), item.as_str()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
