use log::debug;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::trace::{PadmTrace, TraceRow};
use super::{initial_point, regularized_objective, InitMode, UserProblem};
use crate::conic::{solve, DualIterate, SolveStatus, SolverSettings, WarmStart, XBlock};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PadmSettings {
    pub eps_in: f64,
    pub eps_out: f64,
    pub theta: f64,
    pub gamma1: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub init: InitMode,
    /// Keep the previous continuous block when a new solve scores lower on
    /// the penalized objective at the same binary vector.
    pub safeguard: bool,
    pub solver: SolverSettings,
}

impl Default for PadmSettings {
    fn default() -> Self {
        PadmSettings {
            eps_in: 1e-4,
            eps_out: 1e-4,
            theta: 10.0,
            gamma1: 1e-4,
            max_outer: 12,
            max_inner: 50,
            init: InitMode::TopkSpread,
            safeguard: true,
            solver: SolverSettings::default(),
        }
    }
}

impl PadmSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_in > 0.0 && self.eps_out > 0.0) {
            return Err(invalid("PADM thresholds must be positive"));
        }
        if !(self.theta > 1.0 && self.theta.is_finite()) {
            return Err(invalid(format!("penalty growth {} must exceed 1", self.theta)));
        }
        if !(self.gamma1 > 0.0 && self.gamma1.is_finite()) {
            return Err(invalid("initial penalty weight must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(invalid("iteration caps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadmStatus {
    Converged,
    OuterCap,
    InnerStall,
}

#[derive(Debug, Clone)]
pub struct PadmOutcome {
    pub z: DVector<f64>,
    pub iterate: DualIterate,
    pub trace: PadmTrace,
}

impl PadmOutcome {
    pub fn status(&self) -> PadmStatus {
        self.trace.status
    }

    /// Positions of the selected candidates.
    pub fn selected(&self) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| self.z[i] == 1.0).collect()
    }
}

/// Binary update with the sort rule. Entries within `TIE` of a bound count as
/// that bound; ties go to the larger marginal value, then the lower index.
fn ranked_z(x: &DVector<f64>, marginal: &DVector<f64>, n: usize) -> DVector<f64> {
    const TIE: f64 = 1e-6;
    let level = |v: f64| {
        if v >= 1.0 - TIE {
            1.0
        } else if v <= TIE {
            0.0
        } else {
            v
        }
    };
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        level(x[b])
            .total_cmp(&level(x[a]))
            .then(marginal[b].total_cmp(&marginal[a]))
            .then(a.cmp(&b))
    });
    let mut z = DVector::zeros(x.len());
    for &i in &order[..n] {
        z[i] = 1.0;
    }
    z
}

fn l1(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).abs().sum()
}

struct State {
    x: DualIterate,
    z: DVector<f64>,
    marginal: DVector<f64>,
}

pub fn padm_solve(prob: &UserProblem, settings: &PadmSettings) -> Result<PadmOutcome> {
    prob.validate()?;
    settings.validate()?;
    let (x0, z0) = initial_point(prob, settings.init)?;
    let mut cur = State {
        x: x0,
        z: z0,
        marginal: prob.mu.clone(),
    };
    let penalized =
        |x: &DualIterate, z: &DVector<f64>, gamma: f64| -> Result<f64> { Ok(regularized_objective(x, prob)? - gamma * l1(&x.x, z)) };

    let mut trace = PadmTrace::new(settings.theta);
    let mut warm: Option<WarmStart> = None;
    let mut best: Option<(f64, DualIterate, DVector<f64>)> = None;
    let mut gamma = settings.gamma1;
    let mut stalled_last = false;

    for t in 1..=settings.max_outer {
        trace
            .rows
            .push(TraceRow::start(t, gamma, &cur.x, &cur.z, penalized(&cur.x, &cur.z, gamma)?, prob)?);
        stalled_last = true;
        for k in 1..=settings.max_inner {
            let sub = prob.conic(XBlock::Penalized {
                center: cur.z.clone(),
                gamma,
            });
            let sol = solve(&sub, &settings.solver, warm.as_ref())?;
            if sol.status != SolveStatus::Converged {
                trace.inexact_solves += 1;
            }
            warm = sol.warm.clone();
            let before = penalized(&cur.x, &cur.z, gamma)?;
            let kept = settings.safeguard && sol.objective < before;
            let (next_x, marginal) = if kept {
                (cur.x.clone(), cur.marginal.clone())
            } else {
                (sol.iterate.clone(), sol.x_marginal.clone())
            };
            let next_z = ranked_z(&next_x.x, &marginal, prob.n_select);
            let change = next_x.max_abs_diff(&cur.x).max((&next_z - &cur.z).amax());
            let f_pen = penalized(&next_x, &next_z, gamma)?;
            trace
                .rows
                .push(TraceRow::step(t, k, gamma, &next_x, &next_z, f_pen, change, &sol, kept, prob)?);
            cur = State {
                x: next_x,
                z: next_z,
                marginal,
            };
            if change <= settings.eps_in {
                stalled_last = false;
                break;
            }
        }
        if stalled_last {
            trace.inner_stalls += 1;
        }
        let gap = l1(&cur.x.x, &cur.z);
        debug!("outer {t}: gamma {gamma:e}, gap {gap:e}");
        if best.as_ref().is_none_or(|b| gap < b.0) {
            best = Some((gap, cur.x.clone(), cur.z.clone()));
        }
        if gap <= settings.eps_out {
            trace.status = PadmStatus::Converged;
            return Ok(PadmOutcome {
                z: cur.z,
                iterate: cur.x,
                trace,
            });
        }
        gamma *= settings.theta;
    }

    trace.status = if stalled_last {
        PadmStatus::InnerStall
    } else {
        PadmStatus::OuterCap
    };
    let (_, iterate, z) = best.expect("at least one outer iteration ran");
    Ok(PadmOutcome { z, iterate, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranked_update_breaks_ties_by_marginal() {
        let x = DVector::from_vec(vec![1.0, 1.0 - 1e-9, 1.0, 0.3]);
        let m = DVector::from_vec(vec![0.1, 0.5, 0.2, 9.0]);
        assert_eq!(ranked_z(&x, &m, 2).as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        let m = DVector::from_element(4, 0.0);
        assert_eq!(ranked_z(&x, &m, 2).as_slice(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(ranked_z(&x, &m, 4).sum(), 4.0);
    }
}
