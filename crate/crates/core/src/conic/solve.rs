use nalgebra::DVector;

use super::admm::{self, ConicSolution, SolverMethod, SolverSettings, WarmStart};
use super::ipm;
use super::iterate::DualIterate;
use super::problem::{ConicProblem, XBlock};
use crate::error::{invalid, Result};

/// Solves one subproblem. The returned iterate satisfies the coupling equality
/// and the box exactly and both blocks are PSD, so its objective is attained by
/// a feasible point.
pub fn solve(prob: &ConicProblem, settings: &SolverSettings, warm: Option<&WarmStart>) -> Result<ConicSolution> {
    prob.validate()?;
    let regularized = prob.reg_p > 0.0 || prob.reg_q > 0.0;
    let interior = match settings.method {
        SolverMethod::Auto => !regularized,
        SolverMethod::Splitting => false,
        SolverMethod::InteriorPoint if regularized => {
            return Err(invalid("the interior-point path does not handle Frobenius regularization"))
        }
        SolverMethod::InteriorPoint => true,
    };

    let mut sol = if interior {
        let out = ipm::solve(prob, settings)?;
        ConicSolution {
            objective: f64::NAN,
            x_marginal: out.coupling_dual * -0.5,
            iterate: out.iterate,
            primal_residual: out.primal_residual,
            dual_residual: out.dual_residual,
            iterations: out.iterations,
            status: out.status,
            l1_slack: DVector::zeros(prob.dim()),
            warm: None,
        }
    } else {
        admm::solve_splitting(prob, settings, warm)?
    };

    restore(prob, &mut sol.iterate);
    sol.objective = prob.objective(&sol.iterate);
    sol.l1_slack = match &prob.x_block {
        XBlock::Penalized { center, .. } => (&sol.iterate.x - center).abs(),
        XBlock::Fixed(_) => DVector::zeros(prob.dim()),
    };
    Ok(sol)
}

/// Puts `x` back in its box (keeping the second block's border), moves `p`
/// onto the coupling equality and lifts the first block by the size of that
/// move so it stays PSD.
pub(crate) fn restore(prob: &ConicProblem, it: &mut DualIterate) {
    let w = (&it.q + &it.x) * 0.5;
    match &prob.x_block {
        XBlock::Penalized { .. } => it.x.apply(|v| *v = v.clamp(0.0, 1.0)),
        XBlock::Fixed(x) => it.x.copy_from(x),
    }
    it.q = &w * 2.0 - &it.x;
    let target = -(&it.q * 0.5) - &it.q_mat * &prob.mu;
    let delta = target - &it.p;
    let eps = delta.norm();
    if eps > 0.0 {
        it.p += delta;
        for i in 0..prob.dim() {
            it.p_mat[(i, i)] += eps;
        }
        it.r += eps;
    }
}
