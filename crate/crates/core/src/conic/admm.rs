//! ADMM with a linear-equality block and a cone/box block.
//!
//! The variable lives in `S^{n+1} x S^{n+1} x R^n`: the two bordered PSD blocks
//! `M1 = [[P, p], [p', r]]`, `M2 = [[Q, w], [w', s]]` (with `w = q/2 + x/2`) and
//! `x`. The first copy carries the objective and the coupling
//! `p + w + Q mu - x/2 = 0` (plus optional linear rows); the second copy
//! carries the PSD cones, the box, and the L1 penalty.

use nalgebra::{DMatrix, DVector};

use super::iterate::{bordered, DualIterate};
use super::problem::{ConicProblem, XBlock};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_dot, project_psd};

/// Which algorithm handles a subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Interior point without quadratic regularization, splitting otherwise.
    Auto,
    Splitting,
    InteriorPoint,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub method: SolverMethod,
    /// Absolute residual tolerance (scaled by the square root of the dimension).
    pub tol_primal: f64,
    /// Relative residual tolerance.
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Initial ADMM step parameter rho.
    pub step: f64,
    pub adaptive_step: bool,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            method: SolverMethod::Auto,
            tol_primal: 1e-6,
            tol_rel: 1e-6,
            max_iter: 20_000,
            step: 1.0,
            adaptive_step: true,
            relaxation: 1.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleSuspect,
}

/// Full splitting state, reusable as a warm start for a nearby problem.
#[derive(Debug, Clone)]
pub struct WarmStart {
    v: Point,
    u: Point,
    rho: f64,
    beta: [f64; 2],
}

impl WarmStart {
    /// Starts from a given iterate with zero scaled duals.
    pub fn from_iterate(x: &DualIterate, rho: f64) -> Self {
        let v = Point::from_iterate(x);
        let u = Point::zeros(x.dim());
        WarmStart {
            v,
            u,
            rho,
            beta: [1.0, 1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.v.x.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub iterate: DualIterate,
    /// Subproblem objective (linear part minus regularization minus penalty).
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Marginal value of each `x_i` for the smooth part of the objective,
    /// read off the scaled dual of the `x` consensus constraint.
    pub x_marginal: DVector<f64>,
    /// `t_i = |x_i - center_i|`, the epigraph variables of the L1 term.
    pub l1_slack: DVector<f64>,
    /// Splitting state for a warm start; `None` from the interior-point path.
    pub warm: Option<WarmStart>,
}

impl ConicSolution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Debug, Clone)]
struct Point {
    m1: DMatrix<f64>,
    m2: DMatrix<f64>,
    x: DVector<f64>,
}

impl Point {
    fn zeros(n: usize) -> Self {
        Point {
            m1: DMatrix::zeros(n + 1, n + 1),
            m2: DMatrix::zeros(n + 1, n + 1),
            x: DVector::zeros(n),
        }
    }

    fn from_iterate(it: &DualIterate) -> Self {
        let w = (&it.q + &it.x) * 0.5;
        Point {
            m1: bordered(&it.p_mat, &it.p, it.r),
            m2: bordered(&it.q_mat, &w, it.s),
            x: it.x.clone(),
        }
    }

    fn to_iterate(&self) -> DualIterate {
        let n = self.x.len();
        let p = self.m1.view((0, n), (n, 1)).column(0).into_owned();
        let w = self.m2.view((0, n), (n, 1)).column(0).into_owned();
        DualIterate {
            p,
            p_mat: self.m1.view((0, 0), (n, n)).into_owned(),
            q: &w * 2.0 - &self.x,
            q_mat: self.m2.view((0, 0), (n, n)).into_owned(),
            r: self.m1[(n, n)],
            s: self.m2[(n, n)],
            x: self.x.clone(),
        }
    }

    fn dot(&self, o: &Point) -> f64 {
        frobenius_dot(&self.m1, &o.m1) + frobenius_dot(&self.m2, &o.m2) + self.x.dot(&o.x)
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, a: f64, o: &Point) {
        self.m1.zip_apply(&o.m1, |s, o| *s += a * o);
        self.m2.zip_apply(&o.m2, |s, o| *s += a * o);
        self.x.axpy(a, &o.x, 1.0);
    }

    fn scale(&mut self, a: f64) {
        self.m1 *= a;
        self.m2 *= a;
        self.x *= a;
    }

    fn dist(&self, o: &Point) -> f64 {
        let mut d = self.clone();
        d.axpy(-1.0, o);
        d.norm()
    }

    /// Multiplies the border of block `k` by `f[k]` and its corner by `f[k]^2`.
    fn scale_borders(&mut self, f: [f64; 2]) {
        for (m, f) in [(&mut self.m1, f[0]), (&mut self.m2, f[1])] {
            let n = m.nrows() - 1;
            for i in 0..n {
                m[(i, n)] *= f;
                m[(n, i)] *= f;
            }
            m[(n, n)] *= f * f;
        }
    }

    fn is_finite(&self) -> bool {
        self.m1.iter().chain(self.m2.iter()).chain(self.x.iter()).all(|v| v.is_finite())
    }
}

/// Linear operators of the equality block for a fixed step parameter.
struct Operators {
    n: usize,
    mu: DVector<f64>,
    rho: f64,
    /// Border scaling of the two blocks: the stored matrices are `E M E` with
    /// `E = diag(I, beta)`.
    beta: [f64; 2],
    /// Diagonal metric `rho + 2 lambda` on the P and Q blocks.
    d_p: f64,
    d_q: f64,
    /// `K = A D^-1 A* = a I + b mu mu'`
    k_a: f64,
    k_b: f64,
    rows: Vec<RowCache>,
}

struct Row {
    g: Point,
    h: f64,
}

struct RowCache {
    dg: Point,
    adg: DVector<f64>,
    kadg: DVector<f64>,
}

impl Operators {
    fn new(prob: &ConicProblem, rho: f64, beta: [f64; 2], rows: &[Row]) -> Self {
        let n = prob.dim();
        let d_p = rho + 2.0 * prob.reg_p;
        let d_q = rho + 2.0 * prob.reg_q;
        let mu_sq = prob.mu.norm_squared();
        let [b1, b2] = beta;
        let k_a = 1.0 / (2.0 * rho * b1 * b1) + 1.0 / (2.0 * rho * b2 * b2) + 1.0 / (4.0 * rho) + mu_sq / (2.0 * d_q);
        let k_b = 1.0 / (2.0 * d_q);
        let mut ops = Operators {
            n,
            mu: prob.mu.clone(),
            rho,
            beta,
            d_p,
            d_q,
            k_a,
            k_b,
            rows: Vec::new(),
        };
        ops.rows = rows
            .iter()
            .map(|row| {
                let mut dg = row.g.clone();
                ops.apply_dinv(&mut dg);
                let adg = ops.apply_a(&dg);
                let kadg = ops.k_solve(&adg);
                RowCache { dg, adg, kadg }
            })
            .collect();
        ops
    }

    /// `p + w + Q mu - x/2`
    fn apply_a(&self, y: &Point) -> DVector<f64> {
        let n = self.n;
        let [b1, b2] = self.beta;
        let p = y.m1.view((0, n), (n, 1));
        let w = y.m2.view((0, n), (n, 1));
        let qmu = y.m2.view((0, 0), (n, n)) * &self.mu;
        DVector::from_fn(n, |i, _| p[(i, 0)] / b1 + w[(i, 0)] / b2 + qmu[i] - 0.5 * y.x[i])
    }

    fn apply_at(&self, nu: &DVector<f64>) -> Point {
        let n = self.n;
        let [b1, b2] = self.beta;
        let mut out = Point::zeros(n);
        for i in 0..n {
            out.m1[(i, n)] = 0.5 * nu[i] / b1;
            out.m1[(n, i)] = 0.5 * nu[i] / b1;
            out.m2[(i, n)] = 0.5 * nu[i] / b2;
            out.m2[(n, i)] = 0.5 * nu[i] / b2;
            out.x[i] = -0.5 * nu[i];
        }
        let outer = nu * self.mu.transpose();
        let sym = (&outer + outer.transpose()) * 0.5;
        out.m2.view_mut((0, 0), (n, n)).copy_from(&sym);
        out
    }

    fn apply_dinv(&self, y: &mut Point) {
        let n = self.n;
        y.m1.view_mut((0, 0), (n, n)).scale_mut(1.0 / self.d_p);
        y.m2.view_mut((0, 0), (n, n)).scale_mut(1.0 / self.d_q);
        let inv_rho = 1.0 / self.rho;
        for i in 0..=n {
            y.m1[(i, n)] *= inv_rho;
            y.m2[(i, n)] *= inv_rho;
            if i < n {
                y.m1[(n, i)] *= inv_rho;
                y.m2[(n, i)] *= inv_rho;
            }
        }
        y.x *= inv_rho;
    }

    fn k_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        // Sherman-Morrison for (a I + b mu mu')^-1
        let a = self.k_a;
        let b = self.k_b;
        let mu_sq = self.mu.norm_squared();
        let coef = b * self.mu.dot(rhs) / (a * (a + b * mu_sq));
        rhs / a - &self.mu * coef
    }

    /// Minimizes `-<C, y> + reg(y) + rho/2 |y - t|^2` subject to `A y = 0`
    /// and the inequality rows, where `d = C + rho t`.
    fn solve_linear_block(&self, d: &Point, rows: &[Row]) -> Point {
        let mut y0 = d.clone();
        self.apply_dinv(&mut y0);
        let ay0 = self.apply_a(&y0);
        let kay0 = self.k_solve(&ay0);

        let base = {
            let mut y = y0.clone();
            let mut corr = self.apply_at(&kay0);
            self.apply_dinv(&mut corr);
            y.axpy(-1.0, &corr);
            y
        };
        if rows.is_empty() {
            return base;
        }

        let m = rows.len();
        let rhs_full: Vec<f64> = (0..m)
            .map(|i| rows[i].g.dot(&y0) - self.rows[i].adg.dot(&kay0) - rows[i].h)
            .collect();
        let schur = |i: usize, j: usize| rows[i].g.dot(&self.rows[j].dg) - self.rows[i].adg.dot(&self.rows[j].kadg);

        let mut masks: Vec<u32> = (0..(1u32 << m)).collect();
        masks.sort_by_key(|mask| mask.count_ones());
        let mut best: Option<(f64, Point)> = None;
        for mask in masks {
            let active: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
            let mut eta = vec![0.0; m];
            if !active.is_empty() {
                let k = active.len();
                let s = DMatrix::from_fn(k, k, |a, b| schur(active[a], active[b]));
                let r = DVector::from_fn(k, |a, _| rhs_full[active[a]]);
                let Some(sol) = s.lu().solve(&r) else {
                    continue;
                };
                for (a, &i) in active.iter().enumerate() {
                    eta[i] = sol[a];
                }
            }
            let mut y = base.clone();
            for (i, &e) in eta.iter().enumerate() {
                if e != 0.0 {
                    // y -= e * (dg_i - D^-1 A* K^-1 A dg_i)
                    let mut corr = self.apply_at(&self.rows[i].kadg);
                    self.apply_dinv(&mut corr);
                    let mut dir = self.rows[i].dg.clone();
                    dir.axpy(-1.0, &corr);
                    y.axpy(-e, &dir);
                }
            }
            let violation = (0..m)
                .map(|i| {
                    if active.contains(&i) {
                        (-eta[i]).max(0.0)
                    } else {
                        (rows[i].g.dot(&y) - rows[i].h).max(0.0)
                    }
                })
                .fold(0.0, f64::max);
            let scale = 1e-10 * (1.0 + rows.iter().map(|r| r.h.abs()).fold(0.0, f64::max));
            if violation <= scale {
                return y;
            }
            if best.as_ref().is_none_or(|(v, _)| violation < *v) {
                best = Some((violation, y));
            }
        }
        best.map(|(_, y)| y).unwrap_or(base)
    }
}

fn linear_cost(prob: &ConicProblem, beta: [f64; 2]) -> Point {
    let n = prob.dim();
    let c1 = bordered(&(-&prob.sigma), &prob.mu, -prob.kappa1);
    let c2 = bordered(&prob.q_cost(), &DVector::zeros(n), -1.0);
    let mut c = Point {
        m1: c1,
        m2: c2,
        x: DVector::zeros(n),
    };
    c.scale_borders([1.0 / beta[0], 1.0 / beta[1]]);
    c
}

/// Border scale that brings the corner of `m` (unscaled) to the size of its
/// leading block, or `None` when either is negligible.
fn balanced_border(m: &DMatrix<f64>, beta: f64) -> Option<f64> {
    let n = m.nrows() - 1;
    let corner = m[(n, n)] / (beta * beta);
    let block = m.view((0, 0), (n, n)).norm();
    if corner <= 1e-8 || block <= 1e-8 {
        return None;
    }
    Some((block / corner).sqrt().clamp(1e-3, 1e3))
}

fn inequality_rows(prob: &ConicProblem, cost: &Point) -> Vec<Row> {
    let n = prob.dim();
    let mut rows = Vec::new();
    if let Some(tau) = prob.trace_p {
        let mut g = Point::zeros(n);
        g.m1.view_mut((0, 0), (n, n)).fill_with_identity();
        rows.push(Row { g, h: tau });
    }
    if let Some(tau) = prob.trace_q {
        let mut g = Point::zeros(n);
        g.m2.view_mut((0, 0), (n, n)).fill_with_identity();
        rows.push(Row { g, h: tau });
    }
    if let Some(lb) = prob.lower_bound {
        let mut g = cost.clone();
        g.scale(-1.0);
        rows.push(Row { g, h: -lb });
    }
    rows
}

fn project_x(block: &XBlock, a: &DVector<f64>, rho: f64) -> DVector<f64> {
    match block {
        XBlock::Penalized { center, gamma } => {
            let thr = gamma / rho;
            DVector::from_fn(a.len(), |i, _| {
                let d = a[i] - center[i];
                let shrunk = d.signum() * (d.abs() - thr).max(0.0);
                (center[i] + shrunk).clamp(0.0, 1.0)
            })
        }
        XBlock::Fixed(x) => x.clone(),
    }
}

const DIVERGENCE_LIMIT: f64 = 1e12;
const ADAPT_EVERY: usize = 25;
/// Residual imbalance that triggers a step change.
const ADAPT_RATIO: f64 = 5.0;
/// Each step change stretches the interval to the next check.
const ADAPT_GROWTH: f64 = 1.5;
const REBALANCE_RATIO: f64 = 2.0;

/// Solves the subproblem by ADMM. `warm` may carry the full splitting state of
/// a previous solve on a problem of the same dimension.
pub(crate) fn solve_splitting(prob: &ConicProblem, settings: &SolverSettings, warm: Option<&WarmStart>) -> Result<ConicSolution> {
    let n = prob.dim();
    if !(settings.step > 0.0 && settings.relaxation > 0.0 && settings.relaxation < 2.0) {
        return Err(Error::InvalidInput("solver step must be positive and relaxation in (0, 2)".into()));
    }

    let (mut v, mut u, mut rho, mut beta) = match warm {
        Some(w) if w.dim() == n => (w.v.clone(), w.u.clone(), w.rho, w.beta),
        Some(w) => {
            return Err(Error::ShapeMismatch(format!(
                "warm start of dimension {} for problem of dimension {n}",
                w.dim()
            )))
        }
        None => (Point::zeros(n), Point::zeros(n), settings.step, [1.0, 1.0]),
    };
    if let XBlock::Fixed(xf) = &prob.x_block {
        v.x.copy_from(xf);
    }
    let mut cost = linear_cost(prob, beta);
    let mut rows = inequality_rows(prob, &cost);
    let mut ops = Operators::new(prob, rho, beta, &rows);

    let alpha = settings.relaxation;
    let sqrt_dim = ((2 * (n + 1) * (n + 1) + n) as f64).sqrt();
    let mut status = SolveStatus::MaxIter;
    let mut r_prim = f64::INFINITY;
    let mut r_dual = f64::INFINITY;
    let mut iterations = 0;
    let mut next_adapt = ADAPT_EVERY as f64;
    let mut interval = ADAPT_EVERY as f64;

    for it in 1..=settings.max_iter {
        iterations = it;

        // linear block: d = C + rho (v - u)
        let mut d = v.clone();
        d.axpy(-1.0, &u);
        d.scale(rho);
        d.axpy(1.0, &cost);
        let y = ops.solve_linear_block(&d, &rows);

        // cone block on the relaxed point
        let mut a = y.clone();
        a.scale(alpha);
        a.axpy(1.0 - alpha, &v);
        a.axpy(1.0, &u);
        let v_prev = std::mem::replace(
            &mut v,
            Point {
                m1: project_psd(&a.m1),
                m2: project_psd(&a.m2),
                x: project_x(&prob.x_block, &a.x, rho),
            },
        );
        u = a;
        u.axpy(-1.0, &v);

        if !v.is_finite() || !u.is_finite() {
            return Err(Error::NonFinite(format!("ADMM iterate at iteration {it}")));
        }

        r_prim = y.dist(&v);
        r_dual = rho * v.dist(&v_prev);
        let scale_p = y.norm().max(v.norm());
        let scale_d = rho * u.norm();
        let eps_p = settings.tol_primal * sqrt_dim + settings.tol_rel * scale_p;
        let eps_d = settings.tol_primal * sqrt_dim + settings.tol_rel * scale_d;
        if r_prim <= eps_p && r_dual <= eps_d {
            status = SolveStatus::Converged;
            break;
        }
        if scale_p > DIVERGENCE_LIMIT {
            status = SolveStatus::InfeasibleSuspect;
            break;
        }

        if settings.adaptive_step && it as f64 >= next_adapt {
            next_adapt = it as f64 + interval;
            let mut changed = false;
            let target = [
                balanced_border(&v.m1, beta[0]).unwrap_or(beta[0]),
                balanced_border(&v.m2, beta[1]).unwrap_or(beta[1]),
            ];
            let ratio = [target[0] / beta[0], target[1] / beta[1]];
            if ratio.iter().any(|f| !(1.0 / REBALANCE_RATIO..=REBALANCE_RATIO).contains(f)) {
                v.scale_borders(ratio);
                u.scale_borders([1.0 / ratio[0], 1.0 / ratio[1]]);
                beta = target;
                changed = true;
            }
            let rp = r_prim / scale_p.max(1e-12);
            let rd = r_dual / scale_d.max(1e-12);
            if rp > 0.0 && rd > 0.0 {
                let proposal = (rho * (rp / rd).sqrt()).clamp(1e-6, 1e6);
                if proposal > ADAPT_RATIO * rho || proposal < rho / ADAPT_RATIO {
                    u.scale(rho / proposal);
                    rho = proposal;
                    changed = true;
                    interval *= ADAPT_GROWTH;
                }
            }
            if changed {
                cost = linear_cost(prob, beta);
                rows = inequality_rows(prob, &cost);
                ops = Operators::new(prob, rho, beta, &rows);
            }
        }
    }

    let mut unscaled = v.clone();
    unscaled.scale_borders([1.0 / beta[0], 1.0 / beta[1]]);
    let iterate = unscaled.to_iterate();
    Ok(ConicSolution {
        objective: prob.objective(&iterate),
        iterate,
        primal_residual: r_prim,
        dual_residual: r_dual,
        iterations,
        status,
        x_marginal: &u.x * rho,
        l1_slack: DVector::zeros(n),
        warm: Some(WarmStart { v, u, rho, beta }),
    })
}
