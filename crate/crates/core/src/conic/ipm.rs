//! Primal-dual interior-point method for the subproblem without quadratic
//! regularization.
//!
//! The subproblem is written as a standard-form SDP over two PSD blocks of
//! order `n + 1` and a nonnegative LP part:
//!
//! ```text
//! minimize  <C, X> + c'xl   s.t.  A_i(X) + a_i'xl = b_i,  X >= 0,  xl >= 0
//! ```
//!
//! and solved with the HKM search direction and a Mehrotra predictor-corrector.
//! Coupling rows have rank-two block terms, which keeps the Schur complement
//! at `O(n^3)` per iteration.

use nalgebra::{DMatrix, DVector};

use super::admm::{SolveStatus, SolverSettings};
use super::iterate::{bordered, DualIterate};
use super::problem::{ConicProblem, XBlock};
use crate::error::{Error, Result};
use crate::linalg::frobenius_dot;

/// Steps are cut back to this fraction of the distance to the boundary.
const STEP_FRACTION: f64 = 0.98;
const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
enum Term {
    Zero,
    /// `(a b' + b a') / 2`
    LowRank(DVector<f64>, DVector<f64>),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone)]
struct Row {
    blocks: [Term; 2],
    lp: Vec<(usize, f64)>,
    rhs: f64,
}

/// Standard-form data plus the bookkeeping needed to read a `DualIterate` back.
#[derive(Debug, Clone)]
struct Sdp {
    d: usize,
    c: [DMatrix<f64>; 2],
    c_lp: DVector<f64>,
    rows: Vec<Row>,
    /// Number of leading coupling rows; the x variables are `xl[0..n]` when free.
    n: usize,
    x_free: bool,
}

impl Sdp {
    fn build(prob: &ConicProblem) -> Self {
        let n = prob.dim();
        let d = n + 1;
        let c1 = bordered(&prob.sigma, &(-&prob.mu), prob.kappa1);
        let c2 = bordered(&(-prob.q_cost()), &DVector::zeros(n), 1.0);
        let unit = |i: usize| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            e
        };
        let mut mu_ext = DVector::from_element(d, 1.0);
        mu_ext.rows_mut(0, n).copy_from(&prob.mu);

        let mut c_lp = Vec::new();
        let (x_free, fixed) = match &prob.x_block {
            XBlock::Penalized { center, gamma } => {
                // |x - c| is linear on the box for binary c.
                for &ci in center.iter() {
                    if ci == 1.0 {
                        c_lp.push(-gamma);
                    } else {
                        c_lp.push(*gamma);
                    }
                }
                c_lp.extend(std::iter::repeat_n(0.0, n));
                (true, None)
            }
            XBlock::Fixed(x) => (false, Some(x)),
        };

        let mut rows = Vec::new();
        for i in 0..n {
            let lp = if x_free { vec![(i, -0.5)] } else { Vec::new() };
            rows.push(Row {
                blocks: [Term::LowRank(unit(i), unit(n)), Term::LowRank(unit(i), mu_ext.clone())],
                lp,
                rhs: fixed.map_or(0.0, |x| 0.5 * x[i]),
            });
        }
        if x_free {
            for i in 0..n {
                rows.push(Row {
                    blocks: [Term::Zero, Term::Zero],
                    lp: vec![(i, 1.0), (n + i, 1.0)],
                    rhs: 1.0,
                });
            }
        }
        let leading_identity = || {
            let mut m = DMatrix::identity(d, d);
            m[(n, n)] = 0.0;
            m
        };
        if let Some(tau) = prob.trace_p {
            c_lp.push(0.0);
            rows.push(Row {
                blocks: [Term::Dense(leading_identity()), Term::Zero],
                lp: vec![(c_lp.len() - 1, 1.0)],
                rhs: tau,
            });
        }
        if let Some(tau) = prob.trace_q {
            c_lp.push(0.0);
            rows.push(Row {
                blocks: [Term::Zero, Term::Dense(leading_identity())],
                lp: vec![(c_lp.len() - 1, 1.0)],
                rhs: tau,
            });
        }
        if let Some(lb) = prob.lower_bound {
            c_lp.push(0.0);
            rows.push(Row {
                blocks: [Term::Dense(-&c1), Term::Dense(-&c2)],
                lp: vec![(c_lp.len() - 1, -1.0)],
                rhs: lb,
            });
        }
        Sdp {
            d,
            c: [c1, c2],
            c_lp: DVector::from_vec(c_lp),
            rows,
            n,
            x_free,
        }
    }

    fn n_lp(&self) -> usize {
        self.c_lp.len()
    }

    fn apply(&self, x: &[DMatrix<f64>; 2], xl: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.rows.len(), |i, _| {
            let row = &self.rows[i];
            let mut v: f64 = row.lp.iter().map(|&(j, a)| a * xl[j]).sum();
            for (t, xk) in row.blocks.iter().zip(x) {
                v += match t {
                    Term::Zero => 0.0,
                    Term::LowRank(a, b) => a.dot(&(xk * b)),
                    Term::Dense(m) => frobenius_dot(m, xk),
                };
            }
            v
        })
    }

    fn adjoint(&self, y: &DVector<f64>) -> ([DMatrix<f64>; 2], DVector<f64>) {
        let d = self.d;
        let mut s = [DMatrix::zeros(d, d), DMatrix::zeros(d, d)];
        let mut sl = DVector::zeros(self.n_lp());
        for (row, &yi) in self.rows.iter().zip(y.iter()) {
            for &(j, a) in &row.lp {
                sl[j] += a * yi;
            }
            for (t, sk) in row.blocks.iter().zip(s.iter_mut()) {
                match t {
                    Term::Zero => {}
                    Term::LowRank(a, b) => {
                        sk.ger(0.5 * yi, a, b, 1.0);
                        sk.ger(0.5 * yi, b, a, 1.0);
                    }
                    Term::Dense(m) => *sk += m * yi,
                }
            }
        }
        (s, sl)
    }

    /// `M_ij = sum_k tr(A_ik X_k A_jk W_k) + sum_l a_il (xl/zl)_l a_jl`
    fn schur(&self, x: &[DMatrix<f64>; 2], w: &[DMatrix<f64>; 2], ratio: &DVector<f64>) -> DMatrix<f64> {
        let m = self.rows.len();
        let mut out = DMatrix::zeros(m, m);
        for k in 0..2 {
            let low: Vec<(usize, &DVector<f64>, &DVector<f64>)> = self
                .rows
                .iter()
                .enumerate()
                .filter_map(|(i, r)| match &r.blocks[k] {
                    Term::LowRank(a, b) => Some((i, a, b)),
                    _ => None,
                })
                .collect();
            let dense: Vec<(usize, &DMatrix<f64>)> = self
                .rows
                .iter()
                .enumerate()
                .filter_map(|(i, r)| match &r.blocks[k] {
                    Term::Dense(mat) => Some((i, mat)),
                    _ => None,
                })
                .collect();
            let xk = &x[k];
            let wk = &w[k];
            let pre: Vec<[DVector<f64>; 4]> = low.iter().map(|(_, a, b)| [xk * *a, xk * *b, wk * *a, wk * *b]).collect();
            for (p, &(i, ai, bi)) in low.iter().enumerate() {
                let [_, _, wai, wbi] = &pre[p];
                for (q, &(j, aj, bj)) in low.iter().enumerate().skip(p) {
                    let [xaj, xbj, _, _] = &pre[q];
                    let v = 0.25
                        * (bi.dot(xaj) * bj.dot(wai) + bi.dot(xbj) * aj.dot(wai) + ai.dot(xaj) * bj.dot(wbi) + ai.dot(xbj) * aj.dot(wbi));
                    out[(i, j)] += v;
                    if i != j {
                        out[(j, i)] += v;
                    }
                }
            }
            for (q, &(j, dj)) in dense.iter().enumerate() {
                let g = xk * dj * wk;
                for &(i, ai, bi) in &low {
                    let v = 0.5 * (bi.dot(&(&g * ai)) + ai.dot(&(&g * bi)));
                    out[(i, j)] += v;
                    out[(j, i)] += v;
                }
                for &(i, di) in dense.iter().skip(q) {
                    let v = frobenius_dot(di, &g.transpose());
                    out[(i, j)] += v;
                    if i != j {
                        out[(j, i)] += v;
                    }
                }
            }
        }
        for (i, ri) in self.rows.iter().enumerate() {
            for (j, rj) in self.rows.iter().enumerate() {
                for &(li, ai) in &ri.lp {
                    for &(lj, aj) in &rj.lp {
                        if li == lj {
                            out[(i, j)] += ai * aj * ratio[li];
                        }
                    }
                }
            }
        }
        out
    }

    fn data_norms(&self) -> (f64, f64) {
        let b = self.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        let c = self.c[0].norm().max(self.c[1].norm()).max(self.c_lp.amax());
        (b, c)
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `alpha` with `x + alpha dx` PSD (`inf` when every step is feasible).
fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    let l = chol.l();
    let linv_dx = l.solve_lower_triangular(dx)?;
    let s = l.solve_lower_triangular(&linv_dx.transpose())?;
    let lam = sym(&s).symmetric_eigenvalues().min();
    Some(if lam < 0.0 { -1.0 / lam } else { f64::INFINITY })
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct State {
    x: [DMatrix<f64>; 2],
    z: [DMatrix<f64>; 2],
    xl: DVector<f64>,
    zl: DVector<f64>,
    y: DVector<f64>,
}

struct Direction {
    dx: [DMatrix<f64>; 2],
    dz: [DMatrix<f64>; 2],
    dxl: DVector<f64>,
    dzl: DVector<f64>,
    dy: DVector<f64>,
}

pub(crate) struct IpmOutcome {
    pub iterate: DualIterate,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Multipliers of the coupling rows.
    pub coupling_dual: DVector<f64>,
}

pub(crate) fn solve(prob: &ConicProblem, settings: &SolverSettings) -> Result<IpmOutcome> {
    let sdp = Sdp::build(prob);
    let d = sdp.d;
    let m = sdp.rows.len();
    let n_lp = sdp.n_lp();
    let nu = (2 * d + n_lp) as f64;
    let (b_norm, c_norm) = sdp.data_norms();
    let b = DVector::from_fn(m, |i, _| sdp.rows[i].rhs);

    let row_norm = |r: &Row| {
        let lr = |t: &Term| match t {
            Term::Zero => 0.0,
            Term::LowRank(a, b) => a.norm() * b.norm(),
            Term::Dense(mat) => mat.norm(),
        };
        lr(&r.blocks[0]) + lr(&r.blocks[1]) + r.lp.iter().map(|(_, a)| a.abs()).sum::<f64>()
    };
    let xi = sdp
        .rows
        .iter()
        .map(|r| (1.0 + r.rhs.abs()) / (1.0 + row_norm(r)))
        .fold(10.0_f64.max((d as f64).sqrt()), |acc, v| acc.max(d as f64 * v));
    let eta = sdp
        .rows
        .iter()
        .map(row_norm)
        .fold(10.0_f64.max((d as f64).sqrt()).max(c_norm), f64::max);
    let mut st = State {
        x: [DMatrix::identity(d, d) * xi, DMatrix::identity(d, d) * xi],
        z: [DMatrix::identity(d, d) * eta, DMatrix::identity(d, d) * eta],
        xl: DVector::from_element(n_lp, xi),
        zl: DVector::from_element(n_lp, eta),
        y: DVector::zeros(m),
    };

    let tol = settings.tol_primal.min(settings.tol_rel).max(1e-14);
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut pinf = f64::INFINITY;
    let mut dinf = f64::INFINITY;

    for it in 0..settings.max_iter.min(500) {
        iterations = it;
        let ax = sdp.apply(&st.x, &st.xl);
        let r_p = &b - ax;
        let (aty, atyl) = sdp.adjoint(&st.y);
        let r_d = [&sdp.c[0] - &aty[0] - &st.z[0], &sdp.c[1] - &aty[1] - &st.z[1]];
        let r_dl = &sdp.c_lp - atyl - &st.zl;
        let pobj = frobenius_dot(&sdp.c[0], &st.x[0]) + frobenius_dot(&sdp.c[1], &st.x[1]) + sdp.c_lp.dot(&st.xl);
        let dobj = b.dot(&st.y);
        let gap = frobenius_dot(&st.x[0], &st.z[0]) + frobenius_dot(&st.x[1], &st.z[1]) + st.xl.dot(&st.zl);
        let mu = gap / nu;

        pinf = r_p.norm() / (1.0 + b_norm);
        dinf = (r_d[0].norm_squared() + r_d[1].norm_squared() + r_dl.norm_squared()).sqrt() / (1.0 + c_norm);
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if pinf <= tol && dinf <= tol && rel_gap <= tol {
            status = SolveStatus::Converged;
            break;
        }
        if st.x.iter().any(|x| x.amax() > DIVERGENCE_LIMIT) || st.xl.amax() > DIVERGENCE_LIMIT {
            status = SolveStatus::InfeasibleSuspect;
            break;
        }

        let Some(w) = invert_pd(&st.z) else {
            break;
        };
        let ratio = st.xl.component_div(&st.zl);
        let schur = sdp.schur(&st.x, &w, &ratio);
        let Some(factor) = SchurFactor::new(schur) else {
            break;
        };

        let direction = |sigma_mu: f64, corr: Option<&Direction>| -> Option<Direction> {
            let k: [Option<DMatrix<f64>>; 2] = match corr {
                Some(c) => [Some(&c.dx[0] * &c.dz[0]), Some(&c.dx[1] * &c.dz[1])],
                None => [None, None],
            };
            let kl = corr.map(|c| c.dxl.component_mul(&c.dzl));
            // dX without the dy term
            let h: Vec<DMatrix<f64>> = (0..2)
                .map(|j| {
                    let mut inner = &st.x[j] * &r_d[j];
                    if let Some(kj) = &k[j] {
                        inner += kj;
                    }
                    &w[j] * sigma_mu - &st.x[j] - sym(&(inner * &w[j]))
                })
                .collect();
            let mut comp = DVector::from_fn(n_lp, |l, _| sigma_mu - st.xl[l] * st.zl[l]);
            if let Some(kl) = &kl {
                comp -= kl;
            }
            let hl = DVector::from_fn(n_lp, |l, _| comp[l] / st.zl[l] - ratio[l] * r_dl[l]);
            let rhs = &r_p - sdp.apply(&[h[0].clone(), h[1].clone()], &hl);
            let dy = factor.solve(&rhs)?;
            let (ady, adyl) = sdp.adjoint(&dy);
            let dz = [&r_d[0] - &ady[0], &r_d[1] - &ady[1]];
            let dx: [DMatrix<f64>; 2] = std::array::from_fn(|j| {
                let mut inner = &st.x[j] * &dz[j];
                if let Some(kj) = &k[j] {
                    inner += kj;
                }
                &w[j] * sigma_mu - &st.x[j] - sym(&(inner * &w[j]))
            });
            let dzl = &r_dl - adyl;
            let dxl = DVector::from_fn(n_lp, |l, _| (comp[l] - st.xl[l] * dzl[l]) / st.zl[l]);
            Some(Direction { dx, dz, dxl, dzl, dy })
        };

        let steps = |dir: &Direction| -> Option<(f64, f64)> {
            let mut ap = max_step_lp(&st.xl, &dir.dxl);
            let mut ad = max_step_lp(&st.zl, &dir.dzl);
            for j in 0..2 {
                ap = ap.min(max_step_psd(&st.x[j], &dir.dx[j])?);
                ad = ad.min(max_step_psd(&st.z[j], &dir.dz[j])?);
            }
            Some(((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0)))
        };

        let Some(pred) = direction(0.0, None) else {
            break;
        };
        let Some((ap, ad)) = steps(&pred) else {
            break;
        };
        let gap_aff = (0..2)
            .map(|j| frobenius_dot(&(&st.x[j] + &pred.dx[j] * ap), &(&st.z[j] + &pred.dz[j] * ad)))
            .sum::<f64>()
            + (&st.xl + &pred.dxl * ap).dot(&(&st.zl + &pred.dzl * ad));
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);
        let Some(corr) = direction(sigma * mu, Some(&pred)) else {
            break;
        };
        let Some((ap, ad)) = steps(&corr) else {
            break;
        };
        for j in 0..2 {
            st.x[j] += &corr.dx[j] * ap;
            st.x[j] = sym(&st.x[j]);
            st.z[j] += &corr.dz[j] * ad;
            st.z[j] = sym(&st.z[j]);
        }
        st.xl += &corr.dxl * ap;
        st.zl += &corr.dzl * ad;
        st.y += &corr.dy * ad;

        let finite = st.x.iter().chain(st.z.iter()).all(|m| m.iter().all(|v| v.is_finite())) && st.y.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("interior-point iterate at iteration {it}")));
        }
        if ap.max(ad) < 1e-12 {
            break;
        }
    }

    let n = sdp.n;
    let m1 = &st.x[0];
    let m2 = &st.x[1];
    let x = if sdp.x_free {
        st.xl.rows(0, n).map(|v| v.clamp(0.0, 1.0))
    } else {
        match &prob.x_block {
            XBlock::Fixed(x) => x.clone(),
            XBlock::Penalized { .. } => unreachable!("penalized x block is always free"),
        }
    };
    let w = m2.view((0, n), (n, 1)).column(0).into_owned();
    let iterate = DualIterate {
        p: m1.view((0, n), (n, 1)).column(0).into_owned(),
        p_mat: m1.view((0, 0), (n, n)).into_owned(),
        q: &w * 2.0 - &x,
        q_mat: m2.view((0, 0), (n, n)).into_owned(),
        r: m1[(n, n)],
        s: m2[(n, n)],
        x,
    };
    Ok(IpmOutcome {
        iterate,
        primal_residual: pinf,
        dual_residual: dinf,
        iterations,
        status,
        coupling_dual: st.y.rows(0, n).into_owned(),
    })
}

fn invert_pd(z: &[DMatrix<f64>; 2]) -> Option<[DMatrix<f64>; 2]> {
    let a = z[0].clone().cholesky()?.inverse();
    let b = z[1].clone().cholesky()?.inverse();
    Some([sym(&a), sym(&b)])
}

enum SchurFactor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(c) = m.clone().cholesky() {
            return Some(SchurFactor::Chol(c));
        }
        let lu = m.lu();
        lu.is_invertible().then_some(SchurFactor::Lu(lu))
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let out = match self {
            SchurFactor::Chol(c) => c.solve(rhs),
            SchurFactor::Lu(lu) => lu.solve(rhs)?,
        };
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ConicProblem {
        let mu = DVector::from_vec(vec![3.0, 2.0, 4.5]);
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 0.8, -0.2, 0.1, -0.2, 1.2]);
        let center = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let mut p = ConicProblem::new(mu, sigma, 0.5, 0.8, center, 0.3);
        p.trace_p = Some(4.0);
        p.lower_bound = Some(-50.0);
        p
    }

    fn random_state(sdp: &Sdp) -> ([DMatrix<f64>; 2], DVector<f64>) {
        let d = sdp.d;
        let f = |i: usize, j: usize, k: usize| (((i * 7 + j * 3 + k * 11) % 13) as f64 - 6.0) / 5.0;
        let a = DMatrix::from_fn(d, d, |i, j| f(i, j, 1));
        let b = DMatrix::from_fn(d, d, |i, j| f(i, j, 2));
        ([sym(&a), sym(&b)], DVector::from_fn(sdp.n_lp(), |i, _| 0.1 * i as f64 - 0.2))
    }

    #[test]
    fn adjoint_is_consistent_with_apply() {
        let sdp = Sdp::build(&toy());
        let (x, xl) = random_state(&sdp);
        let y = DVector::from_fn(sdp.rows.len(), |i, _| (i as f64 * 0.37).sin());
        let lhs = sdp.apply(&x, &xl).dot(&y);
        let (s, sl) = sdp.adjoint(&y);
        let rhs = frobenius_dot(&s[0], &x[0]) + frobenius_dot(&s[1], &x[1]) + sl.dot(&xl);
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn schur_matches_dense_formula() {
        let sdp = Sdp::build(&toy());
        let d = sdp.d;
        let spd = |k: usize| {
            let a = DMatrix::from_fn(d, d, |i, j| (((i + 2 * j + k) % 5) as f64 - 2.0) / 3.0);
            &a * a.transpose() + DMatrix::identity(d, d)
        };
        let x = [spd(1), spd(2)];
        let w = [spd(3), spd(4)];
        let ratio = DVector::from_fn(sdp.n_lp(), |i, _| 0.5 + i as f64);
        let fast = sdp.schur(&x, &w, &ratio);
        let m = sdp.rows.len();
        // column j of the Schur matrix is A(X A_j W) + LP part
        for j in 0..m {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            let (aj, ajl) = sdp.adjoint(&e);
            let g = [sym(&(&x[0] * &aj[0] * &w[0])), sym(&(&x[1] * &aj[1] * &w[1]))];
            let col = sdp.apply(&g, &ajl.component_mul(&ratio));
            for i in 0..m {
                assert!((fast[(i, j)] - col[i]).abs() < 1e-9, "({i},{j})");
            }
        }
    }
}
