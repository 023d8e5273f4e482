use nalgebra::{DMatrix, DVector};

use crate::linalg::max_abs;

/// Continuous block `(p, P, q, Q, r, s, x)` of the dual selection problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DualIterate {
    pub p: DVector<f64>,
    pub p_mat: DMatrix<f64>,
    pub q: DVector<f64>,
    pub q_mat: DMatrix<f64>,
    pub r: f64,
    pub s: f64,
    pub x: DVector<f64>,
}

impl DualIterate {
    pub fn zeros(n: usize) -> Self {
        DualIterate {
            p: DVector::zeros(n),
            p_mat: DMatrix::zeros(n, n),
            q: DVector::zeros(n),
            q_mat: DMatrix::zeros(n, n),
            r: 0.0,
            s: 0.0,
            x: DVector::zeros(n),
        }
    }

    /// The closed-form feasible point: `p = -mu`, `q = 0`, `P = Q = I`,
    /// `r = mu'mu + 1`, `s = sum(x)/4 + 1`.
    ///
    /// For a binary `x` with `N` ones this is exactly the textbook point with
    /// `s = N/4 + 1`; for fractional `x` in the box it stays feasible because
    /// `|x|^2 <= sum(x)`.
    pub fn feasible_start(mu: &DVector<f64>, x: DVector<f64>) -> Self {
        let n = mu.len();
        DualIterate {
            p: -mu,
            p_mat: DMatrix::identity(n, n),
            q: DVector::zeros(n),
            q_mat: DMatrix::identity(n, n),
            r: mu.dot(mu) + 1.0,
            s: x.sum() / 4.0 + 1.0,
            x,
        }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `[[P, p], [p', r]]`
    pub fn block_p(&self) -> DMatrix<f64> {
        bordered(&self.p_mat, &self.p, self.r)
    }

    /// `[[Q, q/2 + x/2], [(q/2 + x/2)', s]]`
    pub fn block_q(&self) -> DMatrix<f64> {
        let w = (&self.q + &self.x) * 0.5;
        bordered(&self.q_mat, &w, self.s)
    }

    /// Largest absolute entrywise difference over every block.
    pub fn max_abs_diff(&self, other: &DualIterate) -> f64 {
        [
            max_abs(&(&self.p - &other.p)),
            (&self.p_mat - &other.p_mat).amax(),
            max_abs(&(&self.q - &other.q)),
            (&self.q_mat - &other.q_mat).amax(),
            (self.r - other.r).abs(),
            (self.s - other.s).abs(),
            max_abs(&(&self.x - &other.x)),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn scaled(&self, alpha: f64) -> DualIterate {
        DualIterate {
            p: &self.p * alpha,
            p_mat: &self.p_mat * alpha,
            q: &self.q * alpha,
            q_mat: &self.q_mat * alpha,
            r: self.r * alpha,
            s: self.s * alpha,
            x: &self.x * alpha,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|v| v.is_finite())
            && self.p_mat.iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
            && self.q_mat.iter().all(|v| v.is_finite())
            && self.r.is_finite()
            && self.s.is_finite()
            && self.x.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn bordered(m: &DMatrix<f64>, v: &DVector<f64>, corner: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(m);
    for i in 0..n {
        out[(i, n)] = v[i];
        out[(n, i)] = v[i];
    }
    out[(n, n)] = corner;
    out
}
