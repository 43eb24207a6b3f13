//! Dense least-squares helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::{LpError, Result};

/// Rank cut-off for singular values: `max(T, K) * eps * sigma_max`.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Numerical rank and the tolerance used to determine it.
pub fn numerical_rank(x: &DMatrix<f64>) -> (usize, f64) {
    if x.ncols() == 0 || x.nrows() == 0 {
        return (0, 0.0);
    }
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let tol = rank_tolerance(x.nrows(), x.ncols(), smax);
    (sv.iter().filter(|&&s| s > tol).count(), tol)
}

/// Fails with the names of the columns that add no rank when scanned left to right.
pub fn ensure_full_rank(x: &DMatrix<f64>, names: &[String], horizon: usize) -> Result<()> {
    let (rank, _) = numerical_rank(x);
    if rank == x.ncols() {
        return Ok(());
    }
    let mut kept: Vec<usize> = Vec::new();
    let mut offending = Vec::new();
    for j in 0..x.ncols() {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = x.select_columns(&trial);
        if numerical_rank(&sub).0 == trial.len() {
            kept = trial;
        } else {
            offending.push(names.get(j).cloned().unwrap_or_else(|| format!("#{j}")));
        }
    }
    Err(LpError::RankDeficient { horizon, columns: offending })
}

/// Thin QR of a full-rank design, reused for coefficients, projection rows
/// and leverage.
#[derive(Debug, Clone)]
pub struct QrSolver {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl QrSolver {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let qr = x.clone().qr();
        QrSolver { q: qr.q(), r: qr.r() }
    }

    /// Least-squares coefficients `argmin ||y - X b||`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let qty = self.q.tr_mul(y);
        self.r
            .solve_upper_triangular(&qty)
            .expect("full-rank design has an invertible R")
    }

    /// Row `j` of `(X'X)^{-1} X'`, i.e. `Q R^{-T} e_j`.
    pub fn projection_row(&self, j: usize) -> DVector<f64> {
        let k = self.r.ncols();
        let mut e = DVector::zeros(k);
        e[j] = 1.0;
        let z = self
            .r
            .tr_solve_upper_triangular(&e)
            .expect("full-rank design has an invertible R");
        &self.q * z
    }

    /// `(X'X)^{-1} = R^{-1} R^{-T}`.
    pub fn precision(&self) -> DMatrix<f64> {
        let k = self.r.ncols();
        let rinv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("full-rank design has an invertible R");
        &rinv * rinv.transpose()
    }

    /// Residual of `y` after projecting on the column span, `y - Q Q'y`.
    ///
    /// Projection components at rounding level (below the rank tolerance
    /// scaled by `||y||`) are dropped, so a `y` orthogonal to the span comes
    /// back bit-for-bit unchanged.
    pub fn residual(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut c = self.q.tr_mul(y);
        let tol = rank_tolerance(self.q.nrows(), self.q.ncols(), y.norm());
        c.iter_mut().filter(|v| v.abs() <= tol).for_each(|v| *v = 0.0);
        if c.iter().all(|v| *v == 0.0) {
            return y.clone();
        }
        y - &self.q * c
    }

    /// Diagonal of the hat matrix, `||Q_t||^2`.
    pub fn leverage(&self) -> Vec<f64> {
        self.q.row_iter().map(|r| r.norm_squared()).collect()
    }
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
