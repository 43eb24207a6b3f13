//! The dual (proximity) reading of OLS local-projection weights.
//!
//! With `X'X = V D V'`, the embedding `F = X V D^{-1/2}` has orthonormal
//! columns, and the shock weight of observation `t` is the difference of
//! inner products between `F_t` and two embedded scenario rows that only
//! differ in the shock entry:
//!
//! ```text
//! w_t = ( <F_tau^delta, F_t> - <F_tau^0, F_t> ) / delta
//! ```
//!
//! `V` are also the eigenvectors of the precision matrix `(X'X)^{-1}`, whose
//! eigenvalues are `1/D`; these are what [`Embedding::precision_eigenvalues`]
//! reports, sorted in descending order.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Serialize;

use crate::linalg;
use crate::{LpError, Result};

#[derive(Debug, Clone)]
pub struct Embedding {
    /// Eigenvectors of the precision matrix, one per column.
    pub u: DMatrix<f64>,
    /// Eigenvalues of the precision matrix, descending.
    pub precision_eigenvalues: DVector<f64>,
    /// Embedded rows, `F'F = I`.
    pub f: DMatrix<f64>,
    /// Sample mean of the regressor rows with the shock entry zeroed; the
    /// default context.
    pub default_context: Vec<f64>,
    shock_col: usize,
}

impl Embedding {
    /// Maps any regressor row into the embedded space.
    pub fn embed_row(&self, row: &[f64]) -> RowDVector<f64> {
        let r = RowDVector::from_row_slice(row);
        let scale = self.precision_eigenvalues.map(f64::sqrt);
        let mut out = r * &self.u;
        for (v, s) in out.iter_mut().zip(scale.iter()) {
            *v *= s;
        }
        out
    }

    pub fn shock_col(&self) -> usize {
        self.shock_col
    }

    pub fn n_obs(&self) -> usize {
        self.f.nrows()
    }
}

/// Difference of two embedded scenarios at one context.
#[derive(Debug, Clone)]
pub struct InterventionVector {
    pub x_delta: Vec<f64>,
    pub x_zero: Vec<f64>,
    pub f_delta: RowDVector<f64>,
    pub f_zero: RowDVector<f64>,
    pub i_tau: RowDVector<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CosineDecomposition {
    pub cos_theta: Vec<f64>,
    pub norm_f: Vec<f64>,
    pub norm_i: f64,
    pub delta: f64,
    /// Rows whose embedded norm is zero; their cosine is reported as 0.
    pub zero_norm_rows: Vec<usize>,
}

impl CosineDecomposition {
    /// `||I|| cos(theta_t) ||F_t|| / delta`, which reproduces `w_t`.
    pub fn recombined_weights(&self) -> Vec<f64> {
        self.cos_theta
            .iter()
            .zip(&self.norm_f)
            .map(|(c, n)| self.norm_i * c * n / self.delta)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualSolution {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    /// True when small singular directions were dropped, i.e. the result is
    /// the minimum-norm solution rather than the unique one.
    pub truncated: bool,
}

/// Orthonormal embedding of a full-rank design.
pub fn embed(x: &DMatrix<f64>, shock_col: usize) -> Result<Embedding> {
    if shock_col >= x.ncols() {
        return Err(LpError::InvalidArgument(format!(
            "shock column {shock_col} outside a design with {} columns",
            x.ncols()
        )));
    }
    let xtx = x.tr_mul(x);
    let eig = xtx.symmetric_eigen();
    let dmax = eig.eigenvalues.max();
    let tol = linalg::rank_tolerance(x.nrows(), x.ncols(), dmax);
    if let Some(bad) = eig.eigenvalues.iter().find(|d| **d <= tol) {
        return Err(LpError::NonPositiveEigenvalue(*bad));
    }
    // ascending forward eigenvalues = descending precision eigenvalues
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let u = eig.eigenvectors.select_columns(&order);
    let precision_eigenvalues = DVector::from_iterator(order.len(), order.iter().map(|&j| 1.0 / eig.eigenvalues[j]));
    let mut f = x * &u;
    for (j, mut col) in f.column_iter_mut().enumerate() {
        col *= precision_eigenvalues[j].sqrt();
    }
    let n = x.nrows() as f64;
    let mut default_context: Vec<f64> = x.row_iter().fold(vec![0.0; x.ncols()], |mut acc, r| {
        acc.iter_mut().zip(r.iter()).for_each(|(a, v)| *a += v);
        acc
    });
    default_context.iter_mut().for_each(|v| *v /= n);
    default_context[shock_col] = 0.0;
    Ok(Embedding { u, precision_eigenvalues, f, default_context, shock_col })
}

/// Scenario rows `X_tau^delta` and `X_tau^0` built from a context and their
/// embedded difference.
pub fn intervention(emb: &Embedding, delta: f64, context: Option<&[f64]>) -> Result<InterventionVector> {
    if delta == 0.0 {
        return Err(LpError::ZeroDosage);
    }
    let ctx = context.unwrap_or(&emb.default_context);
    if ctx.len() != emb.u.nrows() {
        return Err(LpError::InvalidArgument(format!(
            "context row has {} entries, design has {}",
            ctx.len(),
            emb.u.nrows()
        )));
    }
    let mut x_delta = ctx.to_vec();
    x_delta[emb.shock_col] = delta;
    let mut x_zero = ctx.to_vec();
    x_zero[emb.shock_col] = 0.0;
    let f_delta = emb.embed_row(&x_delta);
    let f_zero = emb.embed_row(&x_zero);
    let i_tau = &f_delta - &f_zero;
    Ok(InterventionVector { x_delta, x_zero, f_delta, f_zero, i_tau, delta })
}

/// Proximity-score weights; they coincide with the OLS shock weights.
pub fn proximity_weights(emb: &Embedding, delta: f64, context: Option<&[f64]>) -> Result<Vec<f64>> {
    let iv = intervention(emb, delta, context)?;
    let w = emb
        .f
        .row_iter()
        .map(|ft| (iv.f_delta.dot(&ft) - iv.f_zero.dot(&ft)) / delta)
        .collect();
    Ok(w)
}

/// Splits each weight into alignment (cosine) and magnitudes.
pub fn cosine_decomposition(emb: &Embedding, delta: f64, context: Option<&[f64]>) -> Result<CosineDecomposition> {
    let iv = intervention(emb, delta, context)?;
    let norm_i = iv.i_tau.norm();
    let mut cos_theta = Vec::with_capacity(emb.n_obs());
    let mut norm_f = Vec::with_capacity(emb.n_obs());
    let mut zero_norm_rows = Vec::new();
    for (t, ft) in emb.f.row_iter().enumerate() {
        let nf = ft.norm();
        norm_f.push(nf);
        if nf == 0.0 || norm_i == 0.0 {
            zero_norm_rows.push(t);
            cos_theta.push(0.0);
        } else {
            cos_theta.push((iv.i_tau.dot(&ft) / (norm_i * nf)).clamp(-1.0, 1.0));
        }
    }
    Ok(CosineDecomposition { cos_theta, norm_f, norm_i, delta, zero_norm_rows })
}

/// Coefficients from the dual form `X'(XX')^+ y`.
///
/// The Gram pseudoinverse is assembled from the singular value decomposition
/// of `X`, dropping singular values at or below the same rank tolerance used
/// by the primal fit.
pub fn dual_coefficients(x: &DMatrix<f64>, y: &DVector<f64>) -> DualSolution {
    let k = x.ncols();
    if x.nrows() == 0 || k == 0 {
        return DualSolution { coefficients: vec![0.0; k], rank: 0, truncated: k > 0 };
    }
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let tol = linalg::rank_tolerance(x.nrows(), k, sv.max());
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > tol).collect();
    // (XX')^+ y = U_r diag(1/sigma^2) U_r' y
    let ur = u.select_columns(&keep);
    let mut z = ur.tr_mul(y);
    for (zi, &i) in z.iter_mut().zip(&keep) {
        *zi /= sv[i] * sv[i];
    }
    let gram_pinv_y = &ur * z;
    let b = x.tr_mul(&gram_pinv_y);
    DualSolution {
        coefficients: b.iter().copied().collect(),
        rank: keep.len(),
        truncated: keep.len() < k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::QrSolver;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(t: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, k, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) })
    }

    #[test]
    fn orthonormal_columns_embed_to_themselves() {
        // two orthonormal columns in R^4
        let x = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let e = embed(&x, 1).unwrap();
        for j in 0..2 {
            let fj = e.f.column(j);
            let matched = (0..2).any(|c| {
                let xc = x.column(c);
                (&fj - &xc).amax() < 1e-12 || (&fj + &xc).amax() < 1e-12
            });
            assert!(matched);
        }
    }

    #[test]
    fn gram_of_embedding_is_hat_matrix() {
        let x = random_design(30, 4, 3);
        let e = embed(&x, 1).unwrap();
        let ftf = e.f.tr_mul(&e.f);
        assert!((ftf - DMatrix::identity(4, 4)).amax() < 1e-8);
        let prec = x.tr_mul(&x).try_inverse().unwrap();
        let hat = &x * prec * x.transpose();
        assert!((&e.f * e.f.transpose() - hat).amax() < 1e-8);
        let pe = &e.precision_eigenvalues;
        assert!(pe.iter().zip(pe.iter().skip(1)).all(|(a, b)| a >= b));
    }

    #[test]
    fn weights_match_primal_and_ignore_dose_and_context() {
        let x = random_design(50, 5, 11);
        let e = embed(&x, 1).unwrap();
        let w_primal = QrSolver::new(&x).projection_row(1);
        let w1 = proximity_weights(&e, 1.0, None).unwrap();
        let w2 = proximity_weights(&e, 2.0, None).unwrap();
        let ctx: Vec<f64> = (0..5).map(|j| j as f64 - 1.5).collect();
        let w3 = proximity_weights(&e, 1.0, Some(&ctx)).unwrap();
        for t in 0..50 {
            assert!((w1[t] - w_primal[t]).abs() < 1e-8);
            assert!((w1[t] - w2[t]).abs() < 1e-10);
            assert!((w1[t] - w3[t]).abs() < 1e-10);
        }
        assert!(matches!(proximity_weights(&e, 0.0, None), Err(LpError::ZeroDosage)));
    }

    #[test]
    fn cosine_recombination() {
        let x = random_design(40, 3, 5);
        let e = embed(&x, 1).unwrap();
        let w = proximity_weights(&e, 0.7, None).unwrap();
        let c = cosine_decomposition(&e, 0.7, None).unwrap();
        for (a, b) in c.recombined_weights().iter().zip(&w) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(c.cos_theta.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn cosine_extremes() {
        // identity design: F = X, I_tau = delta e_shock
        let x = DMatrix::<f64>::identity(3, 3);
        let e = embed(&x, 1).unwrap();
        let c = cosine_decomposition(&e, 1.0, Some(&[0.0, 0.0, 0.0])).unwrap();
        assert!((c.cos_theta[1].abs() - 1.0).abs() < 1e-12);
        assert!(c.cos_theta[0].abs() < 1e-12 && c.cos_theta[2].abs() < 1e-12);
    }

    #[test]
    fn uncorrelated_design_collapses() {
        // columns orthogonal with (1/T) X'X = I
        let t = 8;
        let x = DMatrix::from_fn(t, 2, |i, j| if j == 0 { 1.0 } else if i % 2 == 0 { 1.0 } else { -1.0 });
        let e = embed(&x, 1).unwrap();
        let w = proximity_weights(&e, 1.5, None).unwrap();
        for i in 0..t {
            assert!((w[i] - x[(i, 1)] / t as f64).abs() < 1e-15);
        }
        let iv = intervention(&e, 1.5, None).unwrap();
        // ||I|| = |delta| after rescaling by sqrt(T)
        assert!((iv.i_tau.norm() * (t as f64).sqrt() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn dual_equals_primal() {
        let x = random_design(40, 4, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
        let primal = QrSolver::new(&x).solve(&y);
        let dual = dual_coefficients(&x, &y);
        assert!(!dual.truncated);
        for (a, b) in dual.coefficients.iter().zip(primal.iter()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn dual_identity_and_rank_one() {
        let y = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        let d = dual_coefficients(&DMatrix::identity(3, 3), &y);
        for (a, b) in d.coefficients.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let d = dual_coefficients(&x, &y);
        assert!(d.truncated);
        assert_eq!(d.rank, 1);
        // minimum-norm solution splits the slope equally
        assert!((d.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((d.coefficients[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_embedding_fails() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(matches!(embed(&x, 1), Err(LpError::NonPositiveEigenvalue(_))));
    }
}
