//! Small dense least-squares helpers shared by the regression and signal
//! modules.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Minimum-norm least squares via SVD. Singular values below
/// `1e-10 · σ_max` are treated as zero, so rank-deficient systems get the
/// minimum-norm solution instead of an error.
pub fn lstsq_min_norm(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return DVector::zeros(a.ncols());
    }
    svd.solve(y, 1e-10 * smax)
        .expect("SVD solve cannot fail when U and V are computed")
}

/// Full-rank least squares; errors out when the system is numerically
/// rank-deficient (smallest singular value below `1e-10 · σ_max`).
pub fn lstsq_full_rank(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < 1e-10 * smax {
        return Err(Error::InvalidArgument("rank-deficient least squares".to_string()));
    }
    Ok(svd
        .solve(y, 1e-14 * smax)
        .expect("SVD solve cannot fail when U and V are computed"))
}

/// Solve the regularized normal system `(G + λI) w = h` by Cholesky, where
/// `G = AᵀA` and `h = Aᵀy` were formed by the caller.
pub fn ridge_from_gram(gram: &DMatrix<f64>, aty: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut g = gram.clone();
    for i in 0..g.nrows() {
        g[(i, i)] += lambda;
    }
    nalgebra::Cholesky::new(g).map(|ch| ch.solve(aty))
}
