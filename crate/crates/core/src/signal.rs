//! Numerical differentiation, smoothing, and noise injection for trial data.

use crate::error::{Error, Result};
use crate::linalg::lstsq_full_rank;
use crate::models::Grid;
use crate::solver::TrialSet;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMethod {
    /// Direct second-order finite-difference stencils.
    FiniteDifference,
    /// Local least-squares polynomial fits in a Chebyshev basis.
    PolyInterp,
}

/// How trial responses are smoothed and differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentiationConfig {
    pub method: DiffMethod,
    /// Window width in samples for the local polynomial fit (odd).
    pub window: usize,
    /// Degree of the local polynomial fit.
    pub degree: usize,
    /// Gaussian pre-filter width in grid spacings; 0 disables the filter.
    pub smooth_sigma: f64,
}

impl DifferentiationConfig {
    pub fn finite_difference() -> Self {
        Self {
            method: DiffMethod::FiniteDifference,
            window: 15,
            degree: 4,
            smooth_sigma: 0.0,
        }
    }

    pub fn poly_interp(window: usize, degree: usize) -> Self {
        Self {
            method: DiffMethod::PolyInterp,
            window,
            degree,
            smooth_sigma: 0.0,
        }
    }

    pub fn with_smoothing(mut self, sigma: f64) -> Self {
        self.smooth_sigma = sigma;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.method == DiffMethod::PolyInterp {
            if self.window % 2 == 0 || self.window == 0 {
                return Err(Error::InvalidArgument(format!(
                    "fit window must be odd and positive, got {}",
                    self.window
                )));
            }
            if self.degree == 0 || self.degree >= self.window {
                return Err(Error::InvalidArgument(format!(
                    "fit degree must satisfy 0 < degree < window, got degree {} window {}",
                    self.degree, self.window
                )));
            }
            if self.window > n {
                return Err(Error::InvalidArgument(format!(
                    "fit window {} exceeds the {} grid points",
                    self.window, n
                )));
            }
        }
        if self.smooth_sigma < 0.0 {
            return Err(Error::InvalidArgument(
                "smoothing width must be nonnegative".to_string(),
            ));
        }
        Ok(())
    }
}

/// Finite-difference weights for the `m`-th derivative at `x0` from the
/// given nodes (Fornberg's recurrence).
pub fn fd_weights(nodes: &[f64], x0: f64, m: usize) -> Vec<f64> {
    let nd = nodes.len();
    assert!(nd > m, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0_f64; m + 1]; nd];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..nd {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

/// Differentiate samples on a uniform grid with direct stencils:
/// second-order central differences at interior points, one-sided
/// second-order stencils at the boundaries. Orders 1..=4.
pub fn finite_difference(u: &[f64], grid: &Grid, order: usize) -> Result<Vec<f64>> {
    if !(1..=4).contains(&order) {
        return Err(Error::DerivativeOrder { order });
    }
    let n = u.len();
    if n != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "signal length {n} does not match the {} grid points",
            grid.len()
        )));
    }
    let interior = if order <= 2 { 3 } else { 5 };
    let one_sided = order + 2;
    if n < interior.max(one_sided) {
        return Err(Error::GridTooShort { n, order });
    }

    let h = grid.spacing();
    let scale = h.powi(-(order as i32));
    let half = (interior - 1) / 2;

    // Index-space node offsets; weights are scaled by h^-order afterwards.
    let centered: Vec<f64> = (0..interior).map(|i| i as f64 - half as f64).collect();
    let w_center = fd_weights(&centered, 0.0, order);
    let edge_nodes: Vec<f64> = (0..one_sided).map(|i| i as f64).collect();

    let mut out = vec![0.0; n];
    for k in 0..n {
        if k >= half && k + half < n {
            let mut acc = 0.0;
            for (i, w) in w_center.iter().enumerate() {
                acc += w * u[k - half + i];
            }
            out[k] = acc * scale;
        } else if k < half {
            let w = fd_weights(&edge_nodes, k as f64, order);
            let mut acc = 0.0;
            for (i, wi) in w.iter().enumerate() {
                acc += wi * u[i];
            }
            out[k] = acc * scale;
        } else {
            let base = n - one_sided;
            let w = fd_weights(&edge_nodes, (k - base) as f64, order);
            let mut acc = 0.0;
            for (i, wi) in w.iter().enumerate() {
                acc += wi * u[base + i];
            }
            out[k] = acc * scale;
        }
    }
    Ok(out)
}

/// Chebyshev polynomial values `T_0..T_degree` at `t`.
fn chebyshev_row(t: f64, degree: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(degree + 1);
    row.push(1.0);
    if degree >= 1 {
        row.push(t);
    }
    for k in 2..=degree {
        let v = 2.0 * t * row[k - 1] - row[k - 2];
        row.push(v);
    }
    row
}

/// Coefficients of the derivative of a Chebyshev series.
fn chebyshev_derivative(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut b = vec![0.0; n];
    if n <= 1 {
        return b;
    }
    for k in (1..n).rev() {
        let upper = if k + 1 < n { b[k + 1] } else { 0.0 };
        b[k - 1] = upper + 2.0 * k as f64 * a[k];
    }
    b[0] *= 0.5;
    b
}

/// Clenshaw evaluation of a Chebyshev series at `t`.
fn chebyshev_eval(a: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ak in a.iter().skip(1).rev() {
        let b = 2.0 * t * b1 - b2 + ak;
        b2 = b1;
        b1 = b;
    }
    t * b1 - b2 + a[0]
}

/// Differentiate by fitting a polynomial (in a Chebyshev basis, window
/// coordinates mapped to [-1, 1]) over a sliding window and evaluating the
/// fit's derivative at the window's query point. Windows are truncated
/// asymmetrically at the boundaries.
pub fn poly_interp_derivative(
    u: &[f64],
    grid: &Grid,
    order: usize,
    config: &DifferentiationConfig,
) -> Result<Vec<f64>> {
    if config.method != DiffMethod::PolyInterp {
        return Err(Error::InvalidArgument(
            "poly_interp_derivative requires a PolyInterp config".to_string(),
        ));
    }
    if !(1..=4).contains(&order) {
        return Err(Error::DerivativeOrder { order });
    }
    let n = u.len();
    if n != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "signal length {n} does not match the {} grid points",
            grid.len()
        )));
    }
    config.validate(n)?;

    let xs = grid.points();
    let half = config.window / 2;
    let degree = config.degree;
    let mut out = vec![0.0; n];

    for k in 0..n {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(n);
        if hi - lo < degree + 1 {
            return Err(Error::IllConditionedFit { lo, hi });
        }
        let center = 0.5 * (xs[lo] + xs[hi - 1]);
        let span = 0.5 * (xs[hi - 1] - xs[lo]);

        let a = DMatrix::from_fn(hi - lo, degree + 1, |r, c| {
            chebyshev_row((xs[lo + r] - center) / span, degree)[c]
        });
        let y = DVector::from_fn(hi - lo, |r, _| u[lo + r]);
        let mut coeffs = lstsq_full_rank(&a, &y)
            .map_err(|_| Error::IllConditionedFit { lo, hi })?
            .iter()
            .copied()
            .collect::<Vec<f64>>();

        for _ in 0..order {
            coeffs = chebyshev_derivative(&coeffs);
        }
        let t_k = (xs[k] - center) / span;
        out[k] = chebyshev_eval(&coeffs, t_k) / span.powi(order as i32);
    }
    Ok(out)
}

/// Dispatch on the configured differentiation method.
pub fn differentiate(
    u: &[f64],
    grid: &Grid,
    order: usize,
    config: &DifferentiationConfig,
) -> Result<Vec<f64>> {
    match config.method {
        DiffMethod::FiniteDifference => finite_difference(u, grid, order),
        DiffMethod::PolyInterp => poly_interp_derivative(u, grid, order, config),
    }
}

fn reflect(idx: isize, n: isize) -> usize {
    let mut i = idx;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Convolve with a truncated (±4σ), renormalized Gaussian kernel using
/// mirrored boundary extension. `sigma` is in samples; 0 is the identity.
pub fn gaussian_smooth(u: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || u.len() < 2 {
        return u.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for i in -radius..=radius {
        kernel.push((-0.5 * (i as f64 / sigma).powi(2)).exp());
    }
    let total: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= total;
    }

    let n = u.len() as isize;
    (0..n)
        .map(|k| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, w)| w * u[reflect(k + j as isize - radius, n)])
                .sum()
        })
        .collect()
}

fn sample_std(u: &[f64]) -> f64 {
    let n = u.len();
    if n < 2 {
        return 0.0;
    }
    let mean = u.iter().sum::<f64>() / n as f64;
    let var = u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}

/// Add i.i.d. Gaussian noise to every response, scaled per trial by
/// `level · std(u_j)`. Forcing samples stay exact. Deterministic in the
/// seed; each trial draws from its own stream.
pub fn add_noise(trials: &TrialSet, level: f64, seed: u64) -> Result<TrialSet> {
    if level < 0.0 {
        return Err(Error::InvalidArgument(
            "noise level must be nonnegative".to_string(),
        ));
    }
    if level == 0.0 {
        return Ok(trials.clone());
    }
    let mut out = trials.clone();
    for (j, trial) in out.trials.iter_mut().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let sd = level * sample_std(&trial.u);
        for v in &mut trial.u {
            let z: f64 = rng.sample(StandardNormal);
            *v += sd * z;
        }
    }
    Ok(out)
}
