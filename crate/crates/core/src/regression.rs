//! Group-sparse ridge regression over the block-diagonal system.
//!
//! The solver alternates per-position ridge solves with thresholding of
//! whole term groups by the l2 norm of their coefficient field, sweeps the
//! threshold over its effective range, and scores every candidate support
//! with an information-criterion loss. Because the system is block
//! diagonal, every regression decouples into independent per-position
//! solves.

use crate::error::{Error, Result};
use crate::features::{denormalize_coefficients, CandidateLibrary, TermDescriptor};
use crate::linalg::{lstsq_min_norm, ridge_from_gram};
use nalgebra::{DMatrix, DVector};

/// A group-sparse fit: per-term spatial coefficient fields in physical
/// units. A term is either active (coefficients stored at every position)
/// or its entire row is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpatialModel {
    pub terms: Vec<TermDescriptor>,
    pub lhs_order: u8,
    /// `p` rows of `n` physical coefficients.
    pub xi: Vec<Vec<f64>>,
    pub active: Vec<bool>,
    pub loss: f64,
    /// The threshold that produced this fit.
    pub epsilon: f64,
}

impl SparseSpatialModel {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_labels(&self) -> Vec<&str> {
        self.terms
            .iter()
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|(t, _)| t.label.as_str())
            .collect()
    }

    pub fn is_active(&self, label: &str) -> bool {
        self.terms
            .iter()
            .zip(&self.active)
            .any(|(t, a)| *a && t.label == label)
    }

    /// Coefficient field of an active term.
    pub fn coefficients(&self, label: &str) -> Option<&[f64]> {
        self.terms
            .iter()
            .position(|t| t.label == label)
            .filter(|&l| self.active[l])
            .map(|l| self.xi[l].as_slice())
    }
}

/// Solver constants for the sweep: ridge weight, loss offset, ladder size,
/// thresholding passes, and how the loss counts a model's size.
#[derive(Debug, Clone, Copy)]
pub struct SweepParams {
    pub lambda: f64,
    pub beta: f64,
    pub num_eps: usize,
    pub iters: usize,
    pub count_mode: SparsityCount,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            lambda: 1e-5,
            beta: 1e-6,
            num_eps: 50,
            iters: 10,
            count_mode: SparsityCount::ActiveGroups,
        }
    }
}

/// What `k` counts in the loss `mn·ln(MSE + β) + 2k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsityCount {
    /// Number of active term groups.
    ActiveGroups,
    /// Number of nonzero coefficient slots divided by the trial count.
    NonzeroOverTrials,
}

/// Outcome of a single ridge solve.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub coefficients: DVector<f64>,
    /// Set when the design matrix was identically zero.
    pub degenerate: bool,
}

/// Minimize `‖y − Aw‖² + λ‖w‖²`. With `λ > 0` this solves the regularized
/// normal system by Cholesky; `λ = 0` falls back to minimum-norm least
/// squares. An all-zero design matrix yields the zero vector with a flag.
pub fn ridge_solve(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> RidgeSolution {
    if a.ncols() == 0 || a.iter().all(|v| *v == 0.0) {
        return RidgeSolution {
            coefficients: DVector::zeros(a.ncols()),
            degenerate: true,
        };
    }
    let coefficients = if lambda > 0.0 {
        let gram = a.tr_mul(a);
        let aty = a.tr_mul(y);
        ridge_from_gram(&gram, &aty, lambda).unwrap_or_else(|| lstsq_min_norm(a, y))
    } else {
        lstsq_min_norm(a, y)
    };
    RidgeSolution {
        coefficients,
        degenerate: false,
    }
}

fn active_indices(active: &[bool]) -> Vec<usize> {
    active
        .iter()
        .enumerate()
        .filter(|(_, a)| **a)
        .map(|(l, _)| l)
        .collect()
}

/// Per-block ridge on the active columns, from the cached Gram matrices.
/// Returns the full `p×n` coefficient array in the normalized frame.
fn solve_blocks_ridge(lib: &CandidateLibrary, active: &[bool], lambda: f64) -> Vec<Vec<f64>> {
    let p = lib.num_terms();
    let n = lib.num_positions();
    let idx = active_indices(active);
    let mut xi = vec![vec![0.0; n]; p];
    if idx.is_empty() {
        return xi;
    }
    let grams = lib.grams();
    for k in 0..n {
        let gram = grams.gram[k].select_rows(idx.iter()).select_columns(idx.iter());
        let aty = grams.aty[k].select_rows(idx.iter());
        let w = ridge_from_gram(&gram, &aty, lambda).unwrap_or_else(|| {
            let a = lib.blocks[k].select_columns(idx.iter());
            let y = DVector::from_column_slice(lib.outcome_block(k));
            lstsq_min_norm(&a, &y)
        });
        for (pos, &l) in idx.iter().enumerate() {
            xi[l][k] = w[pos];
        }
    }
    xi
}

/// Per-block minimum-norm least squares on the active columns (the
/// unbiased refit after thresholding has settled).
fn solve_blocks_lstsq(lib: &CandidateLibrary, active: &[bool]) -> Vec<Vec<f64>> {
    let p = lib.num_terms();
    let n = lib.num_positions();
    let idx = active_indices(active);
    let mut xi = vec![vec![0.0; n]; p];
    if idx.is_empty() {
        return xi;
    }
    for k in 0..n {
        let a = lib.blocks[k].select_columns(idx.iter());
        let y = DVector::from_column_slice(lib.outcome_block(k));
        let w = lstsq_min_norm(&a, &y);
        for (pos, &l) in idx.iter().enumerate() {
            xi[l][k] = w[pos];
        }
    }
    xi
}

fn group_norms(xi: &[Vec<f64>]) -> Vec<f64> {
    xi.iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Sum of squared residuals in the normalized frame.
fn normalized_sse(lib: &CandidateLibrary, xi: &[Vec<f64>], active: &[bool]) -> f64 {
    let m = lib.num_trials();
    let n = lib.num_positions();
    let idx = active_indices(active);
    let mut sse = 0.0;
    for k in 0..n {
        let y = lib.outcome_block(k);
        let block = &lib.blocks[k];
        for j in 0..m {
            let mut pred = 0.0;
            for &l in &idx {
                pred += block[(j, l)] * xi[l][k];
            }
            let r = y[j] - pred;
            sse += r * r;
        }
    }
    sse
}

fn loss_from_sse(sse: f64, rows: f64, k: f64, beta: f64) -> f64 {
    rows * (sse / rows + beta).ln() + 2.0 * k
}

fn sparsity_k(model_active: &[bool], xi: &[Vec<f64>], m: usize, mode: SparsityCount) -> f64 {
    match mode {
        SparsityCount::ActiveGroups => {
            model_active.iter().filter(|a| **a).count() as f64
        }
        SparsityCount::NonzeroOverTrials => {
            let nonzero: usize = xi
                .iter()
                .map(|row| row.iter().filter(|v| **v != 0.0).count())
                .sum();
            nonzero as f64 / m as f64
        }
    }
}

/// Information-criterion loss of a fitted model against the library, in
/// the normalized frame: `mn·ln(MSE + β) + 2k` with `k` = active groups.
pub fn loss(lib: &CandidateLibrary, model: &SparseSpatialModel, beta: f64) -> f64 {
    loss_with(lib, model, beta, SparsityCount::ActiveGroups)
}

/// Loss with an explicit choice of the sparsity count `k`.
pub fn loss_with(
    lib: &CandidateLibrary,
    model: &SparseSpatialModel,
    beta: f64,
    mode: SparsityCount,
) -> f64 {
    // Bring the physical coefficients back into the normalized frame.
    let xi_norm: Vec<Vec<f64>> = model
        .xi
        .iter()
        .enumerate()
        .map(|(l, row)| {
            row.iter()
                .map(|v| v * lib.column_scales[l] / lib.outcome_scale)
                .collect()
        })
        .collect();
    let sse = normalized_sse(lib, &xi_norm, &model.active);
    let rows = (lib.num_trials() * lib.num_positions()) as f64;
    let k = sparsity_k(&model.active, &model.xi, lib.num_trials(), mode);
    loss_from_sse(sse, rows, k, beta)
}

/// Sequential grouped threshold ridge regression at one threshold.
///
/// Starts from the per-block ridge estimate, repeatedly zeroes the groups
/// whose coefficient-field norm is at or below `epsilon` and re-solves on
/// the survivors, then refits the settled support per block without the
/// ridge penalty so reported coefficients are unbiased. Coefficients come
/// back denormalized; the loss is evaluated in the normalized frame.
pub fn sgtr(
    lib: &CandidateLibrary,
    lambda: f64,
    epsilon: f64,
    iters: usize,
) -> Result<SparseSpatialModel> {
    let params = SweepParams {
        lambda,
        iters,
        ..SweepParams::default()
    };
    sgtr_with(lib, &params, epsilon)
}

/// `sgtr` with explicit sweep parameters.
pub fn sgtr_with(
    lib: &CandidateLibrary,
    params: &SweepParams,
    epsilon: f64,
) -> Result<SparseSpatialModel> {
    if !lib.normalized {
        return Err(Error::NotNormalized);
    }
    let p = lib.num_terms();
    let mut active = vec![true; p];
    let mut xi = solve_blocks_ridge(lib, &active, params.lambda);

    for _ in 0..params.iters {
        let norms = group_norms(&xi);
        let mut eliminated = false;
        for l in 0..p {
            if active[l] && norms[l] <= epsilon {
                active[l] = false;
                eliminated = true;
            }
        }
        if active.iter().all(|a| !a) {
            return Ok(empty_model(lib, params, epsilon));
        }
        if !eliminated {
            break;
        }
        xi = solve_blocks_ridge(lib, &active, params.lambda);
        debug_assert!(xi
            .iter()
            .zip(&active)
            .all(|(row, a)| *a || row.iter().all(|v| *v == 0.0)));
    }

    let xi = solve_blocks_lstsq(lib, &active);
    let sse = normalized_sse(lib, &xi, &active);
    let rows = (lib.num_trials() * lib.num_positions()) as f64;
    let xi_phys = denormalize_coefficients(lib, &xi);
    let k = sparsity_k(&active, &xi_phys, lib.num_trials(), params.count_mode);
    Ok(SparseSpatialModel {
        terms: lib.terms.clone(),
        lhs_order: lib.lhs_order,
        xi: xi_phys,
        active,
        loss: loss_from_sse(sse, rows, k, params.beta),
        epsilon,
    })
}

fn empty_model(lib: &CandidateLibrary, params: &SweepParams, epsilon: f64) -> SparseSpatialModel {
    let p = lib.num_terms();
    let n = lib.num_positions();
    let sse: f64 = lib.outcome.iter().map(|v| v * v).sum();
    let rows = (lib.num_trials() * n) as f64;
    SparseSpatialModel {
        terms: lib.terms.clone(),
        lhs_order: lib.lhs_order,
        xi: vec![vec![0.0; n]; p],
        active: vec![false; p],
        loss: loss_from_sse(sse, rows, 0.0, params.beta),
        epsilon,
    }
}

/// The effective threshold range: the smallest and largest group norms of
/// the full per-block ridge solution.
pub fn compute_epsilon_range(lib: &CandidateLibrary, lambda: f64) -> Result<(f64, f64)> {
    if !lib.normalized {
        return Err(Error::NotNormalized);
    }
    let active = vec![true; lib.num_terms()];
    let norms = group_norms(&solve_blocks_ridge(lib, &active, lambda));
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let max = norms.iter().copied().fold(0.0_f64, f64::max);
    Ok((min, max))
}

/// Run the thresholding solver across `num_eps` log-spaced thresholds
/// spanning the effective range, in ascending threshold order.
pub fn tolerance_sweep(
    lib: &CandidateLibrary,
    lambda: f64,
    num_eps: usize,
) -> Result<Vec<SparseSpatialModel>> {
    let params = SweepParams {
        lambda,
        num_eps,
        ..SweepParams::default()
    };
    tolerance_sweep_with(lib, &params)
}

/// `tolerance_sweep` with explicit sweep parameters.
pub fn tolerance_sweep_with(
    lib: &CandidateLibrary,
    params: &SweepParams,
) -> Result<Vec<SparseSpatialModel>> {
    if params.num_eps < 2 {
        return Err(Error::InvalidArgument(
            "the tolerance sweep needs at least 2 thresholds".to_string(),
        ));
    }
    let (mut eps_min, eps_max) = compute_epsilon_range(lib, params.lambda)?;
    if !(eps_min > 0.0) {
        eps_min = eps_max.max(f64::MIN_POSITIVE) * 1e-15;
    }
    let steps = params.num_eps - 1;
    let (ln_lo, ln_hi) = (eps_min.ln(), eps_max.ln());
    let mut out = Vec::with_capacity(params.num_eps);
    for i in 0..=steps {
        let eps = if i == 0 {
            // Keep the lowest threshold strictly below the smallest group
            // norm so the bottom of the sweep eliminates nothing.
            eps_min * (1.0 - 1e-12)
        } else if i == steps {
            eps_max
        } else {
            (ln_lo + (ln_hi - ln_lo) * i as f64 / steps as f64).exp()
        };
        out.push(sgtr_with(lib, params, eps)?);
    }
    Ok(out)
}

/// The minimum-loss model; ties prefer fewer active terms, then a larger
/// threshold.
pub fn select_model(sweep: &[SparseSpatialModel]) -> Option<&SparseSpatialModel> {
    sweep.iter().min_by(|a, b| {
        a.loss
            .partial_cmp(&b.loss)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.active_count().cmp(&b.active_count()))
            .then(
                b.epsilon
                    .partial_cmp(&a.epsilon)
                    .unwrap_or(core::cmp::Ordering::Equal),
            )
    })
}

/// Ordinary least squares per block, restricted to a fixed term set; no
/// thresholding. Used when the operator's structure is already known.
pub fn known_operator_fit(
    lib: &CandidateLibrary,
    fixed_terms: &[&str],
) -> Result<SparseSpatialModel> {
    if !lib.normalized {
        return Err(Error::NotNormalized);
    }
    let mut active = vec![false; lib.num_terms()];
    for label in fixed_terms {
        let l = lib
            .term_index(label)
            .ok_or_else(|| Error::UnknownTerm(label.to_string()))?;
        active[l] = true;
    }
    let xi = solve_blocks_lstsq(lib, &active);
    let sse = normalized_sse(lib, &xi, &active);
    let rows = (lib.num_trials() * lib.num_positions()) as f64;
    let xi_phys = denormalize_coefficients(lib, &xi);
    let params = SweepParams::default();
    let k = sparsity_k(&active, &xi_phys, lib.num_trials(), params.count_mode);
    Ok(SparseSpatialModel {
        terms: lib.terms.clone(),
        lhs_order: lib.lhs_order,
        xi: xi_phys,
        active,
        loss: loss_from_sse(sse, rows, k, params.beta),
        epsilon: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble_system, normalize, build_term_list};
    use crate::models::{forcing_set, Grid, ModelSpec};
    use crate::signal::DifferentiationConfig;
    use crate::solver::generate_trials;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn ridge_identity_cases() {
        let a = DMatrix::<f64>::identity(4, 4);
        let y = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let w = ridge_solve(&a, &y, 0.0);
        assert!(!w.degenerate);
        for i in 0..4 {
            assert_relative_eq!(w.coefficients[i], y[i], epsilon = 1e-12);
        }
        let w = ridge_solve(&a, &y, 1.0);
        for i in 0..4 {
            assert_relative_eq!(w.coefficients[i], y[i] / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ridge_flags_a_zero_design_matrix() {
        let a = DMatrix::<f64>::zeros(6, 3);
        let y = DVector::from_element(6, 1.0);
        let w = ridge_solve(&a, &y, 1e-5);
        assert!(w.degenerate);
        assert!(w.coefficients.iter().all(|v| *v == 0.0));
    }

    fn normalized_linear_sl_library(m: usize, n: usize) -> CandidateLibrary {
        let model = ModelSpec::linear_sturm_liouville();
        let grid = Grid::new(0.0, 10.0, n).unwrap();
        let forcings = forcing_set(&model, m, 3).unwrap();
        let trials = generate_trials(&model, &forcings, &grid).unwrap();
        normalize(
            assemble_system(&trials, 2, &DifferentiationConfig::finite_difference()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn sweep_endpoints_show_the_extreme_behaviors() {
        let lib = normalized_linear_sl_library(8, 120);
        let (eps_min, eps_max) = compute_epsilon_range(&lib, 1e-5).unwrap();
        assert!(eps_min <= eps_max);

        // At the top threshold the very first pass removes every group.
        let top = sgtr(&lib, 1e-5, eps_max, 10).unwrap();
        assert_eq!(top.active_count(), 0);

        // Below the bottom threshold nothing is eliminated.
        let bottom = sgtr(&lib, 1e-5, eps_min * (1.0 - 1e-9), 10).unwrap();
        assert_eq!(bottom.active_count(), lib.num_terms());

        let sweep = tolerance_sweep(&lib, 1e-5, 2).unwrap();
        assert_eq!(sweep[0].active_count(), lib.num_terms());
        assert_eq!(sweep[1].active_count(), 0);
    }

    #[test]
    fn slightly_above_the_minimum_removes_exactly_the_weakest_group() {
        let lib = normalized_linear_sl_library(8, 120);
        let (eps_min, _) = compute_epsilon_range(&lib, 1e-5).unwrap();
        // One pass only, so cascading eliminations cannot kick in.
        let one_pass = sgtr(&lib, 1e-5, eps_min * (1.0 + 1e-9), 1).unwrap();
        assert_eq!(one_pass.active_count(), lib.num_terms() - 1);
    }

    #[test]
    fn sweep_is_sorted_and_sized() {
        let lib = normalized_linear_sl_library(6, 80);
        let sweep = tolerance_sweep(&lib, 1e-5, 9).unwrap();
        assert_eq!(sweep.len(), 9);
        for pair in sweep.windows(2) {
            assert!(pair[0].epsilon <= pair[1].epsilon);
        }
    }

    #[test]
    fn loss_matches_the_closed_form_on_a_zero_residual_fit() {
        // One term, one exactly explained outcome.
        let terms = vec![build_term_list(1).unwrap().remove(1)]; // "u"
        let grid = Grid::new(0.0, 10.0, 5).unwrap();
        let m = 3;
        let blocks: Vec<DMatrix<f64>> = (0..5)
            .map(|k| DMatrix::from_fn(m, 1, |j, _| 1.0 + (j + k) as f64))
            .collect();
        let outcome: Vec<f64> = blocks
            .iter()
            .flat_map(|b| b.column(0).iter().map(|v| 2.0 * v).collect::<Vec<_>>())
            .collect();
        let lib = CandidateLibrary::from_parts(terms, 1, grid, m, blocks, outcome);
        let lib = normalize(lib).unwrap();

        let fit = known_operator_fit(&lib, &["u"]).unwrap();
        assert_relative_eq!(fit.xi[0][0], 2.0, epsilon = 1e-9);

        let beta = 1e-6_f64;
        let rows = (lib.num_trials() * lib.num_positions()) as f64;
        let expected = rows * beta.ln() + 2.0;
        assert_relative_eq!(loss(&lib, &fit, beta), expected, epsilon = 1e-6);
    }

    #[test]
    fn a_spurious_zero_residual_term_costs_exactly_two() {
        // Library with the true term u plus a constant column; the outcome
        // is already explained exactly by u alone, so the extra term only
        // pays the size penalty.
        let terms = vec![
            TermDescriptor::new(crate::features::TermKind::UPower(1)),
            TermDescriptor::new(crate::features::TermKind::Constant),
        ];
        let blocks: Vec<DMatrix<f64>> = (0..5)
            .map(|k| {
                DMatrix::from_fn(3, 2, |j, l| {
                    if l == 0 {
                        1.0 + (j as f64) * 0.7 + (k as f64) * 0.3
                    } else {
                        1.0
                    }
                })
            })
            .collect();
        let outcome: Vec<f64> = blocks
            .iter()
            .flat_map(|b| b.column(0).iter().map(|v| 2.0 * v).collect::<Vec<_>>())
            .collect();
        let lib = normalize(CandidateLibrary::from_parts(
            terms,
            1,
            Grid::new(0.0, 10.0, 5).unwrap(),
            3,
            blocks,
            outcome,
        ))
        .unwrap();
        let beta = 1e-6_f64;
        let full = known_operator_fit(&lib, &["u", "1"]).unwrap();
        let just_u = known_operator_fit(&lib, &["u"]).unwrap();
        assert_relative_eq!(
            loss(&lib, &full, beta) - loss(&lib, &just_u, beta),
            2.0,
            epsilon = 1e-3
        );
    }

    #[test]
    fn epsilon_range_collapses_for_a_single_term() {
        let terms = vec![build_term_list(1).unwrap().remove(1)];
        let grid = Grid::new(0.0, 10.0, 6).unwrap();
        let blocks: Vec<DMatrix<f64>> = (0..6)
            .map(|k| DMatrix::from_fn(2, 1, |j, _| 1.0 + (j * 2 + k) as f64))
            .collect();
        let outcome: Vec<f64> = blocks
            .iter()
            .flat_map(|b| b.column(0).iter().map(|v| 0.5 * v).collect::<Vec<_>>())
            .collect();
        let lib = normalize(CandidateLibrary::from_parts(terms, 1, grid, 2, blocks, outcome))
            .unwrap();
        let (lo, hi) = compute_epsilon_range(&lib, 1e-5).unwrap();
        assert_relative_eq!(lo, hi);
    }

    #[test]
    fn selection_prefers_low_loss_then_sparsity() {
        let lib = normalized_linear_sl_library(6, 80);
        let sweep = tolerance_sweep(&lib, 1e-5, 12).unwrap();
        let best = select_model(&sweep).unwrap();
        assert!(sweep.iter().all(|m| best.loss <= m.loss));
        assert_eq!(select_model(&sweep[3..4]).unwrap().epsilon, sweep[3].epsilon);
    }

    #[test]
    fn known_fit_rejects_unknown_labels() {
        let lib = normalized_linear_sl_library(4, 60);
        assert!(matches!(
            known_operator_fit(&lib, &["u", "nope"]),
            Err(Error::UnknownTerm(_))
        ));
    }

    #[test]
    fn unnormalized_library_is_rejected() {
        let model = ModelSpec::linear_sturm_liouville();
        let grid = Grid::new(0.0, 10.0, 60).unwrap();
        let forcings = forcing_set(&model, 4, 3).unwrap();
        let trials = generate_trials(&model, &forcings, &grid).unwrap();
        let lib =
            assemble_system(&trials, 2, &DifferentiationConfig::finite_difference()).unwrap();
        assert!(matches!(sgtr(&lib, 1e-5, 0.1, 10), Err(Error::NotNormalized)));
        assert!(compute_epsilon_range(&lib, 1e-5).is_err());
        assert!(known_operator_fit(&lib, &["u"]).is_err());
    }
}
