//! Candidate-term library and the stacked regression system.
//!
//! Every spatial position `x_k` gets a dense block `Θ^(k) ∈ R^{m×p}`
//! holding the `p` candidate functions evaluated for all `m` trials; the
//! implicit full system is block diagonal over positions. A group ties one
//! term's column across all positions, so thresholding keeps or drops a
//! term everywhere at once.

use crate::error::{Error, Result};
use crate::models::Grid;
use crate::signal::{differentiate, gaussian_smooth, DifferentiationConfig};
use crate::solver::TrialSet;
use nalgebra::{DMatrix, DVector};

/// Symbolic identity of one candidate term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    /// Column of ones.
    Constant,
    /// `u^d`, d = 1..=5.
    UPower(u8),
    /// `x^d`, d = 1..=5.
    XPower(u8),
    /// `d^a u / dx^a`, a = 1..lhs_order.
    Derivative(u8),
    /// `u^d · d^a u / dx^a`.
    UPowerTimesDerivative(u8, u8),
    /// The forcing samples.
    Forcing,
}

impl TermKind {
    pub fn label(&self) -> String {
        match self {
            TermKind::Constant => "1".to_string(),
            TermKind::UPower(1) => "u".to_string(),
            TermKind::UPower(d) => format!("u^{d}"),
            TermKind::XPower(1) => "x".to_string(),
            TermKind::XPower(d) => format!("x^{d}"),
            TermKind::Derivative(a) => format!("u_{}", "x".repeat(*a as usize)),
            TermKind::UPowerTimesDerivative(d, a) => format!(
                "{}*{}",
                TermKind::UPower(*d).label(),
                TermKind::Derivative(*a).label()
            ),
            TermKind::Forcing => "f".to_string(),
        }
    }

    /// Evaluate the term from the response value, its derivatives
    /// (`derivs[a-1]` is the order-`a` derivative), the position, and the
    /// forcing value.
    pub fn evaluate(&self, x: f64, u: f64, derivs: &[f64], f: f64) -> f64 {
        match self {
            TermKind::Constant => 1.0,
            TermKind::UPower(d) => u.powi(*d as i32),
            TermKind::XPower(d) => x.powi(*d as i32),
            TermKind::Derivative(a) => derivs[*a as usize - 1],
            TermKind::UPowerTimesDerivative(d, a) => {
                u.powi(*d as i32) * derivs[*a as usize - 1]
            }
            TermKind::Forcing => f,
        }
    }
}

/// A candidate term together with its canonical label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermDescriptor {
    pub kind: TermKind,
    pub label: String,
}

impl TermDescriptor {
    pub fn new(kind: TermKind) -> Self {
        Self {
            label: kind.label(),
            kind,
        }
    }
}

/// The canonical term list for a left-hand side of order `lhs_order`:
/// constant; powers of u; powers of x; derivatives below the outcome
/// order; products of u powers with those derivatives; the forcing.
pub fn build_term_list(lhs_order: u8) -> Result<Vec<TermDescriptor>> {
    if !(1..=4).contains(&lhs_order) {
        return Err(Error::InvalidArgument(format!(
            "left-hand-side order must be 1..=4, got {lhs_order}"
        )));
    }
    let mut terms = vec![TermDescriptor::new(TermKind::Constant)];
    for d in 1..=5 {
        terms.push(TermDescriptor::new(TermKind::UPower(d)));
    }
    for d in 1..=5 {
        terms.push(TermDescriptor::new(TermKind::XPower(d)));
    }
    for a in 1..lhs_order {
        terms.push(TermDescriptor::new(TermKind::Derivative(a)));
    }
    for d in 1..=5 {
        for a in 1..lhs_order {
            terms.push(TermDescriptor::new(TermKind::UPowerTimesDerivative(d, a)));
        }
    }
    terms.push(TermDescriptor::new(TermKind::Forcing));
    Ok(terms)
}

/// Per-block Gram matrices cached after normalization so repeated ridge
/// solves touch `p×p` systems instead of the raw blocks.
#[derive(Debug, Clone)]
pub(crate) struct BlockGrams {
    pub gram: Vec<DMatrix<f64>>,
    pub aty: Vec<DVector<f64>>,
}

/// The assembled regression system: per-position blocks, the stacked
/// outcome (position-major, trial-minor), and normalization scales.
#[derive(Debug, Clone)]
pub struct CandidateLibrary {
    pub terms: Vec<TermDescriptor>,
    pub lhs_order: u8,
    pub grid: Grid,
    pub trial_count: usize,
    /// One `m×p` block per grid position.
    pub blocks: Vec<DMatrix<f64>>,
    /// Stacked outcome, length `m·n`: all trials at `x_1`, then `x_2`, ...
    pub outcome: Vec<f64>,
    /// One positive scale per term (shared by the whole group).
    pub column_scales: Vec<f64>,
    pub outcome_scale: f64,
    pub normalized: bool,
    grams: Option<BlockGrams>,
}

impl CandidateLibrary {
    /// Assemble an unnormalized library from raw parts (testing hook).
    pub fn from_parts(
        terms: Vec<TermDescriptor>,
        lhs_order: u8,
        grid: Grid,
        trial_count: usize,
        blocks: Vec<DMatrix<f64>>,
        outcome: Vec<f64>,
    ) -> Self {
        let p = terms.len();
        Self {
            terms,
            lhs_order,
            grid,
            trial_count,
            blocks,
            outcome,
            column_scales: vec![1.0; p],
            outcome_scale: 1.0,
            normalized: false,
            grams: None,
        }
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn num_positions(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_trials(&self) -> usize {
        self.trial_count
    }

    /// The outcome samples belonging to position `k`.
    pub fn outcome_block(&self, k: usize) -> &[f64] {
        let m = self.trial_count;
        &self.outcome[k * m..(k + 1) * m]
    }

    pub fn term_index(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == label)
    }

    /// Replace the stacked outcome (only before normalization).
    pub fn replace_outcome(&mut self, outcome: Vec<f64>) -> Result<()> {
        if self.normalized {
            return Err(Error::InvalidArgument(
                "cannot replace the outcome of a normalized library".to_string(),
            ));
        }
        if outcome.len() != self.outcome.len() {
            return Err(Error::InvalidArgument(format!(
                "outcome length {} does not match m·n = {}",
                outcome.len(),
                self.outcome.len()
            )));
        }
        self.outcome = outcome;
        Ok(())
    }

    pub(crate) fn grams(&self) -> &BlockGrams {
        self.grams
            .as_ref()
            .expect("grams are cached when the library is normalized")
    }
}

/// Evaluate every candidate term for every trial at every position and
/// stack the order-`lhs_order` derivative as the outcome. Responses are
/// smoothed first when the config asks for it; forcings stay raw.
pub fn assemble_system(
    trials: &TrialSet,
    lhs_order: u8,
    diff: &DifferentiationConfig,
) -> Result<CandidateLibrary> {
    if trials.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot assemble a library from zero trials".to_string(),
        ));
    }
    let grid = &trials.grid;
    let n = grid.len();
    let m = trials.len();
    diff.validate(n)?;
    let terms = build_term_list(lhs_order)?;
    let p = terms.len();

    // Smoothed responses and their derivatives up to the outcome order.
    let mut responses: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut derivatives: Vec<Vec<Vec<f64>>> = Vec::with_capacity(m);
    for trial in &trials.trials {
        let u = if diff.smooth_sigma > 0.0 {
            gaussian_smooth(&trial.u, diff.smooth_sigma)
        } else {
            trial.u.clone()
        };
        let mut per_order = Vec::with_capacity(lhs_order as usize);
        for a in 1..=lhs_order as usize {
            per_order.push(differentiate(&u, grid, a, diff)?);
        }
        responses.push(u);
        derivatives.push(per_order);
    }

    let xs = grid.points();
    let mut blocks = Vec::with_capacity(n);
    for k in 0..n {
        blocks.push(DMatrix::from_fn(m, p, |j, l| {
            let derivs_at_k: Vec<f64> = derivatives[j].iter().map(|d| d[k]).collect();
            terms[l].kind.evaluate(
                xs[k],
                responses[j][k],
                &derivs_at_k,
                trials.trials[j].f[k],
            )
        }));
    }

    let mut outcome = Vec::with_capacity(m * n);
    for k in 0..n {
        for j in 0..m {
            outcome.push(derivatives[j][lhs_order as usize - 1][k]);
        }
    }

    Ok(CandidateLibrary::from_parts(
        terms,
        lhs_order,
        grid.clone(),
        m,
        blocks,
        outcome,
    ))
}

/// Rescale every term's stacked column to unit norm and the stacked
/// outcome to norm `√m`, recording the scales for later denormalization.
pub fn normalize(mut lib: CandidateLibrary) -> Result<CandidateLibrary> {
    if lib.normalized {
        return Err(Error::InvalidArgument(
            "library is already normalized".to_string(),
        ));
    }
    let p = lib.num_terms();
    let m = lib.trial_count;

    let mut scales = vec![0.0_f64; p];
    for block in &lib.blocks {
        for l in 0..p {
            scales[l] += block.column(l).norm_squared();
        }
    }
    for (l, s) in scales.iter_mut().enumerate() {
        *s = s.sqrt();
        if *s == 0.0 {
            return Err(Error::ZeroNormColumn(lib.terms[l].label.clone()));
        }
    }
    for block in &mut lib.blocks {
        for l in 0..p {
            let mut col = block.column_mut(l);
            col /= scales[l];
        }
    }

    let outcome_norm = lib.outcome.iter().map(|v| v * v).sum::<f64>().sqrt();
    if outcome_norm == 0.0 {
        return Err(Error::InvalidArgument(
            "outcome vector is identically zero".to_string(),
        ));
    }
    let outcome_scale = outcome_norm / (m as f64).sqrt();
    for v in &mut lib.outcome {
        *v /= outcome_scale;
    }

    let gram = lib.blocks.iter().map(|b| b.tr_mul(b)).collect();
    let aty = lib
        .blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let y = DVector::from_column_slice(lib.outcome_block(k));
            b.tr_mul(&y)
        })
        .collect();

    lib.column_scales = scales;
    lib.outcome_scale = outcome_scale;
    lib.normalized = true;
    lib.grams = Some(BlockGrams { gram, aty });
    Ok(lib)
}

/// Map coefficients from the normalized frame back to physical units:
/// `ξ_phys[l][k] = ξ_norm[l][k] · outcome_scale / column_scale[l]`.
pub fn denormalize_coefficients(
    lib: &CandidateLibrary,
    xi_normalized: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    xi_normalized
        .iter()
        .enumerate()
        .map(|(l, row)| {
            row.iter()
                .map(|v| v * lib.outcome_scale / lib.column_scales[l])
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{forcing_set, ForcingSpec, ModelSpec};
    use crate::solver::generate_trials;
    use approx::assert_relative_eq;

    fn linear_sl_trials(m: usize, n: usize) -> TrialSet {
        let model = ModelSpec::linear_sturm_liouville();
        let grid = Grid::new(0.0, 10.0, n).unwrap();
        let forcings = forcing_set(&model, m, 11).unwrap();
        generate_trials(&model, &forcings, &grid).unwrap()
    }

    #[test]
    fn term_counts_follow_the_construction_rule() {
        assert_eq!(build_term_list(1).unwrap().len(), 12);
        assert_eq!(build_term_list(2).unwrap().len(), 18);
        assert_eq!(build_term_list(3).unwrap().len(), 24);
        assert_eq!(build_term_list(4).unwrap().len(), 30);
        assert!(build_term_list(0).is_err());
        assert!(build_term_list(5).is_err());
    }

    #[test]
    fn term_labels_are_canonical_and_unique() {
        let terms = build_term_list(4).unwrap();
        let labels: Vec<&str> = terms.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(labels[0], "1");
        assert!(labels.contains(&"u"));
        assert!(labels.contains(&"u^5"));
        assert!(labels.contains(&"x"));
        assert!(labels.contains(&"x^3"));
        assert!(labels.contains(&"u_x"));
        assert!(labels.contains(&"u_xxx"));
        assert!(labels.contains(&"u^2*u_xx"));
        assert_eq!(*labels.last().unwrap(), "f");
        let mut dedup = labels.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), labels.len());
    }

    #[test]
    fn block_entries_match_direct_evaluation() {
        let trials = linear_sl_trials(4, 60);
        let lib = assemble_system(&trials, 2, &DifferentiationConfig::finite_difference())
            .unwrap();
        assert_eq!(lib.num_positions(), 60);
        assert_eq!(lib.blocks[0].nrows(), 4);
        assert_eq!(lib.blocks[0].ncols(), 18);
        assert_eq!(lib.outcome.len(), 4 * 60);

        let iu = lib.term_index("u").unwrap();
        let ix2 = lib.term_index("x^2").unwrap();
        let iff = lib.term_index("f").unwrap();
        let xs = trials.grid.points();
        for k in [0, 17, 59] {
            for j in 0..4 {
                assert_eq!(lib.blocks[k][(j, iu)], trials.trials[j].u[k]);
                assert_eq!(lib.blocks[k][(j, iff)], trials.trials[j].f[k]);
                assert_relative_eq!(lib.blocks[k][(j, ix2)], xs[k] * xs[k]);
            }
        }
    }

    #[test]
    fn clean_linear_sl_satisfies_the_true_expansion() {
        let trials = linear_sl_trials(6, 500);
        let model = ModelSpec::linear_sturm_liouville();
        let lib = assemble_system(&trials, 2, &DifferentiationConfig::finite_difference())
            .unwrap();
        let m = lib.num_trials();
        let interior = trials.grid.interior_indices(0.01);
        let mut worst = 0.0_f64;
        for &k in &interior {
            let x = trials.grid.points()[k];
            let e = model.true_expansion(x);
            for j in 0..m {
                let mut pred = 0.0;
                for (label, c) in &e.terms {
                    let idx = lib.term_index(label).unwrap();
                    pred += c * lib.blocks[k][(j, idx)];
                }
                worst = worst.max((lib.outcome_block(k)[j] - pred).abs());
            }
        }
        assert!(worst < 1e-2, "max interior expansion residual {worst}");
    }

    #[test]
    fn normalization_produces_unit_columns_and_target_outcome_norm() {
        let trials = linear_sl_trials(5, 80);
        let lib = assemble_system(&trials, 2, &DifferentiationConfig::finite_difference())
            .unwrap();
        let lib = normalize(lib).unwrap();
        for l in 0..lib.num_terms() {
            let norm: f64 = lib
                .blocks
                .iter()
                .map(|b| b.column(l).norm_squared())
                .sum::<f64>()
                .sqrt();
            assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
        }
        let outcome_norm = lib.outcome.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(outcome_norm, (lib.num_trials() as f64).sqrt(), epsilon = 1e-12);
        assert!(normalize(lib).is_err());
    }

    #[test]
    fn denormalization_round_trips() {
        let trials = linear_sl_trials(5, 80);
        let lib = normalize(
            assemble_system(&trials, 2, &DifferentiationConfig::finite_difference()).unwrap(),
        )
        .unwrap();
        let p = lib.num_terms();
        let n = lib.num_positions();
        let xi: Vec<Vec<f64>> = (0..p)
            .map(|l| (0..n).map(|k| (l as f64 + 1.0) * 0.1 + k as f64 * 1e-3).collect())
            .collect();
        let phys = denormalize_coefficients(&lib, &xi);
        let back: Vec<Vec<f64>> = phys
            .iter()
            .enumerate()
            .map(|(l, row)| {
                row.iter()
                    .map(|v| v * lib.column_scales[l] / lib.outcome_scale)
                    .collect()
            })
            .collect();
        for l in 0..p {
            for k in 0..n {
                assert_relative_eq!(back[l][k], xi[l][k], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn zero_response_column_is_rejected_by_name() {
        let model = ModelSpec::linear_sturm_liouville();
        let grid = Grid::new(0.0, 10.0, 60).unwrap();
        // Zero forcing with homogeneous boundaries gives u ≡ 0.
        let trials =
            generate_trials(&model, &[ForcingSpec::new(0.0, 1.0, 0.0)], &grid).unwrap();
        let lib = assemble_system(&trials, 2, &DifferentiationConfig::finite_difference())
            .unwrap();
        match normalize(lib) {
            Err(Error::ZeroNormColumn(label)) => assert_eq!(label, "u"),
            other => panic!("expected a zero-norm error, got {other:?}"),
        }
    }

    #[test]
    fn groups_partition_the_coefficient_slots() {
        let trials = linear_sl_trials(3, 40);
        let lib = assemble_system(&trials, 2, &DifferentiationConfig::finite_difference())
            .unwrap();
        // p groups of n slots each: p·n total.
        assert_eq!(
            lib.num_terms() * lib.num_positions(),
            lib.blocks.len() * lib.blocks[0].ncols()
        );
    }
}
