//! From a learned expansion of `u^(A)` to the operator `L`, its physical
//! parameter fields, and quality scores.
//!
//! A fitted model expresses `u^(A) = Σ c_t θ_t + c_f f`. Dividing through
//! by the forcing coefficient turns that into `L[u] = f` with
//! `φ = 1/c_f` multiplying `u^(A)` and `-c_t/c_f` multiplying every other
//! term, which is the operator we report.

use crate::error::{Error, Result};
use crate::features::{TermDescriptor, TermKind};
use crate::models::{Grid, ModelKind, ModelSpec};
use crate::regression::{select_model, tolerance_sweep_with, SparseSpatialModel, SweepParams};
use crate::signal::{differentiate, gaussian_smooth, DifferentiationConfig};
use crate::solver::{Trial, TrialSet};
use std::collections::BTreeMap;

/// Forcing coefficients smaller than this make the inversion singular.
const FORCING_COEFF_FLOOR: f64 = 1e-10;

/// The recovered operator: `L[u] = φ·u^(A) + Σ coeff_t·θ_t` with `L[u] = f`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveredOperator {
    pub lhs_order: u8,
    /// Spatial coefficient of the highest derivative.
    pub phi: Vec<f64>,
    /// Remaining operator terms and their spatial coefficient fields.
    pub operator_terms: Vec<(TermDescriptor, Vec<f64>)>,
    /// The fitted expansion the operator was derived from.
    pub source: SparseSpatialModel,
}

impl DiscoveredOperator {
    pub fn term_field(&self, label: &str) -> Option<&[f64]> {
        self.operator_terms
            .iter()
            .find(|(t, _)| t.label == label)
            .map(|(_, c)| c.as_slice())
    }
}

/// Invert a fitted expansion into the operator. Fails when the forcing
/// term is inactive or its coefficient field passes through zero.
pub fn infer_operator(model: &SparseSpatialModel) -> Result<DiscoveredOperator> {
    let f_idx = model
        .terms
        .iter()
        .position(|t| t.kind == TermKind::Forcing)
        .filter(|&l| model.active[l])
        .ok_or(Error::MissingForcingTerm)?;

    let c_f = &model.xi[f_idx];
    for (k, &v) in c_f.iter().enumerate() {
        if !(v.abs() >= FORCING_COEFF_FLOOR) {
            return Err(Error::SingularForcingCoefficient { index: k });
        }
    }

    let phi: Vec<f64> = c_f.iter().map(|v| 1.0 / v).collect();
    let mut operator_terms = Vec::new();
    for (l, term) in model.terms.iter().enumerate() {
        if l == f_idx || !model.active[l] {
            continue;
        }
        let coeff: Vec<f64> = model.xi[l]
            .iter()
            .zip(c_f)
            .map(|(c_t, cf)| -c_t / cf)
            .collect();
        operator_terms.push((term.clone(), coeff));
    }
    Ok(DiscoveredOperator {
        lhs_order: model.lhs_order,
        phi,
        operator_terms,
        source: model.clone(),
    })
}

/// Map the operator onto the model's named physical coefficients.
///
/// For every catalog model the highest-derivative coefficient carries a
/// minus sign relative to `φ`, and `q` (when the model has one) is the
/// operator's `u` coefficient. Coefficients whose carrier term is missing
/// from the operator are omitted rather than reported as zero.
pub fn extract_parameters(
    op: &DiscoveredOperator,
    model: &ModelSpec,
) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    let negated_phi: Vec<f64> = op.phi.iter().map(|v| -v).collect();
    match model.kind {
        ModelKind::LinearSturmLiouville | ModelKind::NonlinearSturmLiouville => {
            out.insert("p".to_string(), negated_phi);
            if let Some(qu) = op.term_field("u") {
                out.insert("q".to_string(), qu.to_vec());
            }
        }
        ModelKind::SecondOrderPoisson => {
            out.insert("p".to_string(), negated_phi);
        }
        ModelKind::EulerBernoulli => {
            out.insert("EI".to_string(), negated_phi);
        }
    }
    out
}

/// Relative l2 error between a learned field and the truth after trimming
/// `trim_fraction` of the domain length at each boundary.
pub fn coefficient_error(
    learned: &[f64],
    truth: &[f64],
    grid: &Grid,
    trim_fraction: f64,
) -> Result<f64> {
    if learned.len() != grid.len() || truth.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "field lengths {} / {} do not match the {} grid points",
            learned.len(),
            truth.len(),
            grid.len()
        )));
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(Error::InvalidArgument(format!(
            "trim fraction must lie in [0, 0.5), got {trim_fraction}"
        )));
    }
    let keep = grid.interior_indices(trim_fraction);
    let truth_norm = keep
        .iter()
        .map(|&k| truth[k] * truth[k])
        .sum::<f64>()
        .sqrt();
    if truth_norm == 0.0 {
        return Err(Error::ZeroTruthField);
    }
    let diff_norm = keep
        .iter()
        .map(|&k| (learned[k] - truth[k]).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(diff_norm / truth_norm)
}

/// Number of active terms that are not part of the ground truth.
pub fn spurious_term_count(model: &SparseSpatialModel, true_terms: &[&str]) -> usize {
    model
        .active_labels()
        .iter()
        .filter(|l| !true_terms.contains(&l.as_ref()))
        .count()
}

/// Number of ground-truth terms absent from the active set.
pub fn missing_term_count(model: &SparseSpatialModel, true_terms: &[&str]) -> usize {
    true_terms
        .iter()
        .filter(|l| !model.is_active(l))
        .count()
}

/// Apply the discovered operator to a trial's response: differentiate the
/// response per the config and evaluate `φ·u^(A) + Σ coeff_t·θ_t`.
pub fn predict_forcing(
    op: &DiscoveredOperator,
    trial: &Trial,
    grid: &Grid,
    diff: &DifferentiationConfig,
) -> Result<Vec<f64>> {
    let n = grid.len();
    if trial.u.len() != n {
        return Err(Error::InvalidArgument(
            "trial does not live on the given grid".to_string(),
        ));
    }
    let u = if diff.smooth_sigma > 0.0 {
        gaussian_smooth(&trial.u, diff.smooth_sigma)
    } else {
        trial.u.clone()
    };
    let order = op.lhs_order as usize;
    let mut derivs = Vec::with_capacity(order);
    for a in 1..=order {
        derivs.push(differentiate(&u, grid, a, diff)?);
    }

    let xs = grid.points();
    let mut fhat = vec![0.0; n];
    for k in 0..n {
        let derivs_at_k: Vec<f64> = derivs.iter().map(|d| d[k]).collect();
        let mut acc = op.phi[k] * derivs[order - 1][k];
        for (term, coeff) in &op.operator_terms {
            debug_assert!(term.kind != TermKind::Forcing);
            acc += coeff[k] * term.kind.evaluate(xs[k], u[k], &derivs_at_k, 0.0);
        }
        fhat[k] = acc;
    }
    Ok(fhat)
}

/// Validation score of one candidate differential order.
#[derive(Debug, Clone)]
pub struct OrderScore {
    pub order: u8,
    /// Mean interior l2 norm of `L[u_j] - f_j` over the test trials;
    /// infinite when the pipeline failed for this order.
    pub error: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OrderSelection {
    pub best: u8,
    pub scores: Vec<OrderScore>,
}

/// Interior trim used when scoring forcing reconstructions.
const SCORE_TRIM: f64 = 0.01;

fn interior_l2(values: &[f64], reference: &[f64], keep: &[usize]) -> f64 {
    keep.iter()
        .map(|&k| (values[k] - reference[k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Pick the differential order of the left-hand side: for every candidate
/// order run the full identification pipeline on the training set, apply
/// the inferred operator to held-out trials, and keep the order with the
/// smallest mean forcing-reconstruction error.
pub fn select_order(
    train: &TrialSet,
    test: &TrialSet,
    orders: &[u8],
    diff: &DifferentiationConfig,
    params: &SweepParams,
) -> Result<OrderSelection> {
    if orders.is_empty() {
        return Err(Error::InvalidArgument(
            "select_order needs at least one candidate order".to_string(),
        ));
    }
    if test.is_empty() {
        return Err(Error::InvalidArgument(
            "select_order needs a non-empty test set".to_string(),
        ));
    }
    for t in &test.trials {
        if train.trials.iter().any(|s| s.forcing == t.forcing) {
            return Err(Error::InvalidArgument(format!(
                "test forcing {} also appears in the training set",
                t.forcing
            )));
        }
    }

    let keep = train.grid.interior_indices(SCORE_TRIM);
    let mut scores = Vec::with_capacity(orders.len());
    for &order in orders {
        let run = || -> Result<f64> {
            let lib = crate::features::normalize(crate::features::assemble_system(
                train, order, diff,
            )?)?;
            let sweep = tolerance_sweep_with(&lib, params)?;
            let best = select_model(&sweep).expect("sweep is never empty");
            let op = infer_operator(best)?;
            let mut total = 0.0;
            for trial in &test.trials {
                let fhat = predict_forcing(&op, trial, &test.grid, diff)?;
                total += interior_l2(&fhat, &trial.f, &keep);
            }
            Ok(total / test.len() as f64)
        };
        match run() {
            Ok(error) => scores.push(OrderScore {
                order,
                error,
                failure: None,
            }),
            Err(e) => scores.push(OrderScore {
                order,
                error: f64::INFINITY,
                failure: Some(e.to_string()),
            }),
        }
    }

    let best = scores
        .iter()
        .min_by(|a, b| a.error.partial_cmp(&b.error).unwrap_or(core::cmp::Ordering::Equal))
        .map(|s| s.order)
        .unwrap();
    Ok(OrderSelection { best, scores })
}

/// Record of one identification or estimation run.
#[derive(Debug, Clone)]
pub struct DiscoveryReport {
    pub model: String,
    pub trials_used: usize,
    pub noise_level: f64,
    pub selected: SparseSpatialModel,
    /// Absent when the selected expansion had no forcing term.
    pub operator: Option<DiscoveredOperator>,
    /// Middle-98% relative l2 error per recovered coefficient.
    pub parameter_errors: BTreeMap<String, f64>,
    pub spurious_terms: usize,
    pub missing_terms: usize,
    pub runtime_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_term_list;
    use approx::assert_relative_eq;

    fn toy_model(active_labels: &[&str], fields: &[(&str, f64)], n: usize) -> SparseSpatialModel {
        let terms = build_term_list(2).unwrap();
        let active: Vec<bool> = terms
            .iter()
            .map(|t| active_labels.contains(&t.label.as_str()))
            .collect();
        let xi: Vec<Vec<f64>> = terms
            .iter()
            .map(|t| {
                let v = fields
                    .iter()
                    .find(|(l, _)| *l == t.label)
                    .map(|(_, c)| *c)
                    .unwrap_or(0.0);
                vec![v; n]
            })
            .collect();
        SparseSpatialModel {
            terms,
            lhs_order: 2,
            xi,
            active,
            loss: 0.0,
            epsilon: 0.0,
        }
    }

    #[test]
    fn one_term_inversion() {
        // u_xx = -(1/2) f means L = -2 u_xx.
        let model = toy_model(&["f"], &[("f", -0.5)], 7);
        let op = infer_operator(&model).unwrap();
        assert!(op.operator_terms.is_empty());
        for v in &op.phi {
            assert_relative_eq!(*v, -2.0);
        }
    }

    #[test]
    fn inference_requires_an_active_forcing_term() {
        let model = toy_model(&["u"], &[("u", 1.0)], 5);
        assert!(matches!(
            infer_operator(&model),
            Err(Error::MissingForcingTerm)
        ));

        let mut singular = toy_model(&["f"], &[("f", -0.5)], 5);
        let fi = singular.terms.iter().position(|t| t.label == "f").unwrap();
        singular.xi[fi][3] = 0.0;
        assert!(matches!(
            infer_operator(&singular),
            Err(Error::SingularForcingCoefficient { index: 3 })
        ));
    }

    #[test]
    fn operator_round_trips_back_to_the_expansion() {
        let model = toy_model(
            &["u", "u_x", "f"],
            &[("u", 0.51), ("u_x", -0.23), ("f", -0.44)],
            9,
        );
        let op = infer_operator(&model).unwrap();
        // Re-expand: c_t = -coeff_t · c_f with c_f = 1/φ.
        for (term, coeff) in &op.operator_terms {
            let l = model.terms.iter().position(|t| t.label == term.label).unwrap();
            for k in 0..9 {
                let c_f = 1.0 / op.phi[k];
                assert_relative_eq!(-coeff[k] * c_f, model.xi[l][k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn extraction_flips_the_sign_of_phi() {
        let spec = ModelSpec::linear_sturm_liouville();
        let model = toy_model(
            &["u", "u_x", "f"],
            &[("u", 0.5), ("u_x", -0.2), ("f", -0.4)],
            5,
        );
        let op = infer_operator(&model).unwrap();
        let params = extract_parameters(&op, &spec);
        // c_f = -0.4 → φ = -2.5 → p = 2.5; q = -c_u/c_f = 1.25.
        assert_relative_eq!(params["p"][0], 2.5);
        assert_relative_eq!(params["q"][0], 1.25);
    }

    #[test]
    fn poisson_extraction_reports_no_q() {
        let spec = ModelSpec::second_order_poisson();
        let model = toy_model(&["u_x", "f"], &[("u_x", -0.2), ("f", -0.4)], 5);
        let op = infer_operator(&model).unwrap();
        let params = extract_parameters(&op, &spec);
        assert!(params.contains_key("p"));
        assert!(!params.contains_key("q"));
    }

    #[test]
    fn coefficient_error_basics() {
        let grid = Grid::new(0.0, 10.0, 101).unwrap();
        let truth: Vec<f64> = grid.points().iter().map(|&x| 2.0 + x.sin()).collect();
        assert_relative_eq!(coefficient_error(&truth, &truth, &grid, 0.01).unwrap(), 0.0);

        let scaled: Vec<f64> = truth.iter().map(|v| 1.01 * v).collect();
        assert_relative_eq!(
            coefficient_error(&scaled, &truth, &grid, 0.01).unwrap(),
            0.01,
            epsilon = 1e-12
        );

        let mut corrupted = truth.clone();
        corrupted[0] += 100.0;
        corrupted[100] -= 50.0;
        assert_relative_eq!(
            coefficient_error(&corrupted, &truth, &grid, 0.01).unwrap(),
            0.0
        );

        let zeros = vec![0.0; 101];
        assert!(matches!(
            coefficient_error(&truth, &zeros, &grid, 0.01),
            Err(Error::ZeroTruthField)
        ));
    }

    #[test]
    fn term_set_scoring() {
        let truth = ["u_x", "u", "f"];
        let exact = toy_model(&["u_x", "u", "f"], &[("f", -0.4)], 4);
        assert_eq!(spurious_term_count(&exact, &truth), 0);
        assert_eq!(missing_term_count(&exact, &truth), 0);

        let extra = toy_model(&["u_x", "u", "x^3", "f"], &[("f", -0.4)], 4);
        assert_eq!(spurious_term_count(&extra, &truth), 1);

        let empty = toy_model(&[], &[], 4);
        assert_eq!(spurious_term_count(&empty, &truth), 0);
        assert_eq!(missing_term_count(&empty, &truth), 3);
    }

    #[test]
    fn zero_operator_predicts_zero_forcing() {
        let grid = Grid::new(0.0, 10.0, 64).unwrap();
        let source = toy_model(&["f"], &[("f", -0.5)], 64);
        let op = DiscoveredOperator {
            lhs_order: 2,
            phi: vec![0.0; 64],
            operator_terms: Vec::new(),
            source,
        };
        let trial = Trial {
            forcing: crate::models::ForcingSpec::new(1.0, 1.0, 0.0),
            f: grid.points().iter().map(|&x| x.sin()).collect(),
            u: grid.points().iter().map(|&x| (0.3 * x).cos()).collect(),
            shoot_params: vec![0.0],
        };
        let fhat = predict_forcing(
            &op,
            &trial,
            &grid,
            &DifferentiationConfig::finite_difference(),
        )
        .unwrap();
        assert!(fhat.iter().all(|v| *v == 0.0));
    }
}
