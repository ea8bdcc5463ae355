//! Benchmark boundary value problem models.
//!
//! Four forced 1-D models on `x ∈ [0, 10]` with spatially varying
//! coefficients: a linear Sturm-Liouville operator, a quadratic nonlinear
//! variant, a second-order diffusion (Poisson) operator, and an
//! Euler-Bernoulli beam with stepwise flexural rigidity. Each model knows
//! its ground-truth coefficient functions (with analytic derivatives), its
//! boundary conditions, and the family of sinusoidal forcings used to
//! probe it.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Uniform discretization of the interval `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    points: Vec<f64>,
}

impl Grid {
    /// Build an equispaced grid with `n` points, endpoints included.
    ///
    /// Requires `a < b` and `n >= 5` (fourth-order stencils need at least
    /// five points).
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidArgument(format!(
                "grid endpoints must be finite with a < b, got [{a}, {b}]"
            )));
        }
        if n < 5 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 5 points, got {n}"
            )));
        }
        let h = (b - a) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|k| a + k as f64 * h).collect();
        // Pin the endpoints so boundary conditions compare exactly.
        points[0] = a;
        points[n - 1] = b;
        Ok(Self { a, b, points })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Grid spacing `(b - a) / (n - 1)`.
    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.len() - 1) as f64
    }

    /// Indices of the points kept after trimming `fraction` of the domain
    /// length from each end.
    pub fn interior_indices(&self, fraction: f64) -> Vec<usize> {
        let lo = self.a + fraction * (self.b - self.a);
        let hi = self.b - fraction * (self.b - self.a);
        self.points
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= lo && x <= hi)
            .map(|(k, _)| k)
            .collect()
    }
}

/// A named closed-form coefficient function with an analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    /// `0.5 sin x + 0.1 sin 12x + 0.25 cos 4x + 2`
    LinearSlP,
    /// `0.4 sin 3x + 0.15 cos 8x + 1`
    LinearSlQ,
    /// `0.5 sin x + 0.1 sin 11x + 0.25 cos 4x + 3`
    NonlinearSlP,
    /// `0.6 sin(x+1) + 0.3 sin 2.5x + 0.2 cos 5x + 1.5`
    NonlinearSlQ,
    /// Two-component volume-fraction mixture `12 v_a(x) + 3 v_b(x)`.
    MixtureP,
    /// Stepwise flexural rigidity: 10, 2.5, 10, 5, 2.5 on [0,2), [2,4), [4,6), [6,8), [8,10].
    SteppedEi,
    /// Spatially constant value (used to override a model in tests).
    Constant(f64),
}

/// Material properties of the two mixture components in the diffusion model.
pub const MIXTURE_PA: f64 = 12.0;
pub const MIXTURE_PB: f64 = 3.0;

/// Volume fractions `(v_a, v_b)` of the diffusion model's composite.
///
/// `v_b` decays exponentially from 0.80 at the left boundary towards 0.10;
/// `v_a` is the remainder, so the two always sum to one.
pub fn mixture_volume_fractions(x: f64) -> (f64, f64) {
    let vb = 0.70 * (-0.4 * x).exp() + 0.10;
    (1.0 - vb, vb)
}

impl Coefficient {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::LinearSlP => {
                0.5 * x.sin() + 0.1 * (12.0 * x).sin() + 0.25 * (4.0 * x).cos() + 2.0
            }
            Coefficient::LinearSlQ => 0.4 * (3.0 * x).sin() + 0.15 * (8.0 * x).cos() + 1.0,
            Coefficient::NonlinearSlP => {
                0.5 * x.sin() + 0.1 * (11.0 * x).sin() + 0.25 * (4.0 * x).cos() + 3.0
            }
            Coefficient::NonlinearSlQ => {
                0.6 * (x + 1.0).sin() + 0.3 * (2.5 * x).sin() + 0.2 * (5.0 * x).cos() + 1.5
            }
            Coefficient::MixtureP => {
                let (va, vb) = mixture_volume_fractions(x);
                MIXTURE_PA * va + MIXTURE_PB * vb
            }
            Coefficient::SteppedEi => {
                if x < 2.0 {
                    10.0
                } else if x < 4.0 {
                    2.5
                } else if x < 6.0 {
                    10.0
                } else if x < 8.0 {
                    5.0
                } else {
                    2.5
                }
            }
            Coefficient::Constant(c) => *c,
        }
    }

    /// Analytic spatial derivative. Stepwise coefficients report zero (the
    /// derivative away from the jumps).
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Coefficient::LinearSlP => {
                0.5 * x.cos() + 1.2 * (12.0 * x).cos() - 1.0 * (4.0 * x).sin()
            }
            Coefficient::LinearSlQ => 1.2 * (3.0 * x).cos() - 1.2 * (8.0 * x).sin(),
            Coefficient::NonlinearSlP => {
                0.5 * x.cos() + 1.1 * (11.0 * x).cos() - 1.0 * (4.0 * x).sin()
            }
            Coefficient::NonlinearSlQ => {
                0.6 * (x + 1.0).cos() + 0.75 * (2.5 * x).cos() - 1.0 * (5.0 * x).sin()
            }
            Coefficient::MixtureP => -(MIXTURE_PA - MIXTURE_PB) * 0.70 * (-0.4) * (-0.4 * x).exp(),
            Coefficient::SteppedEi | Coefficient::Constant(_) => 0.0,
        }
    }

    /// Interior discontinuity locations, if any.
    pub fn breakpoints(&self) -> &'static [f64] {
        match self {
            Coefficient::SteppedEi => &[2.0, 4.0, 6.0, 8.0],
            _ => &[],
        }
    }
}

/// Dirichlet values at both ends, plus clamped slopes for fourth-order models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    pub left_value: f64,
    pub right_value: f64,
    pub left_slope: Option<f64>,
    pub right_slope: Option<f64>,
}

impl BoundaryConditions {
    pub fn dirichlet(left: f64, right: f64) -> Self {
        Self {
            left_value: left,
            right_value: right,
            left_slope: None,
            right_slope: None,
        }
    }

    pub fn clamped(left: f64, right: f64) -> Self {
        Self {
            left_value: left,
            right_value: right,
            left_slope: Some(0.0),
            right_slope: Some(0.0),
        }
    }
}

/// One sinusoidal probe `f(x) = amplitude · sin(frequency · x) + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingSpec {
    pub amplitude: f64,
    pub frequency: f64,
    pub offset: f64,
}

impl ForcingSpec {
    pub fn new(amplitude: f64, frequency: f64, offset: f64) -> Self {
        Self {
            amplitude,
            frequency,
            offset,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (self.frequency * x).sin() + self.offset
    }
}

impl core::fmt::Display for ForcingSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{}*sin({}*x)+{}",
            self.amplitude, self.frequency, self.offset
        )
    }
}

/// Per-model parameter grids the sinusoidal probes are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingGrid {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl ForcingGrid {
    pub fn cardinality(&self) -> usize {
        self.amplitudes.len() * self.frequencies.len() * self.offsets.len()
    }

    fn enumerate(&self) -> Vec<ForcingSpec> {
        let mut out = Vec::with_capacity(self.cardinality());
        for &a in &self.amplitudes {
            for &b in &self.frequencies {
                for &c in &self.offsets {
                    out.push(ForcingSpec::new(a, b, c));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    LinearSturmLiouville,
    NonlinearSturmLiouville,
    SecondOrderPoisson,
    EulerBernoulli,
}

/// Strength of the quadratic term in the nonlinear Sturm-Liouville model.
pub const NONLINEAR_ALPHA: f64 = 0.4;

/// A fully specified benchmark model: operator kind, ground-truth
/// coefficients, boundary conditions, and the default forcing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Differential order of the left-hand side (2 or 4).
    pub order: u8,
    pub p: Option<Coefficient>,
    pub q: Option<Coefficient>,
    pub ei: Option<Coefficient>,
    /// Nonlinearity strength; zero for all models but the nonlinear one.
    pub alpha: f64,
    pub bc: BoundaryConditions,
    /// Labels of the terms present in the ground-truth expansion of the
    /// left-hand side (used for spurious-term scoring).
    pub true_terms: Vec<&'static str>,
    pub forcing_grid: ForcingGrid,
}

impl ModelSpec {
    pub fn linear_sturm_liouville() -> Self {
        Self {
            kind: ModelKind::LinearSturmLiouville,
            order: 2,
            p: Some(Coefficient::LinearSlP),
            q: Some(Coefficient::LinearSlQ),
            ei: None,
            alpha: 0.0,
            bc: BoundaryConditions::dirichlet(0.0, 0.0),
            true_terms: vec!["u_x", "u", "f"],
            forcing_grid: ForcingGrid {
                amplitudes: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                frequencies: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
                offsets: vec![0.0, 1.0, 2.0, 3.0],
            },
        }
    }

    pub fn nonlinear_sturm_liouville() -> Self {
        Self {
            kind: ModelKind::NonlinearSturmLiouville,
            order: 2,
            p: Some(Coefficient::NonlinearSlP),
            q: Some(Coefficient::NonlinearSlQ),
            ei: None,
            alpha: NONLINEAR_ALPHA,
            bc: BoundaryConditions::dirichlet(0.0, 0.0),
            true_terms: vec!["u_x", "u", "u^2", "f"],
            forcing_grid: ForcingGrid {
                amplitudes: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                frequencies: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
                offsets: vec![0.0, 1.0, 2.0, 3.0],
            },
        }
    }

    pub fn second_order_poisson() -> Self {
        Self {
            kind: ModelKind::SecondOrderPoisson,
            order: 2,
            p: Some(Coefficient::MixtureP),
            q: None,
            ei: None,
            alpha: 0.0,
            bc: BoundaryConditions::dirichlet(0.8, 0.0),
            true_terms: vec!["u_x", "f"],
            forcing_grid: ForcingGrid {
                amplitudes: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                frequencies: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
                offsets: vec![0.0, 1.0, 2.0, 3.0],
            },
        }
    }

    pub fn euler_bernoulli() -> Self {
        Self {
            kind: ModelKind::EulerBernoulli,
            order: 4,
            p: None,
            q: None,
            ei: Some(Coefficient::SteppedEi),
            alpha: 0.0,
            bc: BoundaryConditions::clamped(0.0, 0.0),
            true_terms: vec!["u_xxx", "f"],
            forcing_grid: ForcingGrid {
                amplitudes: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                frequencies: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
                offsets: vec![0.0, 1.0, 2.0, 3.0],
            },
        }
    }

    /// Look a model up by its catalog name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "linear-sl" => Ok(Self::linear_sturm_liouville()),
            "nonlinear-sl" => Ok(Self::nonlinear_sturm_liouville()),
            "poisson2" => Ok(Self::second_order_poisson()),
            "euler-bernoulli" => Ok(Self::euler_bernoulli()),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::LinearSturmLiouville => "linear-sl",
            ModelKind::NonlinearSturmLiouville => "nonlinear-sl",
            ModelKind::SecondOrderPoisson => "poisson2",
            ModelKind::EulerBernoulli => "euler-bernoulli",
        }
    }

    /// Replace the diffusion coefficient (testing hook).
    pub fn with_p(mut self, p: Coefficient) -> Self {
        self.p = Some(p);
        self
    }

    /// Replace the flexural rigidity (testing hook).
    pub fn with_ei(mut self, ei: Coefficient) -> Self {
        self.ei = Some(ei);
        self
    }

    /// Evaluate a ground-truth coefficient by name ("p", "q" or "EI").
    pub fn eval_coefficient(&self, name: &str, x: f64) -> Result<f64> {
        let coeff = match name {
            "p" => self.p,
            "q" => self.q,
            "EI" => self.ei,
            _ => None,
        };
        coeff.map(|c| c.eval(x)).ok_or_else(|| Error::UnknownCoefficient {
            model: self.name().to_string(),
            name: name.to_string(),
        })
    }

    /// Analytic derivative of a ground-truth coefficient by name.
    pub fn eval_coefficient_deriv(&self, name: &str, x: f64) -> Result<f64> {
        let coeff = match name {
            "p" => self.p,
            "q" => self.q,
            "EI" => self.ei,
            _ => None,
        };
        coeff.map(|c| c.deriv(x)).ok_or_else(|| Error::UnknownCoefficient {
            model: self.name().to_string(),
            name: name.to_string(),
        })
    }

    /// Ground-truth expansion of the left-hand side at `x`:
    /// the coefficients `c_t` such that `u^(order) = Σ c_t θ_t + c_f f`.
    pub fn true_expansion(&self, x: f64) -> TrueExpansion {
        match self.kind {
            ModelKind::LinearSturmLiouville | ModelKind::NonlinearSturmLiouville => {
                let p = self.p.expect("Sturm-Liouville models carry p").eval(x);
                let px = self.p.unwrap().deriv(x);
                let q = self.q.expect("Sturm-Liouville models carry q").eval(x);
                let mut terms = vec![("u_x", -px / p), ("u", q / p)];
                if self.kind == ModelKind::NonlinearSturmLiouville {
                    terms.push(("u^2", self.alpha * q / p));
                }
                terms.push(("f", -1.0 / p));
                TrueExpansion { terms }
            }
            ModelKind::SecondOrderPoisson => {
                let p = self.p.expect("diffusion model carries p").eval(x);
                let px = self.p.unwrap().deriv(x);
                TrueExpansion {
                    terms: vec![("u_x", -px / p), ("f", -1.0 / p)],
                }
            }
            ModelKind::EulerBernoulli => {
                let ei = self.ei.expect("beam model carries EI").eval(x);
                let eix = self.ei.unwrap().deriv(x);
                TrueExpansion {
                    terms: vec![("u_xxx", -2.0 * eix / ei), ("f", -1.0 / ei)],
                }
            }
        }
    }
}

/// Per-term coefficients of the ground-truth expansion at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueExpansion {
    /// `(term label, coefficient)` pairs; the forcing appears under "f".
    pub terms: Vec<(&'static str, f64)>,
}

impl TrueExpansion {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.terms
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, c)| *c)
    }

    /// Evaluate `u^(order) = Σ c_t θ_t(state) + c_f f` for a state vector
    /// `y = [u, u_x, u_xx, ...]`.
    pub fn apply(&self, y: &[f64], f: f64) -> f64 {
        let mut total = 0.0;
        for (label, c) in &self.terms {
            let theta = match *label {
                "u" => y[0],
                "u_x" => y[1],
                "u_xx" => y[2],
                "u_xxx" => y[3],
                "u^2" => y[0] * y[0],
                "u^3" => y[0] * y[0] * y[0],
                "f" => f,
                other => panic!("true expansion holds unexpected term {other}"),
            };
            total += c * theta;
        }
        total
    }
}

/// Draw `count` distinct forcing specs from the model's parameter grid,
/// deterministically for a given seed.
pub fn forcing_set(model: &ModelSpec, count: usize, seed: u64) -> Result<Vec<ForcingSpec>> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "forcing count must be at least 1".to_string(),
        ));
    }
    let mut all = model.forcing_grid.enumerate();
    if count > all.len() {
        return Err(Error::ForcingGridExhausted {
            requested: count,
            available: all.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(count);
    Ok(all)
}
