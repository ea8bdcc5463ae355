//! Shooting-method solutions of the benchmark boundary value problems.
//!
//! Each solve integrates the problem as an initial value problem with
//! classical fourth-order Runge-Kutta on an internal grid four times finer
//! than the sampling grid, then adjusts the unknown initial conditions
//! until the far boundary conditions are met: bisection on the initial
//! slope for second-order problems, damped Newton on the initial curvature
//! pair for the clamped fourth-order beam.

use crate::error::{Error, Result};
use crate::models::{BoundaryConditions, ForcingSpec, Grid, ModelSpec};

/// Right-boundary residual tolerance for accepted solutions.
pub const BOUNDARY_TOL: f64 = 1e-3;

/// Internal integration refinement relative to the sampling grid.
const REFINE: usize = 4;

/// One solved probe: forcing and response sampled on the trial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub forcing: ForcingSpec,
    /// Forcing samples `f(x_k)`.
    pub f: Vec<f64>,
    /// Response samples `u(x_k)`.
    pub u: Vec<f64>,
    /// Initial-condition parameters found by the shooting iteration
    /// (`[u_x(a)]` for second order, `[u_xx(a), u_xxx(a)]` for fourth).
    pub shoot_params: Vec<f64>,
}

/// Trials sharing one grid, model, and set of boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub model_name: String,
    pub grid: Grid,
    pub bc: BoundaryConditions,
    pub trials: Vec<Trial>,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// A new set holding the selected trials, in the given order.
    pub fn subset(&self, indices: &[usize]) -> TrialSet {
        TrialSet {
            model_name: self.model_name.clone(),
            grid: self.grid.clone(),
            bc: self.bc,
            trials: indices.iter().map(|&i| self.trials[i].clone()).collect(),
        }
    }
}

fn rk4_step<const D: usize>(
    rhs: &mut impl FnMut(f64, &[f64; D]) -> [f64; D],
    x: f64,
    y: &[f64; D],
    h: f64,
) -> [f64; D] {
    let k1 = rhs(x, y);
    let mut y2 = *y;
    for i in 0..D {
        y2[i] = y[i] + 0.5 * h * k1[i];
    }
    let k2 = rhs(x + 0.5 * h, &y2);
    for i in 0..D {
        y2[i] = y[i] + 0.5 * h * k2[i];
    }
    let k3 = rhs(x + 0.5 * h, &y2);
    for i in 0..D {
        y2[i] = y[i] + h * k3[i];
    }
    let k4 = rhs(x + h, &y2);
    let mut out = *y;
    for i in 0..D {
        out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn rk4_over_points<const D: usize>(
    rhs: &mut impl FnMut(f64, &[f64; D]) -> [f64; D],
    y0: [f64; D],
    xs: &[f64],
) -> Result<Vec<[f64; D]>> {
    let mut out = Vec::with_capacity(xs.len());
    out.push(y0);
    let mut y = y0;
    for i in 0..xs.len().saturating_sub(1) {
        y = rk4_step(rhs, xs[i], &y, xs[i + 1] - xs[i]);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                step: i + 1,
                x: xs[i + 1],
            });
        }
        out.push(y);
    }
    Ok(out)
}

/// Integrate `y' = rhs(x, y)` with classical RK4, one step per grid
/// interval. The first trajectory row is `y0`.
pub fn integrate_ivp<const D: usize>(
    mut rhs: impl FnMut(f64, &[f64; D]) -> [f64; D],
    y0: [f64; D],
    grid: &Grid,
) -> Result<Vec<[f64; D]>> {
    rk4_over_points(&mut rhs, y0, grid.points())
}

fn fine_points(grid: &Grid) -> Vec<f64> {
    let n = grid.len();
    let hf = grid.spacing() / REFINE as f64;
    let nf = REFINE * (n - 1) + 1;
    let mut xs: Vec<f64> = (0..nf).map(|i| grid.a() + i as f64 * hf).collect();
    xs[nf - 1] = grid.b();
    xs
}

/// Integrate a second-order model from `(u, u_x)(a) = (bc.left, slope)`.
/// Returns the full fine trajectory, or the step where it diverged.
fn integrate_second<F: Fn(f64) -> f64>(
    model: &ModelSpec,
    forcing: &F,
    xs: &[f64],
    slope: f64,
) -> Result<Vec<[f64; 2]>> {
    let mut rhs = |x: f64, y: &[f64; 2]| {
        let e = model.true_expansion(x);
        [y[1], e.apply(&[y[0], y[1], 0.0, 0.0], forcing(x))]
    };
    rk4_over_points(&mut rhs, [model.bc.left_value, slope], xs)
}

/// Right-boundary residual for a slope guess; divergence maps to a huge
/// value with the sign of the last finite response so bracketing still works.
fn second_order_residual<F: Fn(f64) -> f64>(
    model: &ModelSpec,
    forcing: &F,
    xs: &[f64],
    slope: f64,
) -> f64 {
    match integrate_second(model, forcing, xs, slope) {
        Ok(traj) => traj.last().unwrap()[0] - model.bc.right_value,
        Err(Error::Divergence { step, .. }) => {
            // Re-run up to the divergent step to recover the sign.
            let partial = integrate_second_partial(model, forcing, &xs[..step], slope);
            let sign = partial.last().map(|y| y[0]).unwrap_or(1.0);
            if sign >= 0.0 {
                f64::MAX
            } else {
                -f64::MAX
            }
        }
        Err(_) => f64::MAX,
    }
}

fn integrate_second_partial<F: Fn(f64) -> f64>(
    model: &ModelSpec,
    forcing: &F,
    xs: &[f64],
    slope: f64,
) -> Vec<[f64; 2]> {
    integrate_second(model, forcing, xs, slope).unwrap_or_else(|_| {
        vec![[model.bc.left_value, slope]]
    })
}

/// Solve a second-order model for an arbitrary forcing function.
/// Returns the response on the sampling grid and the converged slope.
pub fn solve_second_order<F: Fn(f64) -> f64>(
    model: &ModelSpec,
    forcing: F,
    grid: &Grid,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let xs = fine_points(grid);
    let resid = |s: f64| second_order_residual(model, &forcing, &xs, s);

    // Scan a ladder of slope guesses outward from zero and bracket the
    // first sign change between adjacent scanned points. The ladder (not a
    // plain doubling expansion) also catches non-monotone residuals, which
    // the nonlinear model produces.
    let r0 = resid(0.0);
    let (mut lo, mut hi, mut r_lo, mut r_hi) = if r0.abs() <= tol {
        (0.0, 0.0, r0, r0)
    } else {
        let mut ladder = vec![0.0_f64];
        let mut w = 0.25;
        while w <= 1100.0 {
            ladder.push(w);
            ladder.push(-w);
            w *= 2.0;
        }
        ladder.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let residuals: Vec<f64> = ladder.iter().map(|&s| resid(s)).collect();
        let zero_pos = ladder.iter().position(|&s| s == 0.0).unwrap();

        // Prefer the bracket closest to the zero guess.
        let mut bracket = None;
        let mut best_dist = usize::MAX;
        for i in 0..ladder.len() - 1 {
            if residuals[i].signum() != residuals[i + 1].signum() {
                let dist = i.max(zero_pos).saturating_sub(i.min(zero_pos));
                if dist < best_dist {
                    best_dist = dist;
                    bracket = Some((ladder[i], ladder[i + 1], residuals[i], residuals[i + 1]));
                }
            }
        }
        bracket.ok_or(Error::Convergence {
            forcing: "second-order shoot: no sign change while bracketing".to_string(),
            residual: r0,
        })?
    };

    let s = if r_lo.abs() <= tol {
        lo
    } else if r_hi.abs() <= tol {
        hi
    } else {
        let mut found = None;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let rm = resid(mid);
            if rm.abs() <= tol {
                found = Some(mid);
                break;
            }
            if rm.signum() == r_lo.signum() {
                lo = mid;
                r_lo = rm;
            } else {
                hi = mid;
                r_hi = rm;
            }
            if (hi - lo).abs() < 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        found.ok_or(Error::Convergence {
            forcing: "second-order shoot: bisection stalled".to_string(),
            residual: 0.5 * (r_lo + r_hi),
        })?
    };

    let traj = integrate_second(model, &forcing, &xs, s)?;
    let u: Vec<f64> = (0..grid.len()).map(|i| traj[i * REFINE][0]).collect();
    Ok((u, s))
}

/// Shoot a second-order benchmark trial.
pub fn shoot_second_order(
    model: &ModelSpec,
    forcing: ForcingSpec,
    grid: &Grid,
    tol: f64,
) -> Result<Trial> {
    if model.order != 2 {
        return Err(Error::InvalidArgument(format!(
            "second-order shoot called on an order-{} model",
            model.order
        )));
    }
    let (u, slope) = solve_second_order(model, |x| forcing.eval(x), grid, tol).map_err(|e| {
        match e {
            Error::Convergence { residual, .. } => Error::Convergence {
                forcing: forcing.to_string(),
                residual,
            },
            other => other,
        }
    })?;
    Ok(Trial {
        forcing,
        f: grid.points().iter().map(|&x| forcing.eval(x)).collect(),
        u,
        shoot_params: vec![slope],
    })
}

/// Integration path for fourth-order problems: the fine grid with the
/// rigidity jump locations inserted. Returns the path, the path index of
/// every sampling point, and `(path index, EI_left, EI_right)` per jump.
#[allow(clippy::type_complexity)]
fn beam_path(model: &ModelSpec, grid: &Grid) -> (Vec<f64>, Vec<usize>, Vec<(usize, f64, f64)>) {
    let ei = model.ei.expect("fourth-order models carry EI");
    let fine = fine_points(grid);
    let h = grid.spacing() / REFINE as f64;
    let near = 1e-9 * h;

    let breakpoints: Vec<f64> = ei
        .breakpoints()
        .iter()
        .copied()
        .filter(|&bp| bp > grid.a() + near && bp < grid.b() - near)
        .collect();

    let mut xs = Vec::with_capacity(fine.len() + breakpoints.len());
    let mut sample_idx = vec![0usize; grid.len()];
    let mut jumps = Vec::new();
    let mut bp_iter = breakpoints.iter().copied().peekable();

    for (i, &x) in fine.iter().enumerate() {
        while let Some(&bp) = bp_iter.peek() {
            if bp < x - near {
                jumps.push((xs.len(), ei.eval(bp - 1e-9), ei.eval(bp + 1e-9)));
                xs.push(bp);
                bp_iter.next();
            } else if (bp - x).abs() <= near {
                jumps.push((xs.len(), ei.eval(bp - 1e-9), ei.eval(bp + 1e-9)));
                bp_iter.next();
            } else {
                break;
            }
        }
        if i % REFINE == 0 {
            sample_idx[i / REFINE] = xs.len();
        }
        xs.push(x);
    }
    (xs, sample_idx, jumps)
}

/// Integrate the beam from curvature/shear guesses, applying moment and
/// shear continuity across rigidity jumps.
fn integrate_beam<F: Fn(f64) -> f64>(
    model: &ModelSpec,
    forcing: &F,
    xs: &[f64],
    jumps: &[(usize, f64, f64)],
    guess: [f64; 2],
) -> Result<Vec<[f64; 4]>> {
    let ei = model.ei.expect("fourth-order models carry EI");
    let y0 = [
        model.bc.left_value,
        model.bc.left_slope.unwrap_or(0.0),
        guess[0],
        guess[1],
    ];

    let mut traj: Vec<[f64; 4]> = Vec::with_capacity(xs.len());
    traj.push(y0);
    let mut y = y0;
    let mut start = 0usize;

    let mut segments: Vec<usize> = jumps.iter().map(|&(i, _, _)| i).collect();
    segments.push(xs.len() - 1);

    for (seg, &end) in segments.iter().enumerate() {
        if end > start {
            let mid = 0.5 * (xs[start] + xs[end]);
            let ei_val = ei.eval(mid);
            let mut rhs =
                |x: f64, y: &[f64; 4]| [y[1], y[2], y[3], -forcing(x) / ei_val];
            let piece = rk4_over_points(&mut rhs, y, &xs[start..=end]).map_err(
                |e| match e {
                    Error::Divergence { step, x } => Error::Divergence {
                        step: step + start,
                        x,
                    },
                    other => other,
                },
            )?;
            y = *piece.last().unwrap();
            traj.extend_from_slice(&piece[1..]);
        }
        if seg < jumps.len() {
            // Moment EI·u_xx and shear EI·u_xxx are continuous across a jump.
            let (_, ei_l, ei_r) = jumps[seg];
            y[2] *= ei_l / ei_r;
            y[3] *= ei_l / ei_r;
        }
        start = end;
    }
    Ok(traj)
}

/// Solve a fourth-order model for an arbitrary forcing function. Returns
/// the response on the sampling grid and the converged `(u_xx, u_xxx)(a)`.
pub fn solve_fourth_order<F: Fn(f64) -> f64>(
    model: &ModelSpec,
    forcing: F,
    grid: &Grid,
    tol: f64,
) -> Result<(Vec<f64>, [f64; 2])> {
    let (xs, sample_idx, jumps) = beam_path(model, grid);
    let target = [
        model.bc.right_value,
        model.bc.right_slope.unwrap_or(0.0),
    ];

    let residual = |s: [f64; 2]| -> Result<[f64; 2]> {
        let traj = integrate_beam(model, &forcing, &xs, &jumps, s)?;
        let last = traj.last().unwrap();
        Ok([last[0] - target[0], last[1] - target[1]])
    };

    let mut s = [0.0_f64, 0.0];
    let mut r = residual(s)?;
    for _ in 0..40 {
        if r[0].abs() <= tol && r[1].abs() <= tol {
            let traj = integrate_beam(model, &forcing, &xs, &jumps, s)?;
            let u = sample_idx.iter().map(|&pi| traj[pi][0]).collect();
            return Ok((u, s));
        }

        // Forward-difference Jacobian of the 2-vector residual.
        let mut jac = [[0.0_f64; 2]; 2];
        for col in 0..2 {
            let d = 1e-6 * s[col].abs().max(1.0);
            let mut sp = s;
            sp[col] += d;
            let rp = residual(sp)?;
            jac[0][col] = (rp[0] - r[0]) / d;
            jac[1][col] = (rp[1] - r[1]) / d;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-14 {
            return Err(Error::Convergence {
                forcing: "fourth-order shoot: singular Jacobian".to_string(),
                residual: r[0].hypot(r[1]),
            });
        }
        let step = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];

        // Damp the step until the residual norm decreases.
        let norm0 = r[0].hypot(r[1]);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let cand = [s[0] + alpha * step[0], s[1] + alpha * step[1]];
            if let Ok(rc) = residual(cand) {
                if rc[0].hypot(rc[1]) < norm0 {
                    s = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence {
                forcing: "fourth-order shoot: damped step rejected".to_string(),
                residual: norm0,
            });
        }
    }
    Err(Error::Convergence {
        forcing: "fourth-order shoot: iteration budget exhausted".to_string(),
        residual: r[0].hypot(r[1]),
    })
}

/// Shoot a fourth-order benchmark trial.
pub fn shoot_fourth_order(
    model: &ModelSpec,
    forcing: ForcingSpec,
    grid: &Grid,
    tol: f64,
) -> Result<Trial> {
    if model.order != 4 {
        return Err(Error::InvalidArgument(format!(
            "fourth-order shoot called on an order-{} model",
            model.order
        )));
    }
    let (u, s) = solve_fourth_order(model, |x| forcing.eval(x), grid, tol).map_err(|e| {
        match e {
            Error::Convergence { residual, .. } => Error::Convergence {
                forcing: forcing.to_string(),
                residual,
            },
            other => other,
        }
    })?;
    Ok(Trial {
        forcing,
        f: grid.points().iter().map(|&x| forcing.eval(x)).collect(),
        u,
        shoot_params: s.to_vec(),
    })
}

/// Solve one trial per forcing spec, in the given order.
pub fn generate_trials(
    model: &ModelSpec,
    forcings: &[ForcingSpec],
    grid: &Grid,
) -> Result<TrialSet> {
    if forcings.is_empty() {
        return Err(Error::InvalidArgument(
            "generate_trials needs at least one forcing".to_string(),
        ));
    }
    let mut trials = Vec::with_capacity(forcings.len());
    for &fs in forcings {
        let trial = match model.order {
            2 => shoot_second_order(model, fs, grid, BOUNDARY_TOL)?,
            4 => shoot_fourth_order(model, fs, grid, BOUNDARY_TOL)?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unsupported differential order {other}"
                )))
            }
        };
        trials.push(trial);
    }
    Ok(TrialSet {
        model_name: model.name().to_string(),
        grid: grid.clone(),
        bc: model.bc,
        trials,
    })
}
