//! Bound-constrained Levenberg–Marquardt for small dense least-squares problems.
//!
//! Minimises `Σ rᵢ(p)²`. Each iteration solves
//! `(JᵀJ + λ·diag(JᵀJ)) δ = -Jᵀr`, projects `p + δ` onto the box bounds and
//! accepts the step only if the sum of squares decreases. The damping `λ`
//! is divided by 10 after an accepted step and multiplied by 10 after a
//! rejected one.
//!
//! Convergence is declared on the scaled gradient
//! `maxᵢ |(Jᵀr)ᵢ| / (‖Jᵢ‖·‖r‖)` (the cosine between the residual and each
//! Jacobian column), with components pinned against an active bound removed.
//! A residual vector below rounding level (`‖r‖ ≤ 64·ε·‖J·p‖`) counts as an
//! exact fit with zero gradient, since its direction is pure noise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 || self.max_iterations > 100_000 {
            return Err("max_iterations must be in 1..=100000".into());
        }
        for (name, v) in [
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("initial_damping", self.initial_damping),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("{name} must be in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn lower(lower: Vec<f64>) -> Self {
        let n = lower.len();
        Self {
            lower,
            upper: vec![f64::INFINITY; n],
        }
    }

    fn project(&self, p: &mut DVector<f64>) {
        for i in 0..p.len() {
            p[i] = p[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    SmallStep,
    MaxIterations,
    DampingOverflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub sse: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub gradient_norm: f64,
    /// Sum of squares at the start and after every accepted step.
    pub sse_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("residuals are not finite at the initial parameters {0:?}")]
    NonFiniteInit(Vec<f64>),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

const MAX_DAMPING: f64 = 1e20;
const MIN_DAMPING: f64 = 1e-20;

fn sum_sq(r: &DVector<f64>) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn scaled_gradient(
    p: &DVector<f64>,
    jac: &DMatrix<f64>,
    r: &DVector<f64>,
    bounds: &Bounds,
) -> (DVector<f64>, f64) {
    let g = jac.transpose() * r;
    let rnorm = r.norm();
    let mut worst: f64 = 0.0;
    let floor = 64.0 * f64::EPSILON * (jac * p).norm();
    if rnorm > floor {
        for i in 0..g.len() {
            // descent direction is -g
            let pinned = (p[i] <= bounds.lower[i] && g[i] > 0.0)
                || (p[i] >= bounds.upper[i] && g[i] < 0.0);
            let col = jac.column(i).norm();
            if pinned || col == 0.0 {
                continue;
            }
            worst = worst.max(g[i].abs() / (col * rnorm));
        }
    }
    (g, worst)
}

/// Runs the solver from `init` (projected onto `bounds` first).
pub fn levenberg_marquardt<R, J>(
    residuals: R,
    jacobian: J,
    init: &[f64],
    bounds: &Bounds,
    opts: &LmOptions,
) -> Result<LmReport, SolverError>
where
    R: Fn(&[f64]) -> DVector<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    let n = init.len();
    if bounds.lower.len() != n || bounds.upper.len() != n {
        return Err(SolverError::Dimension(format!(
            "{n} parameters but {} / {} bounds",
            bounds.lower.len(),
            bounds.upper.len()
        )));
    }
    let mut p = DVector::from_column_slice(init);
    bounds.project(&mut p);
    let mut r = residuals(p.as_slice());
    if r.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFiniteInit(p.as_slice().to_vec()));
    }
    let mut sse = sum_sq(&r);
    let mut history = vec![sse];
    let mut lambda = opts.initial_damping;
    let mut accepted = 0usize;
    let mut termination = Termination::MaxIterations;

    'outer: for _ in 0..opts.max_iterations {
        let jac = jacobian(p.as_slice());
        if jac.nrows() != r.len() || jac.ncols() != n {
            return Err(SolverError::Dimension(format!(
                "jacobian is {}x{}, expected {}x{n}",
                jac.nrows(),
                jac.ncols(),
                r.len()
            )));
        }
        let (g, gnorm) = scaled_gradient(&p, &jac, &r, bounds);
        if gnorm <= opts.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }
        let jtj = jac.transpose() * &jac;
        loop {
            let mut m = jtj.clone();
            for i in 0..n {
                let d = if jtj[(i, i)] > 0.0 { jtj[(i, i)] } else { 1.0 };
                m[(i, i)] += lambda * d;
            }
            let Some(step) = m.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    termination = Termination::DampingOverflow;
                    break 'outer;
                }
                continue;
            };
            let mut candidate = &p + step;
            bounds.project(&mut candidate);
            let moved = (&candidate - &p).norm();
            if moved <= opts.step_tolerance * (p.norm() + opts.step_tolerance) {
                termination = Termination::SmallStep;
                break 'outer;
            }
            let r_new = residuals(candidate.as_slice());
            let sse_new = sum_sq(&r_new);
            if sse_new.is_finite() && sse_new < sse {
                p = candidate;
                r = r_new;
                sse = sse_new;
                history.push(sse);
                accepted += 1;
                lambda = (lambda / 10.0).max(MIN_DAMPING);
                break;
            }
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                termination = Termination::DampingOverflow;
                break 'outer;
            }
        }
    }

    let (_, gradient_norm) = scaled_gradient(&p, &jacobian(p.as_slice()), &r, bounds);
    Ok(LmReport {
        params: p.as_slice().to_vec(),
        sse,
        iterations: accepted,
        converged: gradient_norm <= opts.gradient_tolerance,
        termination,
        gradient_norm,
        sse_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residual_at_init_returns_init() {
        let xs = [0.0, 1.0, 2.0];
        let rep = levenberg_marquardt(
            |p| DVector::from_iterator(3, xs.iter().map(|x| p[0] + p[1] * x - (1.0 + 2.0 * x))),
            |_| DMatrix::from_fn(3, 2, |i, j| if j == 0 { 1.0 } else { xs[i] }),
            &[1.0, 2.0],
            &Bounds::unbounded(2),
            &LmOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.params, vec![1.0, 2.0]);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert_eq!(rep.termination, Termination::Gradient);
    }

    #[test]
    fn linear_problem_matches_normal_equations() {
        // closed form for y ≈ p0 + p1 x
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.1, 2.9, 5.2, 7.1, 8.8, 11.3];
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;

        let rep = levenberg_marquardt(
            |p| DVector::from_iterator(6, xs.iter().zip(&ys).map(|(x, y)| p[0] + p[1] * x - y)),
            |_| DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { xs[i] }),
            &[0.0, 0.0],
            &Bounds::unbounded(2),
            &LmOptions::default(),
        )
        .unwrap();
        assert!((rep.params[0] - icpt).abs() < 1e-10, "{:?}", rep.params);
        assert!((rep.params[1] - slope).abs() < 1e-10);
        assert!(rep.converged);
    }

    #[test]
    fn bounds_are_respected() {
        // unconstrained optimum p = -3, bounded below by 0
        let rep = levenberg_marquardt(
            |p| DVector::from_vec(vec![p[0] + 3.0]),
            |_| DMatrix::from_element(1, 1, 1.0),
            &[5.0],
            &Bounds::lower(vec![0.0]),
            &LmOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.params, vec![0.0]);
        assert!(rep.converged, "pinned gradient does not block convergence");
    }

    #[test]
    fn non_finite_init_is_fatal() {
        let err = levenberg_marquardt(
            |p| DVector::from_vec(vec![(p[0]).ln()]),
            |_| DMatrix::from_element(1, 1, 1.0),
            &[-1.0],
            &Bounds::unbounded(1),
            &LmOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SolverError::NonFiniteInit(_)));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let opts = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        let rep = levenberg_marquardt(
            |p| DVector::from_vec(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]),
            |p| DMatrix::from_row_slice(2, 2, &[-20.0 * p[0], 10.0, -1.0, 0.0]),
            &[-1.2, 1.0],
            &Bounds::unbounded(2),
            &opts,
        )
        .unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.termination, Termination::MaxIterations);
    }
}
