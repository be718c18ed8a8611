//! Fragility (`y = a·e^{b·x}`) and restoration-time
//! (`y = c − a₁·e^{−b₁·x} − a₂·e^{−b₂·x}`) curve fitting.
//!
//! Refinement minimises squared error on raw values; the log-linear pass of
//! the exponential fit only seeds the solver, so zero counts still take
//! part in the fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::solver::{levenberg_marquardt, Bounds, LmOptions, LmReport, SolverError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate fragility data: {0}")]
    Degenerate(String),
    #[error("non-finite or negative sample at index {0}")]
    BadSample(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("model evaluation overflowed at x = {0}")]
    Overflow(f64),
    #[error("model input must be finite and >= 0, got {0}")]
    InvalidInput(f64),
}

/// Shared surface of the two closed-form model families.
pub trait Curve {
    fn value(&self, x: f64) -> f64;
    /// Partial derivatives of `value` with respect to each parameter.
    fn gradient(&self, x: f64) -> Vec<f64>;
    fn params(&self) -> Vec<f64>;
    fn from_params(p: &[f64]) -> Self;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialModel {
    pub a: f64,
    pub b: f64,
}

impl Curve for ExponentialModel {
    fn value(&self, x: f64) -> f64 {
        self.a * (self.b * x).exp()
    }

    fn gradient(&self, x: f64) -> Vec<f64> {
        let e = (self.b * x).exp();
        vec![e, self.a * x * e]
    }

    fn params(&self) -> Vec<f64> {
        vec![self.a, self.b]
    }

    fn from_params(p: &[f64]) -> Self {
        Self { a: p[0], b: p[1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturatingRestorationModel {
    pub c: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl SaturatingRestorationModel {
    /// Swaps the decay terms so that `b1 <= b2`.
    pub fn canonical(self) -> Self {
        if self.b1 <= self.b2 {
            self
        } else {
            Self {
                c: self.c,
                a1: self.a2,
                b1: self.b2,
                a2: self.a1,
                b2: self.b1,
            }
        }
    }

    pub fn satisfies_constraints(&self) -> bool {
        self.c >= 0.0 && self.a1 >= 0.0 && self.a2 >= 0.0 && self.b1 > 0.0 && self.b2 > 0.0
    }
}

impl Curve for SaturatingRestorationModel {
    fn value(&self, x: f64) -> f64 {
        self.c - self.a1 * (-self.b1 * x).exp() - self.a2 * (-self.b2 * x).exp()
    }

    fn gradient(&self, x: f64) -> Vec<f64> {
        let e1 = (-self.b1 * x).exp();
        let e2 = (-self.b2 * x).exp();
        vec![1.0, -e1, self.a1 * x * e1, -e2, self.a2 * x * e2]
    }

    fn params(&self) -> Vec<f64> {
        vec![self.c, self.a1, self.b1, self.a2, self.b2]
    }

    fn from_params(p: &[f64]) -> Self {
        Self {
            c: p[0],
            a1: p[1],
            b1: p[2],
            a2: p[3],
            b2: p[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// The raw value was negative and has been clamped to zero.
    pub clamped: bool,
}

/// Closed-form evaluation for `x >= 0`; negative outputs are clamped to 0.
pub fn evaluate<M: Curve>(model: &M, x: f64) -> Result<Evaluation, FitError> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(FitError::InvalidInput(x));
    }
    let y = model.value(x);
    if !y.is_finite() {
        return Err(FitError::Overflow(x));
    }
    Ok(if y < 0.0 {
        Evaluation {
            value: 0.0,
            clamped: true,
        }
    } else {
        Evaluation {
            value: y,
            clamped: false,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_samples: usize,
    pub sse: f64,
    pub r_squared: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initializer: String,
    pub gradient_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit<M> {
    pub model: M,
    pub diagnostics: FitDiagnostics,
    /// `[min x, max x]` of the samples.
    pub fit_domain: [f64; 2],
    /// Solver trace of the run that produced `model`.
    pub report: LmReport,
}

/// Number of perturbed restarts tried when the first solve does not converge.
pub const RESTARTS: usize = 8;

/// Restart `k` scales parameter `i` by 1.5 or 0.5 following bit `i mod 3` of `k`.
fn perturbation(init: &[f64], k: usize) -> Vec<f64> {
    init.iter()
        .enumerate()
        .map(|(i, v)| if (k >> (i % 3)) & 1 == 0 { v * 1.5 } else { v * 0.5 })
        .collect()
}

fn check_samples(samples: &[(f64, f64)]) -> Result<(), FitError> {
    for (i, (x, y)) in samples.iter().enumerate() {
        if !(x.is_finite() && y.is_finite() && *x >= 0.0 && *y >= 0.0) {
            return Err(FitError::BadSample(i));
        }
    }
    Ok(())
}

fn domain(samples: &[(f64, f64)]) -> [f64; 2] {
    samples.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |d, (x, _)| {
        [d[0].min(*x), d[1].max(*x)]
    })
}

/// Samples sharing an x, collapsed to `(x, mean y, count)`. Least squares
/// on the means weighted by count has the same minimiser as on the raw
/// samples; the two sums of squares differ by the returned within-group sum.
fn group_by_x(samples: &[(f64, f64)]) -> (Vec<(f64, f64, f64)>, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    let mut members: Vec<&[(f64, f64)]> = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i].0 != sorted[start].0 {
            let run = &sorted[start..i];
            let mean = run.iter().map(|s| s.1).sum::<f64>() / run.len() as f64;
            groups.push((run[0].0, mean, run.len() as f64));
            members.push(run);
            start = i;
        }
    }
    let within = groups
        .iter()
        .zip(&members)
        .map(|(g, run)| run.iter().map(|s| (s.1 - g.1).powi(2)).sum::<f64>())
        .sum();
    (groups, within)
}

fn residual_fn<M: Curve>(groups: &[(f64, f64, f64)]) -> impl Fn(&[f64]) -> DVector<f64> + '_ {
    move |p| {
        let m = M::from_params(p);
        DVector::from_iterator(groups.len(), groups.iter().map(|(x, y, w)| w.sqrt() * (m.value(*x) - y)))
    }
}

fn jacobian_fn<M: Curve>(groups: &[(f64, f64, f64)]) -> impl Fn(&[f64]) -> DMatrix<f64> + '_ {
    move |p| {
        let m = M::from_params(p);
        let mut jac = DMatrix::zeros(groups.len(), p.len());
        for (i, (x, _, w)) in groups.iter().enumerate() {
            let sw = w.sqrt();
            for (j, d) in m.gradient(*x).into_iter().enumerate() {
                jac[(i, j)] = sw * d;
            }
        }
        jac
    }
}

/// Solve from `init`, falling back to perturbed restarts (lowest SSE wins)
/// when the first run does not converge. Repeated x values are solved as
/// one weighted residual; the returned sums of squares are over `samples`.
fn solve_with_restarts<M: Curve>(
    samples: &[(f64, f64)],
    init: Vec<f64>,
    bounds: &Bounds,
    opts: &LmOptions,
    label: &str,
) -> Result<(LmReport, String), FitError> {
    let (groups, within) = group_by_x(samples);
    let run = |start: &[f64]| {
        levenberg_marquardt(residual_fn::<M>(&groups), jacobian_fn::<M>(&groups), start, bounds, opts)
    };
    let restore = |(mut rep, label): (LmReport, String)| {
        rep.sse += within;
        for v in &mut rep.sse_history {
            *v += within;
        }
        Ok((rep, label))
    };
    let first = run(&init)?;
    if first.converged {
        return restore((first, label.to_string()));
    }
    let mut best = (first, label.to_string());
    for k in 0..RESTARTS {
        let Ok(rep) = run(&perturbation(&init, k)) else {
            continue;
        };
        let better = (rep.converged && !best.0.converged)
            || (rep.converged == best.0.converged && rep.sse < best.0.sse);
        if better {
            best = (rep, format!("{label}+restart{k}"));
        }
    }
    restore(best)
}

fn diagnostics(
    samples: &[(f64, f64)],
    report: &LmReport,
    initializer: String,
    warnings: Vec<String>,
) -> FitDiagnostics {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sst: f64 = samples.iter().map(|(_, y)| (y - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 {
        1.0 - report.sse / sst
    } else if report.sse == 0.0 {
        1.0
    } else {
        0.0
    };
    FitDiagnostics {
        n_samples: samples.len(),
        sse: report.sse,
        r_squared,
        iterations: report.iterations,
        converged: report.converged,
        initializer,
        gradient_norm: report.gradient_norm,
        warnings,
    }
}

/// Ordinary least squares of `ln y` on `x` over the positive samples.
/// Returns `(a, b)`; a single distinct x gives `b = 0` and the geometric mean.
pub fn log_linear_init(samples: &[(f64, f64)]) -> (f64, f64) {
    let pos: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|(x, y)| (*x, y.ln()))
        .collect();
    let n = pos.len() as f64;
    let mx = pos.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pos.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pos.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pos.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    ((my - b * mx).exp(), b)
}

pub fn fit_exponential(
    samples: &[(f64, f64)],
    opts: &LmOptions,
) -> Result<Fit<ExponentialModel>, FitError> {
    if samples.len() < 3 {
        return Err(FitError::TooFewSamples {
            needed: 3,
            got: samples.len(),
        });
    }
    check_samples(samples)?;
    let positive = samples.iter().filter(|(_, y)| *y > 0.0).count();
    if positive == 0 {
        return Err(FitError::Degenerate("every sample has zero outages".into()));
    }
    if positive < 2 {
        return Err(FitError::Degenerate("fewer than two samples with outages".into()));
    }
    let [lo, hi] = domain(samples);
    if lo == hi {
        return Err(FitError::Degenerate("all samples share one intensity".into()));
    }

    let (a0, b0) = log_linear_init(samples);
    let bounds = Bounds::lower(vec![f64::MIN_POSITIVE, f64::NEG_INFINITY]);
    let (report, initializer) =
        solve_with_restarts::<ExponentialModel>(samples, vec![a0, b0], &bounds, opts, "log-linear")?;
    let model = ExponentialModel::from_params(&report.params);
    Ok(Fit {
        model,
        diagnostics: diagnostics(samples, &report, initializer, Vec::new()),
        fit_domain: [lo, hi],
        report,
    })
}

/// Below this largest outage count the saturation level is poorly identified.
pub const SATURATION_MIN_X: f64 = 10.0;

pub fn fit_restoration(
    samples: &[(f64, f64)],
    opts: &LmOptions,
) -> Result<Fit<SaturatingRestorationModel>, FitError> {
    if samples.len() < 6 {
        return Err(FitError::TooFewSamples {
            needed: 6,
            got: samples.len(),
        });
    }
    check_samples(samples)?;
    let [lo, hi] = domain(samples);
    let mut warnings = Vec::new();
    if hi < SATURATION_MIN_X {
        warnings.push(format!(
            "largest outage count {hi} < {SATURATION_MIN_X}; saturation level is weakly identified"
        ));
    }
    let y_max = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let y_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let x_scale = if hi > 0.0 { hi } else { 1.0 };
    let c0 = 1.05 * y_max;
    let spread = c0 - y_min;
    let init = vec![c0, 0.9 * spread, 1.0 / x_scale, 0.1 * spread, 10.0 / x_scale];
    let bounds = Bounds::lower(vec![0.0, 0.0, f64::MIN_POSITIVE, 0.0, f64::MIN_POSITIVE]);

    let (report, initializer) = solve_with_restarts::<SaturatingRestorationModel>(
        samples,
        init,
        &bounds,
        opts,
        "saturation-split",
    )?;
    if !report.converged {
        warnings.push("solver did not converge".into());
    }
    let model = SaturatingRestorationModel::from_params(&report.params).canonical();
    Ok(Fit {
        model,
        diagnostics: diagnostics(samples, &report, initializer, warnings),
        fit_domain: [lo, hi],
        report,
    })
}
