use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::SolverError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Stored curvature pairs.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `‖∇‖∞` falls below this.
    pub grad_tol: f64,
    /// Stop when an iteration decreases the cost by less than this fraction.
    pub rel_cost_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature (sign) constant.
    pub c2: f64,
    pub max_bisections: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { memory: 16, max_iterations: 200, grad_tol: 1e-6, rel_cost_tol: 1e-10, c1: 1e-4, c2: 0.9, max_bisections: 64 }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.memory < 1 {
            return Err(SolverError::Options("memory must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.rel_cost_tol > 0.0) {
            return Err(SolverError::Options("tolerances must be positive".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(SolverError::Options("line search needs 0 < c1 < c2 < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientNorm,
    RelativeDecrease,
    MaxIterations,
    /// No step satisfied sufficient decrease; the best iterate is returned.
    LineSearchFailed,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(self, Termination::GradientNorm | Termination::RelativeDecrease)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeReport {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub termination: Termination,
}

/// Limited-memory inverse Hessian approximation.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    memory: usize,
    pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)>,
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Self { memory: memory.max(1), pairs: VecDeque::new() }
    }

    pub fn reset(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stores `(s, y)` unless the curvature `sᵀy` is too small relative to `‖s‖²`.
    pub fn update(&mut self, s: DVector<f64>, y: DVector<f64>) -> bool {
        let sy = s.dot(&y);
        if !(sy > 1e-12 * s.norm_squared()) {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// Two-loop recursion: `−H ∇`.
    pub fn direction(&self, grad: &DVector<f64>) -> DVector<f64> {
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            q *= s.dot(y) / y.norm_squared();
        } else {
            q /= grad.amax().max(1.0);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        -q
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub alpha: f64,
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub evaluations: usize,
}

/// Weak Wolfe search by bracketing and bisection, valid for nonsmooth
/// functions: sufficient decrease plus `∇f(x + αd)ᵀd ≥ c₂ ∇f(x)ᵀd`. If the
/// curvature condition never holds, the last step with sufficient decrease is
/// returned; `None` means no such step was found.
pub fn weak_wolfe<F>(
    f: &mut F,
    x: &DVector<f64>,
    value: f64,
    slope: f64,
    d: &DVector<f64>,
    options: &SolveOptions,
) -> (Option<LineSearchStep>, usize)
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut alpha = 1.0;
    let mut best: Option<LineSearchStep> = None;
    let mut evaluations = 0;
    for _ in 0..=options.max_bisections {
        let trial = x + d * alpha;
        evaluations += 1;
        match f(&trial) {
            Some((v, g)) if v.is_finite() && v <= value + options.c1 * alpha * slope => {
                if g.dot(d) >= options.c2 * slope {
                    return (Some(LineSearchStep { alpha, x: trial, value: v, gradient: g, evaluations }), evaluations);
                }
                lo = alpha;
                best = Some(LineSearchStep { alpha, x: trial, value: v, gradient: g, evaluations });
            }
            _ => hi = alpha,
        }
        alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        if hi.is_finite() && hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    (best, evaluations)
}

/// L-BFGS iteration state, advanced one step at a time so callers can change
/// the objective between steps.
#[derive(Debug, Clone)]
pub struct Minimizer {
    options: SolveOptions,
    memory: Lbfgs,
    x: DVector<f64>,
    value: f64,
    grad: DVector<f64>,
    iterations: usize,
    evaluations: usize,
    last_step: f64,
}

fn evaluate_finite<F>(f: &mut F, x: &DVector<f64>) -> Result<(f64, DVector<f64>), SolverError>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    match f(x) {
        Some((v, g)) if v.is_finite() && g.iter().all(|c| c.is_finite()) => Ok((v, g)),
        _ => Err(SolverError::NonFiniteStart),
    }
}

impl Minimizer {
    pub fn new<F>(f: &mut F, x0: DVector<f64>, options: &SolveOptions) -> Result<Self, SolverError>
    where
        F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
    {
        options.validate()?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteStart);
        }
        let (value, grad) = evaluate_finite(f, &x0)?;
        Ok(Self {
            options: options.clone(),
            memory: Lbfgs::new(options.memory),
            x: x0,
            value,
            grad,
            iterations: 0,
            evaluations: 1,
            last_step: 0.0,
        })
    }

    /// Re-evaluates the current iterate after the objective changed.
    pub fn refresh<F>(&mut self, f: &mut F) -> Result<(), SolverError>
    where
        F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
    {
        let (value, grad) = evaluate_finite(f, &self.x)?;
        self.evaluations += 1;
        self.value = value;
        self.grad = grad;
        Ok(())
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn gradient(&self) -> &DVector<f64> {
        &self.grad
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Accepted step length of the last iteration.
    pub fn last_step(&self) -> f64 {
        self.last_step
    }

    /// One iteration; `Some` once a stopping rule fires.
    pub fn step<F>(&mut self, f: &mut F) -> Option<Termination>
    where
        F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
    {
        if self.grad.amax() <= self.options.grad_tol {
            return Some(Termination::GradientNorm);
        }
        if self.iterations >= self.options.max_iterations {
            return Some(Termination::MaxIterations);
        }
        let mut d = self.memory.direction(&self.grad);
        let mut slope = self.grad.dot(&d);
        if !(slope < 0.0) {
            self.memory.reset();
            d = self.memory.direction(&self.grad);
            slope = self.grad.dot(&d);
        }
        let (step, used) = weak_wolfe(f, &self.x, self.value, slope, &d, &self.options);
        self.evaluations += used;
        let Some(step) = step else {
            return Some(Termination::LineSearchFailed);
        };
        self.iterations += 1;
        let decrease = self.value - step.value;
        self.memory.update(&step.x - &self.x, &step.gradient - &self.grad);
        self.x = step.x;
        self.grad = step.gradient;
        self.value = step.value;
        self.last_step = step.alpha * d.norm();
        (decrease <= self.options.rel_cost_tol * self.value.abs()).then_some(Termination::RelativeDecrease)
    }

    pub fn report(&self, termination: Termination) -> MinimizeReport {
        MinimizeReport {
            x: self.x.clone(),
            value: self.value,
            gradient: self.grad.clone(),
            iterations: self.iterations,
            evaluations: self.evaluations,
            grad_norm: self.grad.amax(),
            termination,
        }
    }
}

/// Minimizes `f`, which returns the value and gradient or `None` where it is
/// undefined.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, options: &SolveOptions) -> Result<MinimizeReport, SolverError>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let mut m = Minimizer::new(&mut f, x0, options)?;
    loop {
        if let Some(t) = m.step(&mut f) {
            return Ok(m.report(t));
        }
    }
}
