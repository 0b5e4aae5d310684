//! Penalty terms of the whole-body planning objective and their gradients:
//! safety against the swept volume, jerk smoothness, dynamic feasibility and
//! total time.

mod regular;
mod safety;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flatness::GRAVITY;
use crate::geometry::MeshDistanceIndex;
use crate::sweep::{SweepError, WarmStartCache};
use crate::trajectory::{basis, PieceCoeffs, Trajectory, TrajectoryError};

pub use regular::{feasibility_cost, smoothness_cost, time_cost};
pub use safety::{safety_cost, tstar_gradients, tstar_trajectory_gradient, SafetyTerms, TStarGradients};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("invalid planner config: {0}")]
    Config(String),
}

/// How the safety gradient accounts for the dependence of `t*` on the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyGradient {
    /// Explicit implicit-function gradients of `t*`.
    #[default]
    Full,
    /// Partial derivatives at fixed `t*` only.
    Envelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub lambda_s: f64,
    pub lambda_m: f64,
    pub lambda_d: f64,
    pub rho: f64,
    /// Required clearance between the swept volume and every obstacle point (m).
    pub s_thr: f64,
    pub v_max: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    /// Trapezoid intervals per piece for the feasibility integral.
    pub quadrature: usize,
    /// Growth of the per-piece boxes used to select obstacles (m); defaults to
    /// the body radius plus the clearance plus a small margin.
    pub inflation: Option<f64>,
    pub seed_stride: Option<f64>,
    /// Re-check warm-started argmin results against the seed samples.
    pub verify_warm_start: bool,
    pub hessian_step: f64,
    /// Below this `|f̈(t*)|` the `t*` gradient is dropped.
    pub degeneracy_tol: f64,
    pub safety_gradient: SafetyGradient,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            lambda_s: 1e4,
            lambda_m: 1.0,
            lambda_d: 1e3,
            rho: 10.0,
            s_thr: 0.05,
            v_max: 2.0,
            thrust_min: 0.3 * GRAVITY,
            thrust_max: GRAVITY + 3.0,
            quadrature: 16,
            inflation: None,
            seed_stride: None,
            verify_warm_start: true,
            hessian_step: crate::geometry::HESSIAN_STEP,
            degeneracy_tol: 1e-9,
            safety_gradient: SafetyGradient::Full,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let bad = |m: &str| Err(ObjectiveError::Config(m.to_string()));
        let weights = [self.lambda_s, self.lambda_m, self.lambda_d, self.rho];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("weights must be finite and nonnegative");
        }
        if !(self.s_thr > 0.0 && self.s_thr.is_finite()) {
            return bad("s_thr must be positive");
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad("v_max must be positive");
        }
        if !(0.0 < self.thrust_min && self.thrust_min < GRAVITY && GRAVITY < self.thrust_max && self.thrust_max.is_finite()) {
            return bad("thrust limits must satisfy 0 < thrust_min < g < thrust_max");
        }
        if self.quadrature < 8 {
            return bad("quadrature needs at least 8 intervals per piece");
        }
        if let Some(i) = self.inflation {
            if !(i >= 0.0 && i.is_finite()) {
                return bad("inflation must be nonnegative");
            }
        }
        if !(self.hessian_step > 0.0) || !(self.degeneracy_tol >= 0.0) {
            return bad("hessian_step and degeneracy_tol must be positive");
        }
        Ok(())
    }

    pub fn inflation_for(&self, body_radius: f64) -> f64 {
        self.inflation.unwrap_or(body_radius + self.s_thr + 0.1)
    }
}

/// Objective value, its parts and its gradient over waypoints and durations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub j_total: f64,
    pub j_s: f64,
    pub j_m: f64,
    pub j_d: f64,
    pub j_t: f64,
    pub grad_q: Vec<Vector3<f64>>,
    pub grad_t: Vec<f64>,
    /// Obstacles closer than `s_thr` to the swept volume.
    pub active_obstacles: usize,
    pub boundary_argmin_count: usize,
    /// Interior minima at a crossing of two branches of `f(t)`.
    pub kink_count: usize,
    /// Interior minimizers whose `t*` gradient was dropped.
    pub degenerate_count: usize,
}

/// A cost term with its gradient in coefficient/duration space.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGradient {
    pub value: f64,
    pub grad_c: Vec<PieceCoeffs>,
    pub grad_t: Vec<f64>,
}

impl TermGradient {
    pub(crate) fn zeros(pieces: usize) -> Self {
        Self { value: 0.0, grad_c: vec![PieceCoeffs::zeros(); pieces], grad_t: vec![0.0; pieces] }
    }
}

/// How a sample time moves when the durations change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum TimeAnchor {
    /// Fixed global time: local time shifts by −1 per earlier duration.
    Absolute,
    /// Local time `f · T_piece`.
    PieceFraction(f64),
}

/// Adds the derivative of a scalar with gradient `g = ∂/∂(p, v, a, j)` at a
/// sample of piece `piece` to the coefficient and duration gradients.
pub(crate) fn accumulate(
    traj: &Trajectory,
    piece: usize,
    local: f64,
    anchor: TimeAnchor,
    g: &[Vector3<f64>; 4],
    grad_c: &mut [PieceCoeffs],
    grad_t: &mut [f64],
) {
    for (d, gd) in g.iter().enumerate() {
        if *gd == Vector3::zeros() {
            continue;
        }
        let b = basis(local, d);
        for (j, bj) in b.iter().enumerate().skip(d) {
            for k in 0..3 {
                grad_c[piece][(j, k)] += bj * gd[k];
            }
        }
    }
    let rate: f64 = (0..4).map(|d| g[d].dot(&traj.eval_piece(piece, local, d + 1))).sum();
    match anchor {
        TimeAnchor::Absolute => {
            for gt in grad_t.iter_mut().take(piece) {
                *gt -= rate;
            }
        }
        TimeAnchor::PieceFraction(f) => grad_t[piece] += f * rate,
    }
}

/// Weighted sum of all terms, pulled back onto waypoints and durations.
pub fn total_cost(
    traj: &Trajectory,
    index: &MeshDistanceIndex,
    cloud: &[Vector3<f64>],
    selected: &[usize],
    config: &PlannerConfig,
    cache: &mut WarmStartCache,
) -> Result<CostReport, ObjectiveError> {
    let m = traj.num_pieces();
    let safety = if config.lambda_s > 0.0 && !selected.is_empty() {
        safety_cost(traj, index, cloud, selected, config, cache)?
    } else {
        SafetyTerms { term: TermGradient::zeros(m), active: 0, boundary: 0, kinks: 0, degenerate: 0 }
    };
    let smooth = smoothness_cost(traj);
    let feas = feasibility_cost(traj, config);
    let time = time_cost(traj);

    let weighted = [
        (config.lambda_s, &safety.term),
        (config.lambda_m, &smooth),
        (config.lambda_d, &feas),
        (config.rho, &time),
    ];
    let mut grad_c = vec![PieceCoeffs::zeros(); m];
    let mut grad_t = vec![0.0; m];
    for (w, term) in weighted {
        if w == 0.0 {
            continue;
        }
        for i in 0..m {
            grad_c[i] += term.grad_c[i] * w;
            grad_t[i] += term.grad_t[i] * w;
        }
    }
    let (grad_q, grad_t) = traj.propagate_grad(&grad_c, &grad_t)?;

    Ok(CostReport {
        j_total: config.lambda_s * safety.term.value
            + config.lambda_m * smooth.value
            + config.lambda_d * feas.value
            + config.rho * time.value,
        j_s: safety.term.value,
        j_m: smooth.value,
        j_d: feas.value,
        j_t: time.value,
        grad_q,
        grad_t,
        active_obstacles: safety.active,
        boundary_argmin_count: safety.boundary,
        kink_count: safety.kinks,
        degenerate_count: safety.degenerate,
    })
}
