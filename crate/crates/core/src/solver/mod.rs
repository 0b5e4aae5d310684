//! Quasi-Newton minimization of the planning objective over interior waypoints
//! and log-durations, and the planning loop around it.

mod lbfgs;

use log::{debug, info, warn};
use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::MeshDistanceIndex;
use crate::objective::{total_cost, CostReport, ObjectiveError, PlannerConfig};
use crate::sweep::{dense_clearance, sample_times, select_obstacles, ClearanceReport, FlatMotion, Motion, SweepError, WarmStartCache};
use crate::trajectory::{Boundary, Trajectory, TrajectoryError};

pub use lbfgs::{minimize, weak_wolfe, Lbfgs, LineSearchStep, MinimizeReport, Minimizer, SolveOptions, Termination};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("cost or gradient is not finite at the initial point")]
    NonFiniteStart,
    #[error("duration {index} is {value}, expected a positive finite value")]
    NonPositiveDuration { index: usize, value: f64 },
    #[error("decision vector of length {len} does not fit {pieces} pieces")]
    Shape { len: usize, pieces: usize },
    #[error("start state in collision (clearance {clearance:.4} m)")]
    StartInCollision { clearance: f64 },
    #[error("goal state in collision (clearance {clearance:.4} m)")]
    GoalInCollision { clearance: f64 },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

/// Interior waypoints followed by log-durations `τ = ln T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    pub values: DVector<f64>,
    pub pieces: usize,
}

impl DecisionVector {
    pub fn pack(waypoints: &[Vector3<f64>], durations: &[f64]) -> Result<Self, SolverError> {
        let pieces = durations.len();
        if pieces == 0 || waypoints.len() + 1 != pieces {
            return Err(SolverError::Shape { len: 3 * waypoints.len() + pieces, pieces });
        }
        if let Some(index) = durations.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(SolverError::NonPositiveDuration { index, value: durations[index] });
        }
        let values = waypoints.iter().flat_map(|q| q.iter().copied()).chain(durations.iter().map(|t| t.ln())).collect::<Vec<_>>();
        Ok(Self { values: DVector::from_vec(values), pieces })
    }

    pub fn from_values(values: DVector<f64>, pieces: usize) -> Result<Self, SolverError> {
        if pieces == 0 || values.len() != 4 * pieces - 3 {
            return Err(SolverError::Shape { len: values.len(), pieces });
        }
        Ok(Self { values, pieces })
    }

    pub fn unpack(&self) -> (Vec<Vector3<f64>>, Vec<f64>) {
        let n = 3 * (self.pieces - 1);
        let q = self.values.as_slice()[..n].chunks_exact(3).map(Vector3::from_column_slice).collect();
        let t = self.values.as_slice()[n..].iter().map(|tau| tau.exp()).collect();
        (q, t)
    }

    /// Gradient over the decision vector from gradients over `(q, T)`, using
    /// `dJ/dτ = T dJ/dT`.
    pub fn pack_gradient(grad_q: &[Vector3<f64>], grad_t: &[f64], durations: &[f64]) -> DVector<f64> {
        let values: Vec<f64> = grad_q
            .iter()
            .flat_map(|g| g.iter().copied())
            .chain(grad_t.iter().zip(durations).map(|(g, t)| g * t))
            .collect();
        DVector::from_vec(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanOptions {
    pub solve: SolveOptions,
    /// Number of pieces; defaults to one per half meter of straight-line distance.
    pub pieces: Option<usize>,
    /// Obstacle reselection period in iterations.
    pub reselect_every: usize,
    /// Extra growth of the selection boxes; reselection also happens when a
    /// piece leaves its selection box grown by this much (m).
    pub trust_radius: f64,
    /// Clearance added to `s_thr` inside the optimization (m).
    pub clearance_margin: f64,
    /// Restarts with a tenfold safety weight and doubled margin while the
    /// result still violates the clearance.
    pub max_escalations: usize,
    /// Sample period of the final clearance certificate (s).
    pub certify_dt: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            pieces: None,
            reselect_every: 10,
            trust_radius: 0.25,
            clearance_margin: 0.01,
            max_escalations: 3,
            certify_dt: 1e-3,
        }
    }
}

/// One line of the optimization log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub round: usize,
    pub j_total: f64,
    pub j_s: f64,
    pub j_m: f64,
    pub j_d: f64,
    pub j_t: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub active_obstacles: usize,
    pub selected_obstacles: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    /// Final cost under the requested configuration.
    pub report: CostReport,
    pub history: Vec<IterationLog>,
    pub iterations: usize,
    pub termination: Termination,
    pub escalations: usize,
    pub certificate: ClearanceReport,
    /// Solver converged, the safety penalty vanished and the certificate holds.
    pub success: bool,
}

/// Tolerance on the sampled clearance certificate (m).
pub const CERTIFICATE_SLACK: f64 = 1e-3;

/// Body clearance to the cloud when hovering at `p` (zero yaw, level).
fn rest_clearance(index: &MeshDistanceIndex, cloud: &[Vector3<f64>], p: &Vector3<f64>) -> f64 {
    cloud.iter().map(|x| index.signed_distance(&(x - p))).fold(f64::INFINITY, f64::min)
}

struct Selection {
    ids: Vec<usize>,
    boxes: Vec<(Vector3<f64>, Vector3<f64>)>,
}

impl Selection {
    fn new(traj: &Trajectory, cloud: &[Vector3<f64>], inflation: f64) -> Self {
        let motion = FlatMotion::new(traj.clone());
        Self { ids: select_obstacles(cloud, &motion, inflation), boxes: motion.position_bounds() }
    }

    /// Whether some piece left its selection box grown by `radius`.
    fn escaped(&self, traj: &Trajectory, radius: f64) -> bool {
        self.boxes.iter().enumerate().any(|(i, (lo, hi))| {
            let (a, b) = traj.piece_bounds(i);
            (0..3).any(|k| a[k] < lo[k] - radius || b[k] > hi[k] + radius)
        })
    }
}

fn straight_line(boundary: &Boundary, pieces: usize, v_max: f64) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let a = boundary.start.position;
    let b = boundary.end.position;
    let q = (1..pieces).map(|i| a + (b - a) * (i as f64 / pieces as f64)).collect();
    let seg = ((b - a).norm() / pieces as f64).max(1e-3);
    (q, vec![seg / (0.5 * v_max); pieces])
}

/// Plans a trajectory from the boundary's start state to its end state that
/// keeps the swept body at least `config.s_thr` from every cloud point.
pub fn plan(
    index: &MeshDistanceIndex,
    cloud: &[Vector3<f64>],
    boundary: Boundary,
    config: &PlannerConfig,
    options: &PlanOptions,
) -> Result<PlanResult, SolverError> {
    config.validate()?;
    options.solve.validate()?;
    if !(options.clearance_margin >= 0.0 && options.trust_radius >= 0.0 && options.certify_dt > 0.0) {
        return Err(SolverError::Options("margins must be nonnegative and certify_dt positive".into()));
    }
    let start_clearance = rest_clearance(index, cloud, &boundary.start.position);
    if start_clearance <= 0.0 {
        return Err(SolverError::StartInCollision { clearance: start_clearance });
    }
    let goal_clearance = rest_clearance(index, cloud, &boundary.end.position);
    if goal_clearance <= 0.0 {
        return Err(SolverError::GoalInCollision { clearance: goal_clearance });
    }
    if start_clearance.min(goal_clearance) < config.s_thr {
        warn!("start or goal is closer than s_thr to an obstacle; the safety penalty cannot vanish");
    }

    let length = (boundary.end.position - boundary.start.position).norm();
    let pieces = options.pieces.unwrap_or_else(|| ((length / 0.5).ceil() as usize).clamp(2, 64)).max(1);
    let (q0, t0) = straight_line(&boundary, pieces, config.v_max);
    let mut x = DecisionVector::pack(&q0, &t0)?.values;

    let body_radius = index.mesh().circumscribed_radius();
    let decode = |x: &DVector<f64>| -> Result<Trajectory, SolverError> {
        let (q, t) = DecisionVector { values: x.clone(), pieces }.unpack();
        Ok(Trajectory::minco(&q, &t, boundary)?)
    };

    let mut work = config.clone();
    let mut margin = options.clearance_margin;
    let mut history = Vec::new();
    let mut cache = WarmStartCache::new();
    let mut total_iterations = 0;
    let mut escalations = 0;

    loop {
        work.s_thr = config.s_thr + margin;
        let inflation = work.inflation_for(body_radius) + options.trust_radius;
        let mut selection = Selection::new(&decode(&x)?, cloud, inflation);
        // Trial points start from the cache of the current iterate so that the
        // objective seen by one line search does not depend on evaluation order.
        let evaluate = |x: &DVector<f64>, ids: &[usize], base: &WarmStartCache| {
            let (q, t) = DecisionVector { values: x.clone(), pieces }.unpack();
            let traj = Trajectory::minco(&q, &t, boundary).ok()?;
            let mut cache = base.clone();
            let report = total_cost(&traj, index, cloud, ids, &work, &mut cache).ok()?;
            let grad = DecisionVector::pack_gradient(&report.grad_q, &report.grad_t, &t);
            Some((report, grad, cache))
        };

        let mut minimizer = {
            let ids = selection.ids.clone();
            let mut next = None;
            let mut f = |x: &DVector<f64>| {
                let (report, grad, c) = evaluate(x, &ids, &cache)?;
                let value = report.j_total;
                next = Some(c);
                Some((value, grad))
            };
            let m = Minimizer::new(&mut f, x.clone(), &options.solve)?;
            cache = next.unwrap_or(cache);
            m
        };
        let termination = loop {
            let ids = selection.ids.clone();
            let mut trials: Vec<(DVector<f64>, CostReport, WarmStartCache)> = Vec::new();
            let outcome = {
                let mut f = |y: &DVector<f64>| {
                    let (report, grad, c) = evaluate(y, &ids, &cache)?;
                    let value = report.j_total;
                    trials.push((y.clone(), report, c));
                    Some((value, grad))
                };
                minimizer.step(&mut f)
            };
            if let Some(t) = outcome {
                break t;
            }
            total_iterations += 1;
            if let Some((_, rep, c)) = trials.into_iter().rev().find(|(y, _, _)| y == minimizer.x()) {
                cache = c;
                let entry = IterationLog {
                    iteration: total_iterations,
                    round: escalations,
                    j_total: rep.j_total,
                    j_s: rep.j_s,
                    j_m: rep.j_m,
                    j_d: rep.j_d,
                    j_t: rep.j_t,
                    grad_norm: minimizer.gradient().amax(),
                    step: minimizer.last_step(),
                    active_obstacles: rep.active_obstacles,
                    selected_obstacles: ids.len(),
                    evaluations: minimizer.evaluations(),
                };
                debug!("{}", serde_json::to_string(&entry).unwrap_or_default());
                history.push(entry);
            }

            let traj = decode(minimizer.x())?;
            if minimizer.iterations() % options.reselect_every.max(1) == 0 || selection.escaped(&traj, options.trust_radius) {
                selection = Selection::new(&traj, cloud, inflation);
                let ids = selection.ids.clone();
                let mut next = None;
                let mut f = |y: &DVector<f64>| {
                    let (report, grad, c) = evaluate(y, &ids, &cache)?;
                    let value = report.j_total;
                    next = Some(c);
                    Some((value, grad))
                };
                minimizer.refresh(&mut f)?;
                cache = next.unwrap_or(cache);
            }
        };
        x = minimizer.x().clone();

        let traj = decode(&x)?;
        let final_ids = select_obstacles(cloud, &FlatMotion::new(traj.clone()), config.inflation_for(body_radius));
        let report = total_cost(&traj, index, cloud, &final_ids, config, &mut WarmStartCache::new())?;
        let motion = FlatMotion::new(traj.clone());
        let (t_min, t_max) = motion.time_range();
        let certificate = dense_clearance(index, &motion, cloud, &sample_times(t_min, t_max, options.certify_dt))?;
        let safe = report.j_s == 0.0 && certificate.min_clearance >= config.s_thr - CERTIFICATE_SLACK;
        info!(
            "round {escalations}: {termination:?} after {} iterations, J = {:.6e}, J_s = {:.3e}, clearance {:.4}",
            minimizer.iterations(),
            report.j_total,
            report.j_s,
            certificate.min_clearance
        );

        if safe || escalations >= options.max_escalations {
            let success = safe && termination.is_converged();
            return Ok(PlanResult {
                trajectory: traj,
                report,
                history,
                iterations: total_iterations,
                termination,
                escalations,
                certificate,
                success,
            });
        }
        escalations += 1;
        work.lambda_s *= 10.0;
        margin = (2.0 * margin).max(1e-3);
    }
}
