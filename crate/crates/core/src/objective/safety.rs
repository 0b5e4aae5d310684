use nalgebra::{Matrix3, Vector3, Vector4};

use super::{accumulate, ObjectiveError, PlannerConfig, SafetyGradient, TermGradient, TimeAnchor};
use crate::flatness::{attitude_jacobians, rotation_quaternion_derivatives};
use crate::geometry::MeshDistanceIndex;
use crate::sweep::{ArgminLocation, FlatMotion, SweepEngine, SweepError, SweepOptions, TimeSample, WarmStartCache};
use crate::trajectory::Trajectory;

/// Sensitivity of an interior minimizer `t*` to the body state at `t*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TStarGradients {
    pub dp: Vector3<f64>,
    pub dv: Vector3<f64>,
    pub domega: Vector3<f64>,
    pub dquat: Vector4<f64>,
    /// `f̈(t*)`.
    pub curvature: f64,
}

/// Implicit-function gradients of `t*` from `ḟ(t*) = 0`, or `None` when
/// `|f̈(t*)| < tol`. `hessian` is the body-frame SDF Hessian at `x_rel`.
pub fn tstar_gradients(sample: &TimeSample, hessian: &Matrix3<f64>, tol: f64) -> Option<TStarGradients> {
    let s = &sample.state;
    let r = &s.rotation;
    let rt = r.transpose();
    let u = sample.x_rel;
    let d = r * u;
    let g = sample.grad_body;
    let rtv = rt * s.v;
    let y = -s.omega.cross(&u) - rtv;
    let hy = hessian * y;

    let ydot = -s.omega_dot.cross(&u) - s.omega.cross(&y) + s.omega.cross(&rtv) - rt * s.a;
    let curvature = y.dot(&hy) + g.dot(&ydot);
    if !(curvature.abs() >= tol) || !curvature.is_finite() {
        return None;
    }

    let dr = rotation_quaternion_derivatives(&s.quat);
    let dquat = Vector4::from_fn(|k, _| {
        let du = dr[k].transpose() * d;
        let dy = -s.omega.cross(&du) - dr[k].transpose() * s.v;
        -(hy.dot(&du) + g.dot(&dy)) / curvature
    });
    Some(TStarGradients {
        dp: r * (hy + s.omega.cross(&g)) / curvature,
        dv: r * g / curvature,
        domega: u.cross(&g) / curvature,
        dquat,
        curvature,
    })
}

/// `dt*/dq` and `dt*/dT` for an interior minimizer on a flat trajectory, or
/// `None` when `f̈(t*)` is too small.
pub fn tstar_trajectory_gradient(
    traj: &Trajectory,
    sample: &TimeSample,
    hessian: &Matrix3<f64>,
    tol: f64,
) -> Result<Option<(Vec<Vector3<f64>>, Vec<f64>)>, ObjectiveError> {
    let Some(ts) = tstar_gradients(sample, hessian, tol) else {
        return Ok(None);
    };
    let s = &sample.state;
    let jac = attitude_jacobians(&s.a, &s.j).map_err(SweepError::from)?;
    let g = [
        ts.dp,
        ts.dv,
        jac.dquat_da.transpose() * ts.dquat + jac.domega_da.transpose() * ts.domega,
        jac.dquat_dj.transpose() * ts.dquat + jac.domega_dj.transpose() * ts.domega,
    ];
    let m = traj.num_pieces();
    let mut grad_c = vec![Default::default(); m];
    let mut grad_t = vec![0.0; m];
    let (piece, local) = traj.locate_piece(s.t)?;
    accumulate(traj, piece, local, TimeAnchor::Absolute, &g, &mut grad_c, &mut grad_t);
    Ok(Some(traj.propagate_grad(&grad_c, &grad_t)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyTerms {
    pub term: TermGradient,
    pub active: usize,
    pub boundary: usize,
    /// Interior minima where two smooth branches of `f(t)` cross.
    pub kinks: usize,
    pub degenerate: usize,
}

/// `∂f/∂p` and `∂f/∂q` at fixed time.
fn explicit_partials(sample: &TimeSample) -> (Vector3<f64>, Vector4<f64>) {
    let s = &sample.state;
    let d = s.rotation * sample.x_rel;
    let dr = rotation_quaternion_derivatives(&s.quat);
    let df_dq = Vector4::from_fn(|k, _| sample.grad_body.dot(&(dr[k].transpose() * d)));
    (-(s.rotation * sample.grad_body), df_dq)
}

/// Offset used to sample both branches at a kink minimum (s).
const KINK_PROBE: f64 = 1e-7;

/// `Σ max(s_thr − f*(xᵢ), 0)³` over the selected obstacle points.
///
/// At a kink minimum, where `f(t)` is the crossing of a decreasing and an
/// increasing branch, `t*` follows the crossing and the gradient of `f*` is
/// `(ḟ₊ ∂f₋ − ḟ₋ ∂f₊) / (ḟ₊ − ḟ₋)`.
pub fn safety_cost(
    traj: &Trajectory,
    index: &MeshDistanceIndex,
    cloud: &[Vector3<f64>],
    selected: &[usize],
    config: &PlannerConfig,
    cache: &mut WarmStartCache,
) -> Result<SafetyTerms, ObjectiveError> {
    let m = traj.num_pieces();
    let motion = FlatMotion::new(traj.clone());
    let options = SweepOptions { seed_stride: config.seed_stride, verify_warm: config.verify_warm_start, ..SweepOptions::default() };
    let engine = SweepEngine::new(index, &motion, options)?;
    let (t_min, t_max) = engine.time_range();
    let mut out = SafetyTerms { term: TermGradient::zeros(m), active: 0, boundary: 0, kinks: 0, degenerate: 0 };

    for &id in selected {
        let x = &cloud[id];
        let res = engine.swept_sdf(x, Some(id), cache)?;
        let gap = config.s_thr - res.f_star;
        if gap <= 0.0 {
            continue;
        }
        out.active += 1;
        out.term.value += gap.powi(3);
        let weight = -3.0 * gap * gap;

        let s = &res.state;
        let sample = TimeSample { f: res.f_star, fdot: res.fdot, x_rel: res.x_rel, grad_body: res.grad_body, state: *s };
        let (mut g_p, mut df_dq) = explicit_partials(&sample);
        let mut g_v = Vector3::zeros();
        let mut domega = Vector3::zeros();

        let (piece, local, anchor) = match res.at_boundary {
            ArgminLocation::TMin => (0, 0.0, TimeAnchor::PieceFraction(0.0)),
            ArgminLocation::TMax => (m - 1, traj.durations()[m - 1], TimeAnchor::PieceFraction(1.0)),
            ArgminLocation::Interior => {
                let (i, local) = traj.locate_piece(res.t_star)?;
                (i, local, TimeAnchor::Absolute)
            }
        };
        if res.at_boundary != ArgminLocation::Interior {
            out.boundary += 1;
        } else if res.fdot.abs() > engine.options().stationarity_tol {
            let left = engine.sample(x, (res.t_star - KINK_PROBE).max(t_min))?;
            let right = engine.sample(x, (res.t_star + KINK_PROBE).min(t_max))?;
            if left.fdot < 0.0 && right.fdot > 0.0 {
                out.kinks += 1;
                let (wl, wr) = (right.fdot / (right.fdot - left.fdot), -left.fdot / (right.fdot - left.fdot));
                let (pl, ql) = explicit_partials(&left);
                let (pr, qr) = explicit_partials(&right);
                g_p = pl * wl + pr * wr;
                df_dq = ql * wl + qr * wr;
            } else {
                out.degenerate += 1;
            }
        } else if config.safety_gradient == SafetyGradient::Full {
            let hess = index.sdf_hessian(&res.x_rel, config.hessian_step);
            match tstar_gradients(&sample, &hess, config.degeneracy_tol) {
                Some(ts) => {
                    g_p += ts.dp * res.fdot;
                    g_v += ts.dv * res.fdot;
                    domega = ts.domega * res.fdot;
                    df_dq += ts.dquat * res.fdot;
                }
                None => out.degenerate += 1,
            }
        }

        let jac = attitude_jacobians(&s.a, &s.j).map_err(SweepError::from)?;
        let g_a = jac.dquat_da.transpose() * df_dq + jac.domega_da.transpose() * domega;
        let g_j = jac.dquat_dj.transpose() * df_dq + jac.domega_dj.transpose() * domega;
        let g = [g_p * weight, g_v * weight, g_a * weight, g_j * weight];
        accumulate(traj, piece, local, anchor, &g, &mut out.term.grad_c, &mut out.term.grad_t);
    }
    Ok(out)
}
