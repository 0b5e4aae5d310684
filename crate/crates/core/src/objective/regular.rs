use nalgebra::Vector3;

use super::{accumulate, PlannerConfig, TermGradient, TimeAnchor};
use crate::flatness::GRAVITY;
use crate::trajectory::Trajectory;

/// `∫ ‖p⃛‖² dt`, exact for quintic pieces.
pub fn smoothness_cost(traj: &Trajectory) -> TermGradient {
    let mut out = TermGradient::zeros(traj.num_pieces());
    for (i, (c, &t)) in traj.coeffs().iter().zip(traj.durations()).enumerate() {
        let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
        for k in 0..3 {
            let (c3, c4, c5) = (c[(3, k)], c[(4, k)], c[(5, k)]);
            out.value += 36.0 * c3 * c3 * t
                + 144.0 * c3 * c4 * t2
                + (192.0 * c4 * c4 + 240.0 * c3 * c5) * t3
                + 720.0 * c4 * c5 * t4
                + 720.0 * c5 * c5 * t5;
            let g = &mut out.grad_c[i];
            g[(3, k)] += 72.0 * c3 * t + 144.0 * c4 * t2 + 240.0 * c5 * t3;
            g[(4, k)] += 144.0 * c3 * t2 + 384.0 * c4 * t3 + 720.0 * c5 * t4;
            g[(5, k)] += 240.0 * c3 * t3 + 720.0 * c4 * t4 + 1440.0 * c5 * t5;
        }
        out.grad_t[i] += traj.eval_piece(i, t, 3).norm_squared();
    }
    out
}

/// Trapezoid rule over each piece of the cubed speed and thrust violations.
pub fn feasibility_cost(traj: &Trajectory, config: &PlannerConfig) -> TermGradient {
    let kappa = config.quadrature;
    let vmax2 = config.v_max * config.v_max;
    let mut out = TermGradient::zeros(traj.num_pieces());
    for (i, &dur) in traj.durations().iter().enumerate() {
        let h = dur / kappa as f64;
        for k in 0..=kappa {
            let tau = k as f64 * h;
            let w = if k == 0 || k == kappa { 0.5 * h } else { h };
            let v = traj.eval_piece(i, tau, 1);
            let z = traj.eval_piece(i, tau, 2) + Vector3::z() * GRAVITY;
            let mut penalty = 0.0;
            let mut dv = Vector3::zeros();
            let mut da = Vector3::zeros();

            let over = v.norm_squared() - vmax2;
            if over > 0.0 {
                penalty += over.powi(3);
                dv += v * (6.0 * over * over);
            }
            let thrust = z.norm();
            let high = thrust - config.thrust_max;
            let low = config.thrust_min - thrust;
            if high > 0.0 {
                penalty += high.powi(3);
                da += z * (3.0 * high * high / thrust);
            }
            if low > 0.0 {
                penalty += low.powi(3);
                if thrust > 0.0 {
                    da -= z * (3.0 * low * low / thrust);
                }
            }
            if penalty == 0.0 {
                continue;
            }
            out.value += w * penalty;
            out.grad_t[i] += w / dur * penalty;
            let g = [Vector3::zeros(), dv * w, da * w, Vector3::zeros()];
            let anchor = TimeAnchor::PieceFraction(k as f64 / kappa as f64);
            accumulate(traj, i, tau, anchor, &g, &mut out.grad_c, &mut out.grad_t);
        }
    }
    out
}

/// Total duration.
pub fn time_cost(traj: &Trajectory) -> TermGradient {
    let mut out = TermGradient::zeros(traj.num_pieces());
    out.value = traj.total_duration();
    out.grad_t.fill(1.0);
    out
}
