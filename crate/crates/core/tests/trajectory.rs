use nalgebra::Vector3;
use proptest::prelude::*;
use swept_sdf::trajectory::{Boundary, BoundaryState, PieceCoeffs, Trajectory};

fn vec3(bound: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-bound..bound).prop_map(Vector3::from)
}

fn instance(max_pieces: usize) -> impl Strategy<Value = (Vec<Vector3<f64>>, Vec<f64>, Boundary)> {
    (2..=max_pieces).prop_flat_map(|m| {
        (
            prop::collection::vec(vec3(3.0), m - 1),
            prop::collection::vec(0.3..2.0f64, m),
            (vec3(3.0), vec3(1.0), vec3(1.0), vec3(3.0), vec3(1.0), vec3(1.0)),
        )
            .prop_map(|(q, t, (p0, v0, a0, p1, v1, a1))| {
                let boundary = Boundary {
                    start: BoundaryState { position: p0, velocity: v0, acceleration: a0 },
                    end: BoundaryState { position: p1, velocity: v1, acceleration: a1 },
                };
                (q, t, boundary)
            })
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// `∫ ‖jerk‖²` by 8-point Gauss–Legendre on each piece, exact for quintics.
fn jerk_cost(traj: &Trajectory) -> f64 {
    const X: [f64; 4] = [0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363];
    const W: [f64; 4] = [0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];
    let mut total = 0.0;
    for (i, &t) in traj.durations().iter().enumerate() {
        for (x, w) in X.iter().zip(W) {
            for s in [-x, *x] {
                total += 0.5 * t * w * traj.eval_piece(i, 0.5 * t * (1.0 + s), 3).norm_squared();
            }
        }
    }
    total
}

/// A smooth functional of the whole trajectory, evaluated through coefficients
/// and durations only.
fn functional(traj: &Trajectory, y: &Vector3<f64>) -> f64 {
    let total = traj.total_duration();
    [0.13, 0.48, 0.91]
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let t = f * total;
            (traj.eval(t, 0).unwrap() - y).norm_squared() + 0.1 * (k as f64 + 1.0) * traj.eval(t, 2).unwrap().norm_squared()
        })
        .sum()
}

/// Its partial derivatives in coefficient space and durations at fixed shape.
fn functional_partials(traj: &Trajectory, y: &Vector3<f64>) -> (Vec<PieceCoeffs>, Vec<f64>) {
    let m = traj.num_pieces();
    let total = traj.total_duration();
    let mut gc = vec![PieceCoeffs::zeros(); m];
    let mut gt = vec![0.0; m];
    for (k, f) in [0.13, 0.48, 0.91].iter().enumerate() {
        let t = f * total;
        let (i, local) = traj.locate_piece(t).unwrap();
        let dp = 2.0 * (traj.eval_piece(i, local, 0) - y);
        let da = 0.2 * (k as f64 + 1.0) * traj.eval_piece(i, local, 2);
        for r in 0..6 {
            let b0 = local.powi(r as i32);
            let b2 = if r >= 2 { (r * (r - 1)) as f64 * local.powi(r as i32 - 2) } else { 0.0 };
            for c in 0..3 {
                gc[i][(r, c)] += dp[c] * b0 + da[c] * b2;
            }
        }
        // the sample time moves with every duration; the local time with all but the earlier ones
        let rate = dp.dot(&traj.eval_piece(i, local, 1)) + da.dot(&traj.eval_piece(i, local, 3));
        for (j, g) in gt.iter_mut().enumerate() {
            *g += rate * if j < i { f - 1.0 } else { *f };
        }
    }
    (gc, gt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn interpolates_waypoints_and_is_c4((q, t, b) in instance(6)) {
        let traj = Trajectory::minco(&q, &t, b).unwrap();
        prop_assert!((traj.total_duration() - t.iter().sum::<f64>()).abs() < 1e-12);
        for (i, w) in q.iter().enumerate() {
            let ti = t[i];
            prop_assert!((traj.eval_piece(i, ti, 0) - w).norm() < 1e-9);
            prop_assert!((traj.eval_piece(i + 1, 0.0, 0) - w).norm() < 1e-9);
            for order in 1..=4 {
                let left = traj.eval_piece(i, ti, order);
                let right = traj.eval_piece(i + 1, 0.0, order);
                prop_assert!((left - right).norm() <= 1e-6 * left.norm().max(right.norm()).max(1.0), "order {order}");
            }
        }
        let end = traj.total_duration();
        prop_assert!((traj.eval(end, 0).unwrap() - b.end.position).norm() < 1e-9);
        prop_assert!((traj.eval(end, 1).unwrap() - b.end.velocity).norm() < 1e-8);
        prop_assert!((traj.eval(0.0, 2).unwrap() - b.start.acceleration).norm() < 1e-9);
    }

    #[test]
    fn propagated_gradient_matches_finite_differences((q, t, b) in instance(4), y in vec3(2.0)) {
        let traj = Trajectory::minco(&q, &t, b).unwrap();
        let (gc, gt) = functional_partials(&traj, &y);
        let (gq, gtt) = traj.propagate_grad(&gc, &gt).unwrap();
        let h = 1e-6;
        let eval = |q: &[Vector3<f64>], t: &[f64]| functional(&Trajectory::minco(q, t, b).unwrap(), &y);
        for i in 0..q.len() {
            for c in 0..3 {
                let (mut qp, mut qm) = (q.clone(), q.clone());
                qp[i][c] += h;
                qm[i][c] -= h;
                let fd = (eval(&qp, &t) - eval(&qm, &t)) / (2.0 * h);
                prop_assert!(rel_close(gq[i][c], fd, 1e-5), "q[{i}][{c}]: {} vs {fd}", gq[i][c]);
            }
        }
        for i in 0..t.len() {
            let (mut tp, mut tm) = (t.clone(), t.clone());
            tp[i] += h;
            tm[i] -= h;
            let fd = (eval(&q, &tp) - eval(&q, &tm)) / (2.0 * h);
            prop_assert!(rel_close(gtt[i], fd, 1e-5), "T[{i}]: {} vs {fd}", gtt[i]);
        }
    }

    #[test]
    fn jerk_cost_scales_with_fifth_power((q, t) in (2..5usize).prop_flat_map(|m| {
        (prop::collection::vec(vec3(2.0), m - 1), prop::collection::vec(0.3..2.0f64, m))
    }), kappa in 0.5..3.0f64) {
        let b = Boundary::rest_to_rest(Vector3::zeros(), Vector3::new(1.0, -0.5, 0.3));
        let base = jerk_cost(&Trajectory::minco(&q, &t, b).unwrap());
        let scaled: Vec<f64> = t.iter().map(|x| x * kappa).collect();
        let stretched = jerk_cost(&Trajectory::minco(&q, &scaled, b).unwrap());
        prop_assert!(rel_close(stretched, base * kappa.powi(-5), 1e-9));
    }

    #[test]
    fn snap_derivative_is_constant_per_piece((q, t, b) in instance(4)) {
        let traj = Trajectory::minco(&q, &t, b).unwrap();
        for (i, &ti) in t.iter().enumerate() {
            let a = traj.eval_piece(i, 0.1 * ti, 5);
            let c = traj.eval_piece(i, 0.9 * ti, 5);
            prop_assert!((a - c).norm() <= 1e-9 * a.norm().max(1.0));
        }
    }
}

#[test]
fn locate_piece_examples() {
    let b = Boundary::rest_to_rest(Vector3::zeros(), Vector3::x());
    let traj = Trajectory::minco(&[Vector3::new(0.3, 0.0, 0.0), Vector3::new(0.6, 0.0, 0.0)], &[1.0; 3], b).unwrap();
    let (i, local) = traj.locate_piece(1.5).unwrap();
    assert_eq!((i, local), (1, 0.5));
    assert_eq!(traj.locate_piece(0.0).unwrap(), (0, 0.0));
    assert_eq!(traj.locate_piece(3.0).unwrap(), (2, 1.0));
}

#[test]
fn rest_to_rest_jerk_cost_and_time_gradient() {
    let b = Boundary::rest_to_rest(Vector3::zeros(), Vector3::x());
    let traj = Trajectory::minco(&[], &[1.0], b).unwrap();
    // p = 10t³ − 15t⁴ + 6t⁵ has jerk 60 − 360t + 360t², whose squared integral is 720
    assert!(rel_close(jerk_cost(&traj), 720.0, 1e-12));
    let h = 1e-6;
    let fd = (jerk_cost(&Trajectory::minco(&[], &[1.0 + h], b).unwrap())
        - jerk_cost(&Trajectory::minco(&[], &[1.0 - h], b).unwrap()))
        / (2.0 * h);
    assert!(rel_close(fd, -3600.0, 1e-4));
}
