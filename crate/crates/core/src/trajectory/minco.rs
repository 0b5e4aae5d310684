use nalgebra::Vector3;

use super::{basis, check_durations, BandedMatrix, Boundary, PieceCoeffs, Trajectory, TrajectoryError};

// Constraint rows per junction, in order: snap, jerk, acceleration and
// velocity continuity, then p_i(T_i) = q_i and p_{i+1}(0) = q_i.
const BAND: usize = 8;

fn assemble(durations: &[f64]) -> BandedMatrix {
    let m = durations.len();
    let n = 6 * m;
    let mut a = BandedMatrix::zeros(n, BAND, BAND);
    for d in 0..3 {
        for (j, v) in basis(0.0, d).iter().enumerate() {
            if *v != 0.0 {
                a.set(d, j, *v);
            }
        }
    }
    for (i, &t) in durations.iter().enumerate().take(m - 1) {
        let row = 3 + 6 * i;
        for k in 0..4 {
            let order = 4 - k;
            let end = basis(t, order);
            let start = basis(0.0, order);
            for j in 0..6 {
                a.set(row + k, 6 * i + j, end[j]);
                a.set(row + k, 6 * (i + 1) + j, -start[j]);
            }
        }
        for (j, v) in basis(t, 0).iter().enumerate() {
            a.set(row + 4, 6 * i + j, *v);
        }
        a.set(row + 5, 6 * (i + 1), 1.0);
    }
    let row = n - 3;
    for d in 0..3 {
        for (j, v) in basis(durations[m - 1], d).iter().enumerate() {
            a.set(row + d, 6 * (m - 1) + j, *v);
        }
    }
    a
}

impl Trajectory {
    /// The unique C⁴ piecewise-quintic through `waypoints` with the given piece
    /// durations and clamped boundary states; it minimizes ∫‖jerk‖² dt.
    pub fn minco(
        waypoints: &[Vector3<f64>],
        durations: &[f64],
        boundary: Boundary,
    ) -> Result<Self, TrajectoryError> {
        let m = durations.len();
        if m == 0 {
            return Err(TrajectoryError::NoPieces);
        }
        if waypoints.len() + 1 != m {
            return Err(TrajectoryError::WaypointCount { expected: m - 1, actual: waypoints.len() });
        }
        check_durations(durations)?;
        if waypoints.iter().any(|q| q.iter().any(|v| !v.is_finite())) {
            return Err(TrajectoryError::NonFinite);
        }

        let lu = assemble(durations).factor().map_err(|e| TrajectoryError::Singular(e.column))?;
        let mut x = vec![Vector3::zeros(); 6 * m];
        x[0] = boundary.start.position;
        x[1] = boundary.start.velocity;
        x[2] = boundary.start.acceleration;
        for (i, q) in waypoints.iter().enumerate() {
            x[3 + 6 * i + 4] = *q;
            x[3 + 6 * i + 5] = *q;
        }
        x[6 * m - 3] = boundary.end.position;
        x[6 * m - 2] = boundary.end.velocity;
        x[6 * m - 1] = boundary.end.acceleration;
        lu.solve(&mut x);

        let coeffs = (0..m).map(|i| PieceCoeffs::from_fn(|r, c| x[6 * i + r][c])).collect();
        Self::from_coefficients(coeffs, durations.to_vec(), boundary)
    }

    /// Pulls a gradient given in coefficient space back onto the waypoints and
    /// durations: adjoint solve of the constraint system plus the explicit
    /// duration dependence of its rows.
    pub fn propagate_grad(
        &self,
        grad_coeffs: &[PieceCoeffs],
        grad_durations: &[f64],
    ) -> Result<(Vec<Vector3<f64>>, Vec<f64>), TrajectoryError> {
        let m = self.num_pieces();
        if grad_coeffs.len() != m || grad_durations.len() != m {
            return Err(TrajectoryError::Shape(format!(
                "expected {m} coefficient blocks and durations, got {} and {}",
                grad_coeffs.len(),
                grad_durations.len()
            )));
        }
        let lu = assemble(&self.durations).factor().map_err(|e| TrajectoryError::Singular(e.column))?;
        let mut g: Vec<Vector3<f64>> = (0..6 * m).map(|k| grad_coeffs[k / 6].row(k % 6).transpose()).collect();
        lu.solve_transpose(&mut g);

        let grad_q = (0..m - 1).map(|i| g[3 + 6 * i + 4] + g[3 + 6 * i + 5]).collect();
        let mut grad_t = grad_durations.to_vec();
        for i in 0..m {
            let t = self.durations[i];
            let rows: Vec<(usize, usize)> = if i + 1 < m {
                let row = 3 + 6 * i;
                (0..5).map(|k| (row + k, if k < 4 { 4 - k } else { 0 })).collect()
            } else {
                (0..3).map(|d| (6 * m - 3 + d, d)).collect()
            };
            for (row, order) in rows {
                grad_t[i] -= g[row].dot(&self.eval_piece(i, t, order + 1));
            }
        }
        Ok((grad_q, grad_t))
    }
}
