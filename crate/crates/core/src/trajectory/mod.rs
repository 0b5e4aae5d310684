//! Minimum-jerk piecewise-quintic trajectories (MINCO, s = 3) parameterized by
//! interior waypoints and piece durations.

mod banded;
mod minco;

use nalgebra::{SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use banded::{BandedLu, BandedMatrix, SingularMatrix};

/// Coefficients of one piece: row `j` multiplies `t^j`, columns are x, y, z.
pub type PieceCoeffs = SMatrix<f64, 6, 3>;

/// Slack when mapping a time just past the horizon back onto it (s).
const END_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory needs at least one piece")]
    NoPieces,
    #[error("duration {index} is {value}, expected a positive finite value")]
    NonPositiveDuration { index: usize, value: f64 },
    #[error("expected {expected} interior waypoints, got {actual}")]
    WaypointCount { expected: usize, actual: usize },
    #[error("non-finite waypoint or boundary state")]
    NonFinite,
    #[error("singular constraint system at column {0}")]
    Singular(usize),
    #[error("time {t} outside [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("derivative order {0} exceeds 5")]
    Order(usize),
    #[error("gradient shape mismatch: {0}")]
    Shape(String),
    #[error("invalid trajectory document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vector3<f64>,
    #[serde(default = "Vector3::zeros")]
    pub velocity: Vector3<f64>,
    #[serde(default = "Vector3::zeros")]
    pub acceleration: Vector3<f64>,
}

impl BoundaryState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self { position, velocity: Vector3::zeros(), acceleration: Vector3::zeros() }
    }

    fn is_finite(&self) -> bool {
        [self.position, self.velocity, self.acceleration].iter().all(|v| v.iter().all(|c| c.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub start: BoundaryState,
    pub end: BoundaryState,
}

impl Boundary {
    pub fn rest_to_rest(start: Vector3<f64>, end: Vector3<f64>) -> Self {
        Self { start: BoundaryState::at_rest(start), end: BoundaryState::at_rest(end) }
    }
}

/// `d^order/dt^order [1, t, ..., t^5]`.
pub fn basis(t: f64, order: usize) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (j, slot) in out.iter_mut().enumerate().skip(order) {
        let falling: f64 = ((j - order + 1)..=j).map(|k| k as f64).product();
        *slot = falling * t.powi((j - order) as i32);
    }
    out
}

fn combine(c: &PieceCoeffs, b: &[f64; 6]) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for (j, bj) in b.iter().enumerate() {
        if *bj != 0.0 {
            out += c.row(j).transpose() * *bj;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    coeffs: Vec<PieceCoeffs>,
    durations: Vec<f64>,
    /// Start time of each piece plus the total duration at the end.
    starts: Vec<f64>,
    boundary: Boundary,
}

impl Trajectory {
    /// Wraps explicit coefficients, e.g. when reading a trajectory file.
    pub fn from_coefficients(
        coeffs: Vec<PieceCoeffs>,
        durations: Vec<f64>,
        boundary: Boundary,
    ) -> Result<Self, TrajectoryError> {
        if coeffs.is_empty() {
            return Err(TrajectoryError::NoPieces);
        }
        if coeffs.len() != durations.len() {
            return Err(TrajectoryError::Shape(format!(
                "{} coefficient blocks for {} durations",
                coeffs.len(),
                durations.len()
            )));
        }
        check_durations(&durations)?;
        if coeffs.iter().any(|c| c.iter().any(|v| !v.is_finite())) || !boundary.start.is_finite() || !boundary.end.is_finite() {
            return Err(TrajectoryError::NonFinite);
        }
        let mut starts = Vec::with_capacity(durations.len() + 1);
        let mut acc = 0.0;
        starts.push(0.0);
        for d in &durations {
            acc += d;
            starts.push(acc);
        }
        Ok(Self { coeffs, durations, starts, boundary })
    }

    pub fn num_pieces(&self) -> usize {
        self.coeffs.len()
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn coeffs(&self) -> &[PieceCoeffs] {
        &self.coeffs
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn total_duration(&self) -> f64 {
        self.starts[self.durations.len()]
    }

    /// Start time of piece `i`.
    pub fn piece_start(&self, i: usize) -> f64 {
        self.starts[i]
    }

    /// Positions at the piece junctions.
    pub fn waypoints(&self) -> Vec<Vector3<f64>> {
        self.coeffs[1..].iter().map(|c| c.row(0).transpose()).collect()
    }

    /// Zero-based piece index and local time. Pieces are half-open
    /// `[t_i, t_{i+1})`; the end of the horizon belongs to the last piece.
    pub fn locate_piece(&self, t: f64) -> Result<(usize, f64), TrajectoryError> {
        let total = self.total_duration();
        if !(t >= 0.0 && t <= total + END_SLACK * total.max(1.0)) {
            return Err(TrajectoryError::TimeOutOfRange { t, total });
        }
        let m = self.num_pieces();
        let i = self.starts[1..m].partition_point(|&s| s <= t);
        let local = (t - self.starts[i]).min(self.durations[i]);
        Ok((i, local))
    }

    pub fn eval(&self, t: f64, order: usize) -> Result<Vector3<f64>, TrajectoryError> {
        if order > 5 {
            return Err(TrajectoryError::Order(order));
        }
        let (i, local) = self.locate_piece(t)?;
        Ok(self.eval_piece(i, local, order))
    }

    /// Derivative of piece `i` at local time `t` without range checks.
    pub fn eval_piece(&self, i: usize, t: f64, order: usize) -> Vector3<f64> {
        combine(&self.coeffs[i], &basis(t, order))
    }

    /// Position, velocity, acceleration, jerk and snap at `t`.
    pub fn state(&self, t: f64) -> Result<[Vector3<f64>; 5], TrajectoryError> {
        let (i, local) = self.locate_piece(t)?;
        Ok(std::array::from_fn(|k| self.eval_piece(i, local, k)))
    }

    /// Axis-aligned box around piece `i`, from its Bernstein control points.
    pub fn piece_bounds(&self, i: usize) -> (Vector3<f64>, Vector3<f64>) {
        let c = &self.coeffs[i];
        let dur = self.durations[i];
        let binom = |n: usize, k: usize| -> f64 { (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product() };
        // monomial coefficients on the unit interval
        let a: Vec<Vector3<f64>> = (0..6).map(|j| c.row(j).transpose() * dur.powi(j as i32)).collect();
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for k in 0..6 {
            let b: Vector3<f64> = (0..=k).map(|j| a[j] * (binom(k, j) / binom(5, j))).sum();
            lo = lo.inf(&b);
            hi = hi.sup(&b);
        }
        (lo, hi)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TrajectoryDocument::from(self)).expect("trajectory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrajectoryError> {
        let doc: TrajectoryDocument =
            serde_json::from_str(text).map_err(|e| TrajectoryError::Document(e.to_string()))?;
        if doc.pieces != doc.durations.len() {
            return Err(TrajectoryError::Document(format!(
                "pieces = {} but {} durations",
                doc.pieces,
                doc.durations.len()
            )));
        }
        let coeffs = doc.coeffs.iter().map(|rows| PieceCoeffs::from_fn(|r, c| rows[r][c])).collect();
        Self::from_coefficients(coeffs, doc.durations, doc.boundary)
    }
}

fn check_durations(durations: &[f64]) -> Result<(), TrajectoryError> {
    match durations.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
        Some(index) => Err(TrajectoryError::NonPositiveDuration { index, value: durations[index] }),
        None => Ok(()),
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryDocument {
    pieces: usize,
    durations: Vec<f64>,
    coeffs: Vec<[[f64; 3]; 6]>,
    boundary: Boundary,
}

impl From<&Trajectory> for TrajectoryDocument {
    fn from(traj: &Trajectory) -> Self {
        Self {
            pieces: traj.num_pieces(),
            durations: traj.durations.clone(),
            coeffs: traj
                .coeffs
                .iter()
                .map(|c| std::array::from_fn(|r| std::array::from_fn(|k| c[(r, k)])))
                .collect(),
            boundary: traj.boundary,
        }
    }
}
