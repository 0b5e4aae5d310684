use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::SweepError;
use crate::flatness::{flat_to_omega_dot, FlatState, Quaternion};
use crate::trajectory::Trajectory;

/// Rigid-body state at one instant; the body occupies `R 𝓑 + p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub j: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub quat: Quaternion,
    /// Body rate, `Ṙ = R ω̂`.
    pub omega: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
}

/// A rigid motion over a closed time interval.
pub trait Motion: Send + Sync {
    fn time_range(&self) -> (f64, f64);

    fn state(&self, t: f64) -> Result<MotionState, SweepError>;

    /// Rotation and position only.
    fn pose(&self, t: f64) -> Result<(Matrix3<f64>, Vector3<f64>), SweepError> {
        let s = self.state(t)?;
        Ok((s.rotation, s.p))
    }

    /// Boxes whose union contains the reference point's path.
    fn position_bounds(&self) -> Vec<(Vector3<f64>, Vector3<f64>)>;
}

/// A quadrotor following a trajectory with zero yaw.
#[derive(Debug, Clone)]
pub struct FlatMotion {
    trajectory: Trajectory,
}

impl FlatMotion {
    pub fn new(trajectory: Trajectory) -> Self {
        Self { trajectory }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }
}

impl Motion for FlatMotion {
    fn time_range(&self) -> (f64, f64) {
        (0.0, self.trajectory.total_duration())
    }

    fn state(&self, t: f64) -> Result<MotionState, SweepError> {
        let [p, v, a, j, snap] = self.trajectory.state(t)?;
        let flat = FlatState::new(p, v, a, j)?;
        Ok(MotionState {
            t,
            p,
            v,
            a,
            j,
            rotation: flat.rotation,
            quat: flat.quat,
            omega: flat.omega,
            omega_dot: flat_to_omega_dot(&a, &j, &snap)?,
        })
    }

    fn position_bounds(&self) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        (0..self.trajectory.num_pieces()).map(|i| self.trajectory.piece_bounds(i)).collect()
    }
}

/// Constant linear velocity and constant body rate: `p(t) = p₀ + v t`,
/// `R(t) = R₀ exp(t ω̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantTwistMotion {
    pub start_position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub start_rotation: Matrix3<f64>,
    pub body_rate: Vector3<f64>,
    pub duration: f64,
}

impl ConstantTwistMotion {
    pub fn stationary(duration: f64) -> Self {
        Self::translation(Vector3::zeros(), Vector3::zeros(), duration)
    }

    pub fn translation(start: Vector3<f64>, velocity: Vector3<f64>, duration: f64) -> Self {
        Self {
            start_position: start,
            velocity,
            start_rotation: Matrix3::identity(),
            body_rate: Vector3::zeros(),
            duration,
        }
    }

    fn check(&self, t: f64) -> Result<(), SweepError> {
        if t >= 0.0 && t <= self.duration {
            Ok(())
        } else {
            Err(SweepError::TimeOutOfRange { t, start: 0.0, end: self.duration })
        }
    }

    fn rotation_at(&self, t: f64) -> Matrix3<f64> {
        self.start_rotation * Rotation3::new(self.body_rate * t).into_inner()
    }
}

impl Motion for ConstantTwistMotion {
    fn time_range(&self) -> (f64, f64) {
        (0.0, self.duration)
    }

    fn state(&self, t: f64) -> Result<MotionState, SweepError> {
        self.check(t)?;
        let rotation = self.rotation_at(t);
        let uq = UnitQuaternion::from_matrix(&rotation);
        let mut quat = Quaternion::new(uq.w, uq.i, uq.j, uq.k);
        if quat[0] < 0.0 {
            quat = -quat;
        }
        Ok(MotionState {
            t,
            p: self.start_position + self.velocity * t,
            v: self.velocity,
            a: Vector3::zeros(),
            j: Vector3::zeros(),
            rotation,
            quat,
            omega: self.body_rate,
            omega_dot: Vector3::zeros(),
        })
    }

    fn pose(&self, t: f64) -> Result<(Matrix3<f64>, Vector3<f64>), SweepError> {
        self.check(t)?;
        Ok((self.rotation_at(t), self.start_position + self.velocity * t))
    }

    fn position_bounds(&self) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        let a = self.start_position;
        let b = a + self.velocity * self.duration;
        vec![(a.inf(&b), a.sup(&b))]
    }
}
