//! Quadrotor differential flatness with zero yaw: attitude, body rate and
//! mass-normalized thrust from the acceleration and jerk of the position.

use nalgebra::{Matrix3, Matrix4x3, RowVector3, Vector3, Vector4};
use thiserror::Error;

pub const GRAVITY: f64 = 9.81;
/// Minimum thrust magnitude for a well-defined attitude (m/s²).
pub const THRUST_EPS: f64 = 0.1;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum FlatnessError {
    #[error("flatness singularity: thrust {thrust} below {THRUST_EPS}")]
    Singularity { thrust: f64 },
    #[error("flatness singularity: thrust direction points straight down")]
    Inverted,
    #[error("zero quaternion")]
    ZeroQuaternion,
}

/// Quaternion stored as `[w, x, y, z]`.
pub type Quaternion = Vector4<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub j: Vector3<f64>,
    pub quat: Quaternion,
    pub rotation: Matrix3<f64>,
    pub omega: Vector3<f64>,
    pub thrust: f64,
}

impl FlatState {
    pub fn new(p: Vector3<f64>, v: Vector3<f64>, a: Vector3<f64>, j: Vector3<f64>) -> Result<Self, FlatnessError> {
        let quat = flat_to_attitude(&a, 0.0)?;
        Ok(Self {
            p,
            v,
            a,
            j,
            quat,
            rotation: rotation_from_quaternion(&quat)?,
            omega: flat_to_omega(&a, &j)?,
            thrust: (a + GRAVITY * Vector3::z()).norm(),
        })
    }
}

pub fn rotation_from_quaternion(q: &Quaternion) -> Result<Matrix3<f64>, FlatnessError> {
    let n = q.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(FlatnessError::ZeroQuaternion);
    }
    Ok(rotation_polynomial(&(q / n)))
}

fn rotation_polynomial(q: &Quaternion) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y),
    )
}

/// Partial derivatives of the rotation matrix polynomial with respect to
/// `w, x, y, z`, valid as tangent derivatives on the unit sphere.
pub fn rotation_quaternion_derivatives(q: &Quaternion) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (2.0 * q[0], 2.0 * q[1], 2.0 * q[2], 2.0 * q[3]);
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0),
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x),
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y),
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0),
    ]
}

/// Thrust direction and magnitude of `a + g e₃`.
fn thrust_axis(a: &Vector3<f64>) -> Result<(Vector3<f64>, f64), FlatnessError> {
    let n = a + GRAVITY * Vector3::z();
    let s = n.norm();
    if !(s > THRUST_EPS) {
        return Err(FlatnessError::Singularity { thrust: s });
    }
    let z = n / s;
    if z[2] <= -1.0 + 1e-12 {
        return Err(FlatnessError::Inverted);
    }
    Ok((z, s))
}

/// Attitude whose body z axis is the thrust direction: the shortest rotation
/// from e₃ followed by `yaw` about the body z axis. Canonicalized to `w ≥ 0`.
pub fn flat_to_attitude(a: &Vector3<f64>, yaw: f64) -> Result<Quaternion, FlatnessError> {
    let (z, _) = thrust_axis(a)?;
    let d = (2.0 * (1.0 + z[2])).sqrt();
    let tilt = Quaternion::new(0.5 * d, -z[1] / d, z[0] / d, 0.0);
    let (c, s) = ((0.5 * yaw).cos(), (0.5 * yaw).sin());
    // tilt ⊗ [c, 0, 0, s]
    let mut q = Quaternion::new(
        tilt[0] * c - tilt[3] * s,
        tilt[1] * c + tilt[2] * s,
        tilt[2] * c - tilt[1] * s,
        tilt[3] * c + tilt[0] * s,
    );
    if q[0] < 0.0 {
        q = -q;
    }
    Ok(q)
}

fn omega_map(z: &Vector3<f64>) -> Matrix3<f64> {
    let u = 1.0 / (1.0 + z[2]);
    Matrix3::new(0.0, -1.0, z[1] * u, 1.0, 0.0, -z[0] * u, z[1] * u, -z[0] * u, 0.0)
}

fn omega_map_derivatives(z: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let u = 1.0 / (1.0 + z[2]);
    let u2 = u * u;
    [
        Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -u, 0.0, -u, 0.0),
        Matrix3::new(0.0, 0.0, u, 0.0, 0.0, 0.0, u, 0.0, 0.0),
        Matrix3::new(0.0, 0.0, -u2 * z[1], 0.0, 0.0, u2 * z[0], -u2 * z[1], u2 * z[0], 0.0),
    ]
}

/// Time derivative of the thrust direction and its Jacobian with respect to
/// the (unnormalized) thrust vector.
fn direction_rate(z: &Vector3<f64>, s: f64, j: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let proj = Matrix3::identity() - z * z.transpose();
    let pj = proj * j;
    let dz = pj / s;
    let jac = -(proj * z.dot(j) + z * (proj * j).transpose()) / (s * s) - pj * z.transpose() / (s * s);
    (dz, jac)
}

/// Body rate with `Ṙ = R ω̂` for zero yaw and zero yaw rate.
pub fn flat_to_omega(a: &Vector3<f64>, j: &Vector3<f64>) -> Result<Vector3<f64>, FlatnessError> {
    let (z, s) = thrust_axis(a)?;
    let (dz, _) = direction_rate(&z, s, j);
    Ok(omega_map(&z) * dz)
}

/// Time derivative of [`flat_to_omega`], which also needs the snap.
pub fn flat_to_omega_dot(a: &Vector3<f64>, j: &Vector3<f64>, snap: &Vector3<f64>) -> Result<Vector3<f64>, FlatnessError> {
    let (z, s) = thrust_axis(a)?;
    let (dz, ddz_dn) = direction_rate(&z, s, j);
    let proj = Matrix3::identity() - z * z.transpose();
    let ddz = ddz_dn * j + proj * snap / s;
    let dw = omega_map_derivatives(&z);
    let w_dot = dw[0] * dz[0] + dw[1] * dz[1] + dw[2] * dz[2];
    Ok(w_dot * dz + omega_map(&z) * ddz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeJacobians {
    pub dquat_da: Matrix4x3<f64>,
    /// Identically zero: the attitude depends on acceleration only.
    pub dquat_dj: Matrix4x3<f64>,
    pub domega_da: Matrix3<f64>,
    pub domega_dj: Matrix3<f64>,
    pub dthrust_da: RowVector3<f64>,
}

pub fn attitude_jacobians(a: &Vector3<f64>, j: &Vector3<f64>) -> Result<AttitudeJacobians, FlatnessError> {
    let (z, s) = thrust_axis(a)?;
    let proj = Matrix3::identity() - z * z.transpose();
    let dz_dn = proj / s;

    let d = (2.0 * (1.0 + z[2])).sqrt();
    let d3 = d * d * d;
    #[rustfmt::skip]
    let dq_dz = Matrix4x3::new(
        0.0,     0.0,      1.0 / (2.0 * d),
        0.0,     -1.0 / d, z[1] / d3,
        1.0 / d, 0.0,      -z[0] / d3,
        0.0,     0.0,      0.0,
    );

    let (dz, ddz_dn) = direction_rate(&z, s, j);
    let w = omega_map(&z);
    let dw = omega_map_derivatives(&z);
    let mut domega_dz = Matrix3::zeros();
    for k in 0..3 {
        domega_dz.set_column(k, &(dw[k] * dz));
    }

    Ok(AttitudeJacobians {
        dquat_da: dq_dz * dz_dn,
        dquat_dj: Matrix4x3::zeros(),
        domega_da: domega_dz * dz_dn + w * ddz_dn,
        domega_dj: w * proj / s,
        dthrust_da: z.transpose(),
    })
}

/// `v̂` such that `v̂ x = v × x`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}
