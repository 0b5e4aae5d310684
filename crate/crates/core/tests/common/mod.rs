#![allow(dead_code)]

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use swept_sdf::geometry::{primitives, MeshDistanceIndex, TriangleMesh};
use swept_sdf::sweep::ConstantTwistMotion;

pub const CAPSULE_RADIUS: f64 = 0.5;

/// Sphere of radius 0.5 translating from the origin to (1, 0, 0) over one second.
pub fn capsule() -> (MeshDistanceIndex, ConstantTwistMotion) {
    let index = MeshDistanceIndex::new(primitives::icosphere(4, CAPSULE_RADIUS));
    let motion = ConstantTwistMotion::translation(Vector3::zeros(), Vector3::x(), 1.0);
    (index, motion)
}

pub fn capsule_sdf(x: &Vector3<f64>) -> f64 {
    let t = x.x.clamp(0.0, 1.0);
    (x - Vector3::new(t, 0.0, 0.0)).norm() - CAPSULE_RADIUS
}

pub fn tumbling_box() -> (MeshDistanceIndex, ConstantTwistMotion) {
    let index = MeshDistanceIndex::new(primitives::cuboid(Vector3::new(0.4, 0.25, 0.1)));
    let motion = ConstantTwistMotion {
        start_position: Vector3::new(-0.5, 0.0, 0.0),
        velocity: Vector3::new(1.0, 0.2, 0.0),
        start_rotation: Rotation3::from_euler_angles(0.3, -0.2, 0.5).into_inner(),
        body_rate: Vector3::new(1.5, -2.0, 3.0),
        duration: 1.0,
    };
    (index, motion)
}

pub fn tumbling_saucer() -> (MeshDistanceIndex, ConstantTwistMotion) {
    let index = MeshDistanceIndex::new(primitives::saucer(0.5, 16));
    let motion = ConstantTwistMotion {
        start_position: Vector3::new(-0.6, 0.1, 0.0),
        velocity: Vector3::new(1.2, -0.2, 0.3),
        start_rotation: Matrix3::identity(),
        body_rate: Vector3::new(2.5, 1.0, -1.5),
        duration: 1.0,
    };
    (index, motion)
}

pub fn random_point(rng: &mut impl Rng, lo: Vector3<f64>, hi: Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|k, _| rng.gen_range(lo[k]..hi[k]))
}

/// Minimum of the body SDF over a uniform time grid.
pub fn dense_min(
    index: &MeshDistanceIndex,
    motion: &impl swept_sdf::sweep::Motion,
    x: &Vector3<f64>,
    dt: f64,
) -> (f64, f64) {
    let (t0, t1) = motion.time_range();
    let n = ((t1 - t0) / dt).round() as usize;
    (0..=n)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / n as f64;
            let (r, p) = motion.pose(t).unwrap();
            (index.signed_distance(&(r.transpose() * (x - p))), t)
        })
        .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

fn segment_distance(x: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let s = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (x - (a + ab * s)).norm()
}

/// Point-triangle distance: the plane distance when the projection falls
/// inside the triangle, otherwise the nearest edge.
pub fn triangle_distance(x: &Vector3<f64>, [a, b, c]: [Vector3<f64>; 3]) -> f64 {
    let n = (b - a).cross(&(c - a)).normalize();
    let p = x - n * n.dot(&(x - a));
    let inside = [(a, b), (b, c), (c, a)].iter().all(|(u, v)| (v - u).cross(&(p - u)).dot(&n) >= 0.0);
    if inside {
        return n.dot(&(x - a)).abs();
    }
    segment_distance(x, &a, &b).min(segment_distance(x, &b, &c)).min(segment_distance(x, &c, &a))
}

/// Solid angle of a triangle seen from `x` over 4π, summed over every face.
pub fn winding(mesh: &TriangleMesh, x: &Vector3<f64>) -> f64 {
    (0..mesh.num_faces())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f).map(|v| v - x);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            2.0 * num.atan2(den)
        })
        .sum::<f64>()
        / (4.0 * std::f64::consts::PI)
}

pub fn brute_sdf(mesh: &TriangleMesh, x: &Vector3<f64>) -> f64 {
    let d = (0..mesh.num_faces()).map(|f| triangle_distance(x, mesh.triangle(f))).fold(f64::INFINITY, f64::min);
    if winding(mesh, x) > 0.5 { -d } else { d }
}
