//! Signed distance to the volume swept by a rigid body along a motion:
//! `f*(x) = min_t SDF(R(t)ᵀ(x − p(t)))` and the minimizing time `t*`.

mod engine;
mod grid;
mod motion;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::flatness::FlatnessError;
use crate::geometry::MeshDistanceIndex;
use crate::trajectory::TrajectoryError;

pub use engine::{ArgminLocation, SweepEngine, SweepOptions, SweptQueryResult, TimeSample, WarmStartCache};
pub use grid::{read_grid, sweep_grid, write_grid, write_slice_csv, GridBounds, SweptGrid};
pub use motion::{ConstantTwistMotion, FlatMotion, Motion, MotionState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("time {t} outside [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },
    #[error("motion has an empty time range")]
    EmptyHorizon,
    #[error("seed stride must be positive, got {0}")]
    InvalidStride(f64),
    #[error("grid resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("invalid grid bounds")]
    InvalidBounds,
    #[error(transparent)]
    Flatness(#[from] FlatnessError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Indices of cloud points inside any of the motion's position boxes grown by
/// `inflation`. With `inflation ≥ body radius + s_thr` every point within
/// `s_thr` of the swept volume is kept.
pub fn select_obstacles<M: Motion + ?Sized>(cloud: &[Vector3<f64>], motion: &M, inflation: f64) -> Vec<usize> {
    let boxes: Vec<_> = motion
        .position_bounds()
        .into_iter()
        .map(|(lo, hi)| (lo.add_scalar(-inflation), hi.add_scalar(inflation)))
        .collect();
    cloud
        .iter()
        .enumerate()
        .filter(|(_, x)| boxes.iter().any(|(lo, hi)| (0..3).all(|k| x[k] >= lo[k] && x[k] <= hi[k])))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ClearanceReport {
    /// Minimum over points and sample times of the body SDF.
    pub min_clearance: f64,
    pub worst_point: Option<usize>,
    pub worst_time: f64,
    pub samples: usize,
    pub points: usize,
}

/// Times `t_min, t_min + dt, …` plus `t_max`.
pub fn sample_times(t_min: f64, t_max: f64, dt: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut k = 0usize;
    loop {
        let t = t_min + k as f64 * dt;
        if t >= t_max {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_max);
    times
}

/// Brute-force clearance certificate: the body SDF of every cloud point at
/// every sample time, independent of the argmin machinery.
pub fn dense_clearance<M: Motion + ?Sized>(
    index: &MeshDistanceIndex,
    motion: &M,
    cloud: &[Vector3<f64>],
    times: &[f64],
) -> Result<ClearanceReport, SweepError> {
    let poses: Vec<(f64, Matrix3<f64>, Vector3<f64>)> = times
        .iter()
        .map(|&t| motion.pose(t).map(|(r, p)| (t, r.transpose(), p)))
        .collect::<Result<_, _>>()?;
    let radius = index.mesh().circumscribed_radius();

    let per_point: Vec<(f64, f64)> = cloud
        .par_iter()
        .map(|x| {
            let mut best = (f64::INFINITY, 0.0);
            for (t, rt, p) in &poses {
                // the SDF is at least the distance to the bounding sphere
                if (x - p).norm() - radius >= best.0 {
                    continue;
                }
                let f = index.signed_distance(&(rt * (x - p)));
                if f < best.0 {
                    best = (f, *t);
                }
            }
            best
        })
        .collect();

    let mut report = ClearanceReport {
        min_clearance: f64::INFINITY,
        worst_point: None,
        worst_time: 0.0,
        samples: poses.len(),
        points: cloud.len(),
    };
    for (i, &(f, t)) in per_point.iter().enumerate() {
        if f < report.min_clearance {
            report = ClearanceReport { min_clearance: f, worst_point: Some(i), worst_time: t, ..report };
        }
    }
    Ok(report)
}

/// Permutation visiting `points` along a Z-order curve over their bounding box,
/// so consecutive queries are spatial neighbors.
pub fn morton_order(points: &[Vector3<f64>]) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = points.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let extent = (hi - lo).max().max(f64::MIN_POSITIVE);
    let spread = |v: u64| {
        let mut x = v & 0x1f_ffff;
        x = (x | x << 32) & 0x1f_0000_0000_ffff;
        x = (x | x << 16) & 0x1f_0000_ff00_00ff;
        x = (x | x << 8) & 0x100f_00f0_0f00_f00f;
        x = (x | x << 4) & 0x10c3_0c30_c30c_30c3;
        (x | x << 2) & 0x1249_2492_4924_9249
    };
    let key = |p: &Vector3<f64>| {
        let q = (p - lo) / extent * ((1u64 << 21) - 1) as f64;
        spread(q.x as u64) | spread(q.y as u64) << 1 | spread(q.z as u64) << 2
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (key(&points[i]), i));
    order
}
