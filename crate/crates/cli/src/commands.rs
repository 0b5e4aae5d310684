use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use swept_sdf::geometry::MeshDistanceIndex;
use swept_sdf::solver::{plan, PlanResult, SolverError, CERTIFICATE_SLACK};
use swept_sdf::sweep::{
    dense_clearance, sample_times, sweep_grid, write_grid, write_slice_csv, FlatMotion, GridBounds, Motion,
    SweepEngine, SweepOptions, WarmStartCache,
};
use swept_sdf::trajectory::Trajectory;

use crate::scenario::{read_cloud, read_config, read_mesh, read_trajectory, Scenario};

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotConverged,
    CertificationFailed,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 2,
            Outcome::CertificationFailed => 3,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

#[derive(Debug, Serialize)]
struct PlanSummary {
    success: bool,
    termination: String,
    iterations: usize,
    escalations: usize,
    total_duration: f64,
    pieces: usize,
    j_total: f64,
    j_s: f64,
    j_m: f64,
    j_d: f64,
    j_t: f64,
    min_clearance: f64,
    worst_point: Option<usize>,
    worst_time: f64,
    s_thr: f64,
    max_speed: f64,
    plan_seconds: f64,
}

/// Largest speed over a dense time sampling.
fn max_speed(traj: &Trajectory, dt: f64) -> f64 {
    sample_times(0.0, traj.total_duration(), dt)
        .into_iter()
        .filter_map(|t| traj.eval(t, 1).ok())
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

fn run_plan(scenario: &Scenario) -> Result<(PlanResult, f64)> {
    let index = MeshDistanceIndex::new(scenario.robot.clone());
    let started = Instant::now();
    let result = plan(&index, &scenario.cloud, scenario.boundary, &scenario.config, &scenario.options);
    let elapsed = started.elapsed().as_secs_f64();
    match result {
        Ok(r) => Ok((r, elapsed)),
        Err(e @ (SolverError::StartInCollision { .. } | SolverError::GoalInCollision { .. })) => Err(e.into()),
        Err(e) => Err(anyhow::Error::from(e).context("planning failed")),
    }
}

pub fn cmd_plan(
    scenario_path: &Path,
    config: Option<&Path>,
    output_dir: Option<&Path>,
    seed_stride: Option<f64>,
) -> Result<Outcome> {
    let mut scenario = Scenario::load(scenario_path, config)?;
    if seed_stride.is_some() {
        scenario.config.seed_stride = seed_stride;
    }
    let dir = output_dir.map(Path::to_path_buf).or_else(|| scenario.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    create_dir(&dir)?;

    let (result, seconds) = run_plan(&scenario)?;
    let traj = &result.trajectory;
    fs::write(dir.join("trajectory.json"), traj.to_json()).context("writing trajectory")?;
    let mut log = create(&dir.join("cost_history.jsonl"))?;
    for entry in &result.history {
        writeln!(log, "{}", serde_json::to_string(entry)?)?;
    }
    log.flush()?;

    let summary = PlanSummary {
        success: result.success,
        termination: format!("{:?}", result.termination),
        iterations: result.iterations,
        escalations: result.escalations,
        total_duration: traj.total_duration(),
        pieces: traj.num_pieces(),
        j_total: result.report.j_total,
        j_s: result.report.j_s,
        j_m: result.report.j_m,
        j_d: result.report.j_d,
        j_t: result.report.j_t,
        min_clearance: result.certificate.min_clearance,
        worst_point: result.certificate.worst_point,
        worst_time: result.certificate.worst_time,
        s_thr: scenario.config.s_thr,
        max_speed: max_speed(traj, scenario.options.certify_dt),
        plan_seconds: seconds,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?).context("writing summary")?;
    println!("{}", serde_json::to_string_pretty(&summary)?);

    let certified = summary.min_clearance >= scenario.config.s_thr - CERTIFICATE_SLACK;
    Ok(if result.report.j_s > 0.0 || !result.termination.is_converged() {
        warn!("planner did not converge to a collision-free trajectory ({:?})", result.termination);
        Outcome::NotConverged
    } else if !certified {
        warn!("dense check found clearance {:.4} below s_thr", summary.min_clearance);
        Outcome::CertificationFailed
    } else {
        Outcome::Success
    })
}

fn sweep_options(seed_stride: Option<f64>) -> SweepOptions {
    SweepOptions { seed_stride, ..SweepOptions::default() }
}

pub fn cmd_query(
    mesh: &Path,
    trajectory: &Path,
    points: &Path,
    output: Option<&Path>,
    seed_stride: Option<f64>,
) -> Result<Outcome> {
    let index = MeshDistanceIndex::new(read_mesh(mesh)?);
    let motion = FlatMotion::new(read_trajectory(trajectory)?);
    let points = read_cloud(points)?;
    let engine = SweepEngine::new(&index, &motion, sweep_options(seed_stride))?;
    let rows = points.par_iter().map(|x| engine.swept_sdf_cold(x)).collect::<Result<Vec<_>, _>>()?;

    let mut out: Box<dyn Write> = match output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    writeln!(out, "x,y,z,f_star,t_star,at_boundary")?;
    for (x, r) in points.iter().zip(&rows) {
        writeln!(out, "{},{},{},{},{},{}", x.x, x.y, x.z, r.f_star, r.t_star, r.at_boundary.as_str())?;
    }
    out.flush()?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct CheckReport {
    min_clearance: f64,
    worst_point: Option<usize>,
    worst_position: Option<[f64; 3]>,
    worst_time: f64,
    samples: usize,
    points: usize,
    dt: f64,
    s_thr: f64,
    certified: bool,
}

pub fn cmd_check(
    mesh: &Path,
    trajectory: &Path,
    cloud: &Path,
    dt: f64,
    config: Option<&Path>,
    output_dir: Option<&Path>,
) -> Result<Outcome> {
    if !(dt > 0.0 && dt.is_finite()) {
        bail!("dt must be positive, got {dt}");
    }
    let s_thr = read_config(config)?.s_thr;
    let index = MeshDistanceIndex::new(read_mesh(mesh)?);
    let motion = FlatMotion::new(read_trajectory(trajectory)?);
    let cloud = read_cloud(cloud)?;
    let (t0, t1) = motion.time_range();
    let c = dense_clearance(&index, &motion, &cloud, &sample_times(t0, t1, dt))?;
    let report = CheckReport {
        min_clearance: c.min_clearance,
        worst_point: c.worst_point,
        worst_position: c.worst_point.map(|i| [cloud[i].x, cloud[i].y, cloud[i].z]),
        worst_time: c.worst_time,
        samples: c.samples,
        points: c.points,
        dt,
        s_thr,
        certified: c.min_clearance >= s_thr,
    };
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = output_dir {
        create_dir(dir)?;
        fs::write(dir.join("check.json"), &text).context("writing check report")?;
    }
    println!("{text}");
    Ok(if report.certified { Outcome::Success } else { Outcome::CertificationFailed })
}

pub fn cmd_sweep_grid(
    mesh: &Path,
    trajectory: &Path,
    bounds: &[f64],
    resolution: f64,
    slice_z: Option<f64>,
    output_dir: &Path,
    seed_stride: Option<f64>,
) -> Result<Outcome> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        bail!("resolution must be positive, got {resolution}");
    }
    let [x0, y0, z0, x1, y1, z1] = bounds else {
        bail!("bounds need six values: x0,y0,z0,x1,y1,z1");
    };
    let bounds = GridBounds { lo: Vector3::new(*x0, *y0, *z0), hi: Vector3::new(*x1, *y1, *z1) };
    if (0..3).any(|k| !(bounds.hi[k] >= bounds.lo[k])) {
        bail!("bounds must satisfy lo <= hi on every axis");
    }
    let index = MeshDistanceIndex::new(read_mesh(mesh)?);
    let motion = FlatMotion::new(read_trajectory(trajectory)?);
    let engine = SweepEngine::new(&index, &motion, sweep_options(seed_stride))?;
    let grid = sweep_grid(&engine, &bounds, resolution)?;
    info!("grid {:?} ({} values)", grid.dims, grid.values.len());

    create_dir(output_dir)?;
    let mut out = create(&output_dir.join("grid.sdfgrid"))?;
    write_grid(&grid, &mut out)?;
    out.flush()?;
    if let Some(z) = slice_z {
        let k = ((z - grid.origin.z) / grid.spacing).round();
        if !(k >= 0.0 && (k as usize) < grid.dims[2]) {
            bail!("slice z = {z} is outside the grid");
        }
        let mut out = create(&output_dir.join("slice.csv"))?;
        write_slice_csv(&grid, k as usize, &mut out)?;
        out.flush()?;
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct Percentiles {
    p50: f64,
    p90: f64,
    p99: f64,
    mean: f64,
}

fn percentiles(mut us: Vec<f64>) -> Percentiles {
    us.sort_by(f64::total_cmp);
    let at = |q: f64| us[((q * us.len() as f64).ceil() as usize).clamp(1, us.len()) - 1];
    Percentiles { p50: at(0.5), p90: at(0.9), p99: at(0.99), mean: us.iter().sum::<f64>() / us.len() as f64 }
}

#[derive(Debug, Serialize)]
struct BenchReport {
    points: usize,
    repetitions: usize,
    queries: usize,
    cold_us: Percentiles,
    warm_us: Percentiles,
    plan_seconds: Option<f64>,
}

/// Cold latency is measured on cache-free queries; warm latency on repeated
/// queries of the same points seeded by the previous pass.
pub fn cmd_bench(
    scenario_path: &Path,
    trajectory: Option<&Path>,
    repetitions: usize,
    config: Option<&Path>,
    seed_stride: Option<f64>,
) -> Result<Outcome> {
    if repetitions == 0 {
        bail!("repetitions must be at least 1");
    }
    let mut scenario = Scenario::load(scenario_path, config)?;
    if seed_stride.is_some() {
        scenario.config.seed_stride = seed_stride;
    }
    if scenario.cloud.is_empty() {
        bail!("benchmark needs a non-empty obstacle cloud");
    }
    let (traj, plan_seconds) = match trajectory {
        Some(p) => (read_trajectory(p)?, None),
        None => {
            let (r, s) = run_plan(&scenario)?;
            (r.trajectory, Some(s))
        }
    };
    let index = MeshDistanceIndex::new(scenario.robot.clone());
    let motion = FlatMotion::new(traj);
    let engine = SweepEngine::new(&index, &motion, sweep_options(scenario.config.seed_stride))?;
    let cloud = &scenario.cloud;

    let mut cold = Vec::with_capacity(cloud.len() * repetitions);
    for _ in 0..repetitions {
        for x in cloud {
            let t = Instant::now();
            std::hint::black_box(engine.swept_sdf_cold(x)?);
            cold.push(t.elapsed().as_secs_f64() * 1e6);
        }
    }
    let mut cache = WarmStartCache::new();
    for (i, x) in cloud.iter().enumerate() {
        engine.swept_sdf(x, Some(i), &mut cache)?;
    }
    let mut warm = Vec::with_capacity(cloud.len() * repetitions);
    for _ in 0..repetitions {
        for (i, x) in cloud.iter().enumerate() {
            let t = Instant::now();
            std::hint::black_box(engine.swept_sdf(x, Some(i), &mut cache)?);
            warm.push(t.elapsed().as_secs_f64() * 1e6);
        }
    }
    let report = BenchReport {
        points: cloud.len(),
        repetitions,
        queries: cold.len(),
        cold_us: percentiles(cold),
        warm_us: percentiles(warm),
        plan_seconds,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(Outcome::Success)
}

