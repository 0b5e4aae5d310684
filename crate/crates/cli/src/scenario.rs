use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;
use serde::Deserialize;
use swept_sdf::geometry::{load_mesh, TriangleMesh};
use swept_sdf::objective::PlannerConfig;
use swept_sdf::solver::PlanOptions;
use swept_sdf::trajectory::{Boundary, BoundaryState, Trajectory};

/// Planning problem read from a TOML document. Relative paths are resolved
/// against the directory containing the scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    robot: PathBuf,
    cloud: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    start: BoundaryState,
    goal: BoundaryState,
    #[serde(default)]
    config: toml::Table,
    #[serde(default)]
    solver: PlanOptions,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub robot: TriangleMesh,
    pub cloud: Vec<Vector3<f64>>,
    pub output_dir: Option<PathBuf>,
    pub boundary: Boundary,
    pub config: PlannerConfig,
    pub options: PlanOptions,
}

impl Scenario {
    /// Reads the scenario and overlays the `[config]` keys of `overrides`.
    pub fn load(path: &Path, overrides: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
        let file: ScenarioFile = toml::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        let mut table = file.config;
        if let Some(o) = overrides {
            table.extend(read_config_table(o)?);
        }
        let config: PlannerConfig = table.try_into().context("invalid [config] section")?;
        config.validate()?;
        file.solver.solve.validate()?;

        let robot_path = resolve(&file.robot);
        let robot = load_mesh(&robot_path, None).with_context(|| format!("loading robot mesh {}", robot_path.display()))?;
        let cloud = match &file.cloud {
            Some(p) => read_cloud(&resolve(p))?,
            None => Vec::new(),
        };
        Ok(Self {
            robot,
            cloud,
            output_dir: file.output_dir.as_deref().map(resolve),
            boundary: Boundary { start: file.start, end: file.goal },
            config,
            options: file.solver,
        })
    }
}

/// Planner settings from a TOML file, either bare keys or a `[config]` table.
pub fn read_config_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    match table.remove("config") {
        Some(toml::Value::Table(t)) if table.is_empty() => Ok(t),
        Some(_) => bail!("{}: expected only a [config] table", path.display()),
        None => Ok(table),
    }
}

pub fn read_config(path: Option<&Path>) -> Result<PlannerConfig> {
    let config: PlannerConfig = match path {
        Some(p) => read_config_table(p)?.try_into().context("invalid planner config")?,
        None => PlannerConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

/// Whitespace-separated `x y z` per line; `#` starts a comment.
pub fn parse_cloud(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            bail!("line {}: expected 3 coordinates, found {}", n + 1, fields.len());
        }
        let mut p = Vector3::zeros();
        for (k, f) in fields.iter().enumerate() {
            p[k] = f.parse::<f64>().with_context(|| format!("line {}: bad number {f:?}", n + 1))?;
            if !p[k].is_finite() {
                bail!("line {}: non-finite coordinate", n + 1);
            }
        }
        points.push(p);
    }
    Ok(points)
}

pub fn read_cloud(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading points {}", path.display()))?;
    parse_cloud(&text).with_context(|| format!("parsing points {}", path.display()))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).with_context(|| format!("reading trajectory {}", path.display()))?;
    Trajectory::from_json(&text).with_context(|| format!("parsing trajectory {}", path.display()))
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    load_mesh(path, None).with_context(|| format!("loading mesh {}", path.display()))
}
