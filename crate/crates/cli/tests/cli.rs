use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use swept_sdf::geometry::io::write_obj;
use swept_sdf::geometry::{primitives, MeshDistanceIndex, TriangleMesh};
use swept_sdf::sweep::read_grid;
use swept_sdf::trajectory::{Boundary, Trajectory};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_swept-sdf"));
    c.env_remove("SWEPT_SDF_THREADS").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_mesh(dir: &Path, name: &str, mesh: &TriangleMesh) -> PathBuf {
    let path = dir.join(name);
    write_obj(mesh, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn write_points(dir: &Path, name: &str, pts: &[Vector3<f64>]) -> PathBuf {
    let path = dir.join(name);
    let mut text = String::from("# x y z\n");
    for q in pts {
        text += &format!("{} {} {}\n", q.x, q.y, q.z);
    }
    fs::write(&path, text).unwrap();
    path
}

fn write_traj(dir: &Path, name: &str, traj: &Trajectory) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, traj.to_json()).unwrap();
    path
}

/// Sphere of radius 0.5 moved from the origin to (1, 0, 0).
fn capsule_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let mesh = write_mesh(dir, "sphere.obj", &primitives::icosphere(4, 0.5));
    let traj = Trajectory::minco(&[], &[1.0], Boundary::rest_to_rest(Vector3::zeros(), Vector3::x())).unwrap();
    (mesh, write_traj(dir, "traj.json", &traj))
}

fn capsule_sdf(x: &Vector3<f64>) -> f64 {
    let s = x.x.clamp(0.0, 1.0);
    (x - Vector3::new(s, 0.0, 0.0)).norm() - 0.5
}

fn parse_csv(text: &str) -> (String, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().to_string();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn scenario(dir: &Path, robot: &Path, cloud: Option<&Path>, start: [f64; 3], goal: [f64; 3], extra: &str) -> PathBuf {
    let mut text = format!("robot = {:?}\n", p(robot));
    if let Some(c) = cloud {
        text += &format!("cloud = {:?}\n", p(c));
    }
    text += &format!("output_dir = \"out\"\n\n[start]\nposition = {start:?}\n\n[goal]\nposition = {goal:?}\n\n{extra}");
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path
}

fn small_box(dir: &Path) -> PathBuf {
    write_mesh(dir, "box.obj", &primitives::cuboid(Vector3::new(0.15, 0.15, 0.05)))
}

#[test]
fn plan_without_obstacles_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let robot = small_box(dir.path());
    let sc = scenario(dir.path(), &robot, None, [0.0, 0.0, 0.0], [2.0, 0.5, 0.0], "");
    let out = run(&["plan", p(&sc)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let od = dir.path().join("out");
    let traj = Trajectory::from_json(&fs::read_to_string(od.join("trajectory.json")).unwrap()).unwrap();
    assert!((traj.eval(traj.total_duration(), 0).unwrap() - Vector3::new(2.0, 0.5, 0.0)).norm() < 1e-9);
    let log = fs::read_to_string(od.join("cost_history.jsonl")).unwrap();
    assert!(log.lines().count() > 0);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["j_s"], 0.0);
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(od.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["success"], true);
    assert!(summary["iterations"].as_u64().unwrap() > 0);
}

#[test]
fn plan_rejects_start_in_collision() {
    let dir = TempDir::new().unwrap();
    let robot = small_box(dir.path());
    let cloud = write_points(dir.path(), "cloud.xyz", &[Vector3::new(0.05, 0.0, 0.0)]);
    let sc = scenario(dir.path(), &robot, Some(&cloud), [0.0, 0.0, 0.0], [2.0, 0.0, 0.0], "");
    let out = run(&["plan", p(&sc)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("start state in collision"));
}

#[test]
fn plan_input_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let robot = small_box(dir.path());
    let sc = scenario(dir.path(), &robot, None, [0.0; 3], [1.0, 0.0, 0.0], "[config]\ns_thr = -1.0\n");
    assert_eq!(code(&run(&["plan", p(&sc)])), 1);
    let sc = scenario(dir.path(), &dir.path().join("missing.obj"), None, [0.0; 3], [1.0, 0.0, 0.0], "");
    assert_eq!(code(&run(&["plan", p(&sc)])), 1);
    let sc = scenario(dir.path(), &robot, None, [0.0; 3], [1.0, 0.0, 0.0], "[config]\nunknown_key = 1\n");
    assert_eq!(code(&run(&["plan", p(&sc)])), 1);
}

#[test]
fn plan_through_gap_is_certified() {
    let dir = TempDir::new().unwrap();
    let robot = small_box(dir.path());
    // wall at x = 1 with an opening |y| < 0.3; the straight line at y = 0.2 clips its edge
    let mut wall = Vec::new();
    for i in 0..=40 {
        for k in 0..=10 {
            let y = -1.0 + 0.05 * i as f64;
            if y.abs() >= 0.3 {
                wall.push(Vector3::new(1.0, y, -0.25 + 0.05 * k as f64));
            }
        }
    }
    let cloud = write_points(dir.path(), "wall.xyz", &wall);
    let sc = scenario(dir.path(), &robot, Some(&cloud), [0.0, 0.2, 0.0], [2.0, 0.2, 0.0], "");
    let out = run(&["plan", p(&sc), "--output-dir", p(&dir.path().join("gap"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gap/summary.json")).unwrap()).unwrap();
    let s_thr = summary["s_thr"].as_f64().unwrap();
    assert!(summary["min_clearance"].as_f64().unwrap() >= s_thr - 1e-3);

    // the independent checker agrees on the written trajectory
    let out = run(&[
        "check",
        "--mesh",
        p(&robot),
        "--trajectory",
        p(&dir.path().join("gap/trajectory.json")),
        "--cloud",
        p(&cloud),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["min_clearance"].as_f64().unwrap() >= s_thr - 1e-3);
}

#[test]
fn query_matches_capsule() {
    let dir = TempDir::new().unwrap();
    let (mesh, traj) = capsule_setup(dir.path());
    let pts: Vec<Vector3<f64>> = (0..60)
        .map(|i| {
            let a = i as f64 * 0.37;
            Vector3::new(-0.8 + 2.6 * (i as f64 / 59.0), 1.2 * a.sin(), 1.2 * a.cos() * 0.7)
        })
        .collect();
    let points = write_points(dir.path(), "pts.xyz", &pts);
    let csv = dir.path().join("q.csv");
    let out = run(&["query", "--mesh", p(&mesh), "--trajectory", p(&traj), "--points", p(&points), "--output", p(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = parse_csv(&fs::read_to_string(&csv).unwrap());
    assert_eq!(header, "x,y,z,f_star,t_star,at_boundary");
    assert_eq!(rows.len(), pts.len());
    for (row, x) in rows.iter().zip(&pts) {
        let xyz: Vec<f64> = row[..3].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(Vector3::new(xyz[0], xyz[1], xyz[2]), *x);
        let f: f64 = row[3].parse().unwrap();
        assert!((f - capsule_sdf(x)).abs() < 1e-3, "{x:?}: {f} vs {}", capsule_sdf(x));
        let t: f64 = row[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&t));
        assert!(["interior", "t_min", "t_max"].contains(&row[5].as_str()));
    }
}

#[test]
fn query_edge_cases() {
    let dir = TempDir::new().unwrap();
    let (mesh, traj) = capsule_setup(dir.path());
    let empty = write_points(dir.path(), "empty.xyz", &[]);
    let out = run(&["query", "--mesh", p(&mesh), "--trajectory", p(&traj), "--points", p(&empty)]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "x,y,z,f_star,t_star,at_boundary\n");

    let twice = write_points(dir.path(), "twice.xyz", &[Vector3::new(0.3, 0.9, 0.1); 2]);
    let out = run(&["query", "--mesh", p(&mesh), "--trajectory", p(&traj), "--points", p(&twice)]);
    let (_, rows) = parse_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);

    let bad = dir.path().join("bad.xyz");
    fs::write(&bad, "1 2\n").unwrap();
    assert_eq!(code(&run(&["query", "--mesh", p(&mesh), "--trajectory", p(&traj), "--points", p(&bad)])), 1);
    let bad_traj = dir.path().join("bad.json");
    fs::write(&bad_traj, "{}").unwrap();
    assert_eq!(code(&run(&["query", "--mesh", p(&mesh), "--trajectory", p(&bad_traj), "--points", p(&twice)])), 1);
}

#[test]
fn query_output_does_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let (mesh, traj) = capsule_setup(dir.path());
    let pts: Vec<Vector3<f64>> = (0..40).map(|i| Vector3::new(0.05 * i as f64 - 0.5, 0.7, 0.02 * i as f64)).collect();
    let points = write_points(dir.path(), "pts.xyz", &pts);
    let args = ["query", "--mesh", p(&mesh), "--trajectory", p(&traj), "--points", p(&points)];
    let one = run(&[&args[..], &["--threads", "1"]].concat());
    let two = bin().args(args).env("SWEPT_SDF_THREADS", "3").output().unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, two.stdout);
}

#[test]
fn check_reports_safe_and_colliding_trajectories() {
    let dir = TempDir::new().unwrap();
    let (mesh, traj) = capsule_setup(dir.path());
    let far = write_points(dir.path(), "far.xyz", &[Vector3::new(0.5, 1.0, 0.0), Vector3::new(2.0, 0.0, 0.0)]);
    let out = run(&["check", "--mesh", p(&mesh), "--trajectory", p(&traj), "--cloud", p(&far), "--dt", "1e-3"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["min_clearance"].as_f64().unwrap() - 0.5).abs() < 2e-3);
    assert_eq!(report["certified"], true);

    let hit = write_points(dir.path(), "hit.xyz", &[Vector3::new(0.5, 0.1, 0.0)]);
    let od = dir.path().join("check");
    let out = run(&["check", "--mesh", p(&mesh), "--trajectory", p(&traj), "--cloud", p(&hit), "--output-dir", p(&od)]);
    assert_eq!(code(&out), 3);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(od.join("check.json")).unwrap()).unwrap();
    assert!(report["min_clearance"].as_f64().unwrap() < 0.0);
    assert_eq!(report["worst_point"], 0);

    assert_eq!(code(&run(&["check", "--mesh", p(&mesh), "--trajectory", p(&traj), "--cloud", p(&hit), "--dt", "0"])), 1);
}

#[test]
fn check_agrees_with_query_minimum() {
    let dir = TempDir::new().unwrap();
    let (mesh, traj) = capsule_setup(dir.path());
    let pts: Vec<Vector3<f64>> =
        (0..30).map(|i| Vector3::new(-0.6 + 0.08 * i as f64, 0.6 + 0.01 * i as f64, 0.3 - 0.02 * i as f64)).collect();
    let cloud = write_points(dir.path(), "c.xyz", &pts);
    let q = run(&["query", "--mesh", p(&mesh), "--trajectory", p(&traj), "--points", p(&cloud)]);
    let (_, rows) = parse_csv(&String::from_utf8(q.stdout).unwrap());
    let swept_min = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).fold(f64::INFINITY, f64::min);
    let c = run(&["check", "--mesh", p(&mesh), "--trajectory", p(&traj), "--cloud", p(&cloud)]);
    let report: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    assert!((report["min_clearance"].as_f64().unwrap() - swept_min).abs() < 1e-3);
}

#[test]
fn sweep_grid_slice_crosses_zero_at_the_capsule() {
    let dir = TempDir::new().unwrap();
    let (mesh, traj) = capsule_setup(dir.path());
    let od = dir.path().join("grid");
    let h = 0.05;
    let out = run(&[
        "sweep-grid",
        "--mesh",
        p(&mesh),
        "--trajectory",
        p(&traj),
        "--bounds",
        "-0.8,-0.8,-0.1,1.8,0.8,0.1",
        "--resolution",
        "0.05",
        "--slice-z",
        "0",
        "--output-dir",
        p(&od),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let grid = read_grid(std::io::BufReader::new(fs::File::open(od.join("grid.sdfgrid")).unwrap())).unwrap();
    assert_eq!(grid.dims[0] * grid.dims[1] * grid.dims[2], grid.values.len());

    let (header, rows) = parse_csv(&fs::read_to_string(od.join("slice.csv")).unwrap());
    assert_eq!(header, "x,y,z,f_star");
    let vals: Vec<[f64; 4]> =
        rows.iter().map(|r| std::array::from_fn(|k| r[k].parse::<f64>().unwrap())).collect();
    assert_eq!(vals.len(), grid.dims[0] * grid.dims[1]);
    let nx = grid.dims[0];
    let mut crossings = 0;
    for (n, a) in vals.iter().enumerate() {
        assert!(a[2].abs() < 1e-12);
        for m in [n + 1, n + nx] {
            let Some(b) = vals.get(m) else { continue };
            if m == n + 1 && m % nx == 0 {
                continue;
            }
            if a[3].signum() != b[3].signum() {
                crossings += 1;
                // the analytic surface passes within one voxel of the sign change
                let mid = Vector3::new(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.0);
                assert!(capsule_sdf(&mid).abs() <= h, "{mid:?}");
            }
        }
    }
    assert!(crossings > 20);
}

#[test]
fn static_sweep_grid_equals_body_sdf() {
    let dir = TempDir::new().unwrap();
    let body = primitives::cuboid(Vector3::new(0.3, 0.2, 0.1));
    let mesh = write_mesh(dir.path(), "box.obj", &body);
    let traj = Trajectory::minco(&[], &[1.0], Boundary::rest_to_rest(Vector3::zeros(), Vector3::zeros())).unwrap();
    let traj = write_traj(dir.path(), "still.json", &traj);
    let od = dir.path().join("g");
    let out = run(&[
        "sweep-grid", "--mesh", p(&mesh), "--trajectory", p(&traj), "--bounds", "-0.5,-0.5,-0.3,0.5,0.5,0.3",
        "--resolution", "0.1", "--output-dir", p(&od),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let grid = read_grid(std::io::BufReader::new(fs::File::open(od.join("grid.sdfgrid")).unwrap())).unwrap();
    let index = MeshDistanceIndex::new(body);
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let expect = index.signed_distance(&grid.point(i, j, k));
                assert_eq!(grid.get(i, j, k), expect as f32 as f64);
            }
        }
    }
    assert!(!od.join("slice.csv").exists());
}

#[test]
fn sweep_grid_rejects_bad_inputs() {
    let dir = TempDir::new().unwrap();
    let (mesh, traj) = capsule_setup(dir.path());
    let base = ["sweep-grid", "--mesh", p(&mesh), "--trajectory", p(&traj), "--output-dir", p(dir.path())];
    assert_eq!(code(&run(&[&base[..], &["--bounds", "0,0,0,1,1,1", "--resolution", "0"]].concat())), 1);
    assert_eq!(code(&run(&[&base[..], &["--bounds", "1,0,0,0,1,1", "--resolution", "0.1"]].concat())), 1);
    assert_eq!(code(&run(&[&base[..], &["--bounds", "0,0,1", "--resolution", "0.1"]].concat())), 1);
}

fn bench_scenario(dir: &Path) -> (PathBuf, PathBuf) {
    let (mesh, traj) = capsule_setup(dir);
    let pts: Vec<Vector3<f64>> = (0..200)
        .map(|i| {
            let a = i as f64 * 0.61;
            Vector3::new(0.5 + 1.2 * a.cos(), 1.0 + 0.3 * a.sin(), 0.01 * i as f64 - 1.0)
        })
        .collect();
    let cloud = write_points(dir, "cloud.xyz", &pts);
    (scenario(dir, &mesh, Some(&cloud), [0.0; 3], [1.0, 0.0, 0.0], ""), traj)
}

#[test]
fn bench_reports_latencies() {
    let dir = TempDir::new().unwrap();
    let (sc, traj) = bench_scenario(dir.path());
    let out = run(&["bench", p(&sc), "--trajectory", p(&traj), "--repetitions", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["queries"], 600);
    assert!(report["plan_seconds"].is_null());
    let (cold, warm) = (report["cold_us"]["p50"].as_f64().unwrap(), report["warm_us"]["p50"].as_f64().unwrap());
    assert!(warm <= cold, "warm {warm} cold {cold}");

    assert_eq!(code(&run(&["bench", p(&sc), "--trajectory", p(&traj), "--repetitions", "0"])), 1);
}

#[test]
fn config_override_file_applies() {
    let dir = TempDir::new().unwrap();
    let robot = small_box(dir.path());
    let cloud = write_points(dir.path(), "c.xyz", &[Vector3::new(1.0, 0.4, 0.0)]);
    let traj_box = Trajectory::minco(&[], &[1.0], Boundary::rest_to_rest(Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0))).unwrap();
    let traj_box = write_traj(dir.path(), "box.json", &traj_box);
    // the box passes 0.25 m from the point
    let strict = dir.path().join("strict.toml");
    fs::write(&strict, "[config]\ns_thr = 0.3\n").unwrap();
    let args = ["check", "--mesh", p(&robot), "--trajectory", p(&traj_box), "--cloud", p(&cloud)];
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(code(&run(&[&args[..], &["--config", p(&strict)]].concat())), 3);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "s_thr = \"wide\"\n").unwrap();
    assert_eq!(code(&run(&[&args[..], &["--config", p(&bad)]].concat())), 1);
}
