//! The `holosim` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holosim::cli::{execute, parse_config_str, Artifact, Command as Cmd, ExperimentConfig};
use holosim::hbgf::{self, Grid};

fn holosim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holosim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn files_with(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort();
    v
}

#[test]
fn unknown_command_prints_usage() {
    let out = holosim(&["transmogrify"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn efficiency_map_writes_csv_and_png() {
    let dir = tempfile::tempdir().unwrap();
    let out = holosim(&[
        "efficiency-map",
        "--output",
        dir.path().to_str().unwrap(),
        "--set",
        "kogelnik.theta_max_deg=10",
        "--set",
        "kogelnik.theta_step_deg=5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.starts_with("efficiency-map: eta[0,0] = 0.5177"),
        "{stdout}"
    );
    let csv = fs::read_to_string(&files_with(dir.path(), "-eta.csv")[0]).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("theta_r_deg,theta_s_deg,eta"));
    assert_eq!(lines.count(), 9);
    assert_eq!(files_with(dir.path(), "-eta.png").len(), 1);
}

#[test]
fn eyebox_sweep_defaults_to_standard_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = holosim(&[
        "sweep",
        "--axis",
        "eyebox",
        "--rays-per-point",
        "20",
        "--set",
        "optics.lit_grid=3",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(&files_with(dir.path(), "-brightness.csv")[0]).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "param_a,param_b,relative_brightness");
    assert_eq!(rows.len(), 1 + 33 * 33);
    assert!(rows.contains(&"0.0,0.0,1.0"));
    let grid = hbgf::read_file(&files_with(dir.path(), "-brightness.hbgf")[0])
        .unwrap()
        .into_real()
        .unwrap();
    assert_eq!(grid.dim(), (33, 33));
}

#[test]
fn invalid_value_names_key_and_exits_with_config_code() {
    let out = holosim(&["render-retina", "--set", "optics.pupil_diameter_mm=-1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pupil_diameter_mm"), "{err}");
}

#[test]
fn parse_errors_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"seed\": 1,\n  \"optics\": {,}\n}\n").unwrap();
    let out = holosim(&["render-retina", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn config_file_round_trip_through_binary() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::default();
    config.optics.lit_grid = 3;
    config.optics.rays_per_point = 5;
    config.seed = 12;
    config.output.directory = dir.path().join("out");
    config.output.png = false;
    assert_eq!(parse_config_str(&config.to_json(), "x").unwrap(), config);
    let path = dir.path().join("c.json");
    fs::write(&path, config.to_json()).unwrap();
    let out = holosim(&["render-retina", "--config", path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out_dir = dir.path().join("out");
    assert!(files_with(&out_dir, ".png").is_empty());
    let diag = fs::read_to_string(&files_with(&out_dir, "-diagnostics.csv")[0]).unwrap();
    assert!(
        diag.starts_with("stage,count,discarded_weight\nemitted,45,"),
        "{diag}"
    );

    // Read-back equals the in-memory grid exactly.
    let (_, artifacts) = execute(Cmd::RenderRetina, &config).unwrap();
    let Artifact::Grid {
        grid: Grid::Real(expected),
        ..
    } = &artifacts[0]
    else {
        panic!("first artifact is the retina grid")
    };
    let back = hbgf::read_file(&files_with(&out_dir, "-retina.hbgf")[0])
        .unwrap()
        .into_real()
        .unwrap();
    assert_eq!(&back, expected);
}

#[test]
fn optimize_then_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let small = [
        "--set",
        "cgh.rows=32",
        "--set",
        "cgh.cols=32",
        "--set",
        "cgh.n_planes=2",
    ];
    let out = holosim(
        &[
            &["optimize-hologram", "--iterations", "30", "--output", d][..],
            &small,
        ]
        .concat(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let loss = fs::read_to_string(&files_with(dir.path(), "-loss.csv")[0]).unwrap();
    assert!(loss.starts_with("iteration,loss\n0,"));
    assert!(loss.lines().last().unwrap().starts_with("30,"));
    let phase = files_with(dir.path(), "-phase.hbgf")[0].clone();
    let out = holosim(
        &[
            &[
                "reconstruct",
                "--hologram",
                phase.to_str().unwrap(),
                "--output",
                d,
            ][..],
            &small,
        ]
        .concat(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("masked PSNR"), "{stdout}");
    assert_eq!(files_with(dir.path(), "-plane1.hbgf").len(), 1);
}

#[test]
fn reconstruct_of_missing_file_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = holosim(&[
        "reconstruct",
        "--hologram",
        "/nonexistent/h.hbgf",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(20));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn encode_from_png_input() {
    let dir = tempfile::tempdir().unwrap();
    let img =
        image::GrayImage::from_fn(16, 12, |x, y| image::Luma([((x * 16 + y * 4) % 256) as u8]));
    let path = dir.path().join("in.png");
    img.save(&path).unwrap();
    let out = holosim(&[
        "encode",
        "--output",
        dir.path().to_str().unwrap(),
        "--set",
        &format!(
            "cgh.image_path={}",
            serde_json::Value::String(path.display().to_string())
        ),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let phase = hbgf::read_file(&files_with(dir.path(), "-phase.hbgf")[0])
        .unwrap()
        .into_real()
        .unwrap();
    assert_eq!(phase.dim(), (12, 16));
}

#[test]
fn png_phase_preview_reconstructs_like_hbgf() {
    let mut config = ExperimentConfig::default();
    config.cgh.rows = 32;
    config.cgh.cols = 32;
    config.cgh.n_planes = 2;
    config.cgh.iterations = 20;
    let dir = tempfile::tempdir().unwrap();
    config.output.directory = dir.path().to_path_buf();
    holosim::cli::run(Cmd::OptimizeHologram, &config).unwrap();
    let plane0 = |hologram: PathBuf| {
        let mut c = config.clone();
        c.cgh.hologram_path = Some(hologram);
        let (_, artifacts) = execute(Cmd::Reconstruct, &c).unwrap();
        let Artifact::Grid {
            grid: Grid::Real(g),
            ..
        } = &artifacts[0]
        else {
            panic!("first artifact is plane 0")
        };
        g.clone()
    };
    let exact = plane0(files_with(dir.path(), "-phase.hbgf")[0].clone());
    let quantized = plane0(files_with(dir.path(), "-phase.png")[0].clone());
    // 8-bit phase steps are 2π/255, so intensities agree to a few percent.
    let err: f64 = exact
        .iter()
        .zip(&quantized)
        .map(|(a, b)| (a - b).abs())
        .sum();
    assert!(err <= 0.05 * exact.sum(), "{err} vs {}", exact.sum());
}
