//! End-to-end tests of the `texpaint` binary: artifact layout, exit codes,
//! reproducibility, and the report/ablate workflow.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn texpaint_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_texpaint"));
    // Isolate tests from an ambient default-output-directory setting.
    cmd.env_remove("TEXPAINT_OUT");
    cmd
}

/// Small oracle scene that runs in well under a second.
const FAST_ORACLE: &[&str] = &[
    "--set",
    "mesh=quad",
    "--set",
    "cameras=2",
    "--set",
    "image_size=32",
    "--set",
    "texture_size=48",
    "--set",
    "codec=identity",
    "--set",
    "predictor=oracle:gradient:0.3,0.2,0.5:0.7,0.4,0.1",
    "--set",
    "steps=4",
    "--set",
    "opt_iterations=10",
    "--set",
    "sgd_iterations=150",
];

/// Anchored-oracle scene where coupling quality is visible in the report:
/// a short train schedule keeps latent magnitudes bounded so the per-step
/// optimization can actually pull the chains together.
const COMPARATIVE: &[&str] = &[
    "--set",
    "mesh=quad",
    "--set",
    "cameras=3",
    "--set",
    "image_size=32",
    "--set",
    "texture_size=48",
    "--set",
    "codec=affine",
    "--set",
    "latent_size=8",
    "--set",
    "predictor=oracle:checker:8:0.9,0.1,0.1:0.1,0.1,0.9",
    "--set",
    "oracle_strength=0.5",
    "--set",
    "train_steps=60",
    "--set",
    "steps=6",
    "--set",
    "opt_iterations=25",
    "--set",
    "opt_lr=0.02",
    "--set",
    "sgd_iterations=150",
];

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn texpaint");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn texpaint");
    assert!(
        !out.status.success(),
        "expected failure\nstdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    out
}

/// Extracts `key = value` from report-style text.
fn value_of(text: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn paint_writes_every_artifact() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    run_ok(texpaint_cmd()
        .arg("paint")
        .arg("--out")
        .arg(&out)
        .args(FAST_ORACLE)
        .arg("--verbose"));

    for file in [
        "config.txt",
        "texture.png",
        "texture_alg1.png",
        "views/view_00.png",
        "views/view_01.png",
        "depth/depth_00.png",
        "depth/depth_00.png.range.txt",
        "schedule.txt",
        "loss_trace.csv",
        "sgd_trace.csv",
        "report.txt",
    ] {
        assert!(out.join(file).exists(), "missing artifact `{file}`");
    }

    let echo = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("cameras = 2\n"), "echo should show the override");
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(value_of(&report, "mean_variance") <= 1e-4);
}

#[test]
fn oracle_self_check_passes() {
    let dir = tempdir().unwrap();
    let out = run_ok(texpaint_cmd()
        .arg("oracle-test")
        .arg("--out")
        .arg(dir.path().join("run"))
        .args(FAST_ORACLE));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("oracle-test: PASS"), "{stdout}");
}

#[test]
fn ablating_latent_blend_raises_the_reported_variance() {
    let dir = tempdir().unwrap();
    let (main_dir, blend_dir) = (dir.path().join("main"), dir.path().join("blend"));
    run_ok(texpaint_cmd().arg("paint").arg("--out").arg(&main_dir).args(COMPARATIVE));
    run_ok(texpaint_cmd()
        .arg("ablate")
        .arg("latent-blend")
        .arg("--out")
        .arg(&blend_dir)
        .args(COMPARATIVE));

    let recompute = |d: &Path| {
        let out = run_ok(texpaint_cmd().arg("report").arg(d));
        value_of(&String::from_utf8_lossy(&out.stdout), "mean_variance")
    };
    let (main_var, blend_var) = (recompute(&main_dir), recompute(&blend_dir));
    assert!(
        blend_var > main_var,
        "latent blending should be less consistent: blend {blend_var} vs main {main_var}"
    );
    assert!(blend_dir.join("report_recomputed.txt").exists());
}

#[test]
fn missing_mesh_fails_naming_the_file() {
    let dir = tempdir().unwrap();
    let out = run_err(texpaint_cmd()
        .arg("paint")
        .arg("--out")
        .arg(dir.path().join("run"))
        .args(["--set", "mesh=/no/such/place/missing.obj"]));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing.obj"), "{stderr}");
    assert!(!dir.path().join("run/report.txt").exists());
}

#[test]
fn unknown_keys_fail_by_name() {
    let dir = tempdir().unwrap();
    let out = run_err(texpaint_cmd()
        .arg("paint")
        .arg("--out")
        .arg(dir.path().join("run"))
        .args(["--set", "coolness=9"]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coolness"));

    let config = dir.path().join("bad.txt");
    std::fs::write(&config, "sparkle = 1\n").unwrap();
    let out = run_err(texpaint_cmd()
        .arg("paint")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("run2")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sparkle"));
}

#[test]
fn identical_seeds_reproduce_identical_textures() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(texpaint_cmd().arg("paint").arg("--out").arg(out).args(FAST_ORACLE));
    }
    let bytes_a = std::fs::read(a.join("texture.png")).unwrap();
    let bytes_b = std::fs::read(b.join("texture.png")).unwrap();
    assert_eq!(bytes_a, bytes_b, "same config + seed must give identical PNGs");
}

#[test]
fn thread_cap_does_not_change_the_texture() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("t1"), dir.path().join("t3"));
    run_ok(texpaint_cmd()
        .arg("paint")
        .arg("--out")
        .arg(&a)
        .args(FAST_ORACLE)
        .args(["--threads", "1"]));
    run_ok(texpaint_cmd()
        .arg("paint")
        .arg("--out")
        .arg(&b)
        .args(FAST_ORACLE)
        .args(["--threads", "3"]));
    assert_eq!(
        std::fs::read(a.join("texture.png")).unwrap(),
        std::fs::read(b.join("texture.png")).unwrap(),
        "worker-pool size must not affect the output"
    );
}

#[test]
fn env_var_sets_the_default_output_directory() {
    let dir = tempdir().unwrap();
    let env_dir = dir.path().join("from-env");
    run_ok(texpaint_cmd()
        .arg("paint")
        .args(FAST_ORACLE)
        .env("TEXPAINT_OUT", &env_dir));
    assert!(env_dir.join("report.txt").exists());

    // An explicit flag wins over the environment.
    let flag_dir = dir.path().join("from-flag");
    run_ok(texpaint_cmd()
        .arg("paint")
        .arg("--out")
        .arg(&flag_dir)
        .args(FAST_ORACLE)
        .env("TEXPAINT_OUT", dir.path().join("ignored")));
    assert!(flag_dir.join("report.txt").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn gen_assets_writes_loadable_meshes() {
    let dir = tempdir().unwrap();
    run_ok(texpaint_cmd().arg("gen-assets").arg("--out").arg(dir.path()));
    for name in ["quad.obj", "cube.obj", "icosphere.obj"] {
        let path = dir.path().join(name);
        assert!(path.exists(), "missing `{name}`");
        let mesh = texpaint::geometry::load_mesh(&path).unwrap();
        assert!(!mesh.facets().is_empty());
    }
}
