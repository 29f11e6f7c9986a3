use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use diffsteg::channel::{apply, DegradationKind, DegradationSpec};
use diffsteg::eval::{psnr_u8, robustness_sweep, SweepSettings};
use diffsteg::SolverConfig;
use diffsteg_cli::config::Loaded;
use diffsteg_cli::{pnm, toy_assets};
use tempfile::TempDir;

struct World {
    _tmp: TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn world() -> World {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().join("toy");
    let config = toy_assets::write(&root).unwrap();
    World { _tmp: tmp, root, config }
}

impl World {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_with_stdin(args, "")
    }

    fn run_with_stdin(&self, args: &[&str], stdin: &str) -> Output {
        let mut child = Command::new(env!("CARGO_BIN_EXE_diffsteg"))
            .args(args)
            .current_dir(&self.root)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
        child.wait_with_output().unwrap()
    }

    fn hide(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec!["hide", "--config", "config.toml", "--secret", "secrets/secret-00.pgm", "--out", out];
        args.extend_from_slice(extra);
        self.run(&args)
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

fn copy_sidecar(from: &Path, to: &Path) {
    let suffix = |p: &Path| PathBuf::from(format!("{}.json", p.display()));
    std::fs::copy(suffix(from), suffix(to)).unwrap();
}

#[test]
fn hide_keeps_the_secret_shape() {
    let w = world();
    assert_ok(&w.hide("out/c.pgm", &[]));
    let secret = pnm::read(&w.path("secrets/secret-00.pgm")).unwrap();
    let container = pnm::read(&w.path("out/c.pgm")).unwrap();
    assert_eq!(container.shape(), secret.shape());
    assert!(w.path("out/c.pgm.json").exists());
}

#[test]
fn unknown_key_is_a_data_error_naming_the_key() {
    let w = world();
    let o = w.hide("out/c.pgm", &["--public-key", "no-such-key"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-key"), "{}", stderr(&o));
    assert!(!w.path("out/c.pgm").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let w = world();
    assert_eq!(w.run(&["hide", "--config", "config.toml"]).status.code(), Some(1));
    assert_eq!(w.run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(w.run(&[]).status.code(), Some(1));
    assert_eq!(w.run(&["--help"]).status.code(), Some(0));
    assert_eq!(w.run(&["hide", "--config", "config.toml", "--secret", "x", "--steps", "many"]).status.code(), Some(1));
}

#[test]
fn bad_files_exit_with_two() {
    let w = world();
    let o = w.run(&["hide", "--config", "config.toml", "--secret", "secrets/missing.pgm"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(w.path("bad.toml"), "prior_spec = \"prior.toml\"\nmystery = 1\n").unwrap();
    let o = w.run(&["hide", "--config", "bad.toml", "--secret", "secrets/secret-00.pgm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mystery"), "{}", stderr(&o));
    std::fs::write(w.path("small.pgm"), b"P5\n4 4\n255\n0123456789abcdef").unwrap();
    let o = w.run(&["hide", "--config", "config.toml", "--secret", "small.pgm"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reveal_refuses_mismatched_solver_steps() {
    let w = world();
    assert_ok(&w.hide("out/c.pgm", &["--steps", "40"]));
    let o = w.run(&["reveal", "--config", "config.toml", "--container", "out/c.pgm", "--out", "out/r.pgm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--steps"), "{}", stderr(&o));
    assert!(!w.path("out/r.pgm").exists());
    let o = w.run(&[
        "reveal",
        "--config",
        "config.toml",
        "--container",
        "out/c.pgm",
        "--out",
        "out/r.pgm",
        "--steps",
        "40",
    ]);
    assert_ok(&o);
    assert!(w.path("out/r.pgm").exists());
}

#[test]
fn reveal_refuses_a_different_schedule() {
    let w = world();
    assert_ok(&w.hide("out/c.pgm", &[]));
    let text = std::fs::read_to_string(&w.config).unwrap();
    std::fs::write(w.path("other.toml"), format!("{text}\n[schedule]\nbeta_end = 0.03\n")).unwrap();
    for extra in [&[][..], &["--steps", "50"][..]] {
        let mut args = vec!["reveal", "--config", "other.toml", "--container", "out/c.pgm"];
        args.extend_from_slice(extra);
        let o = w.run(&args);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("schedule"), "{}", stderr(&o));
    }
}

#[test]
fn reveal_needs_a_sidecar_or_explicit_settings() {
    let w = world();
    assert_ok(&w.hide("out/c.pgm", &[]));
    std::fs::rename(w.path("out/c.pgm.json"), w.path("out/c.pgm.json.bak")).unwrap();
    let base = ["reveal", "--config", "config.toml", "--container", "out/c.pgm"];
    assert_eq!(w.run(&base).status.code(), Some(2));
    let mut args = base.to_vec();
    args.extend(["--public-key", "glyphs-striped", "--steps", "50"]);
    assert_ok(&w.run(&args));
}

#[test]
fn degraded_container_still_reveals() {
    let w = world();
    assert_ok(&w.hide("out/c.pgm", &[]));
    let container = pnm::read(&w.path("out/c.pgm")).unwrap();
    let noisy = apply(&container, &DegradationSpec::gaussian_noise(10.0, 3)).unwrap();
    pnm::write(&w.path("out/noisy.pgm"), &noisy).unwrap();
    copy_sidecar(&w.path("out/c.pgm"), &w.path("out/noisy.pgm"));
    let o = w.run(&["reveal", "--config", "config.toml", "--container", "out/noisy.pgm", "--out", "out/r.pgm"]);
    assert_ok(&o);
    let revealed = pnm::read(&w.path("out/r.pgm")).unwrap();
    assert_eq!(revealed.shape(), container.shape());
}

#[test]
fn private_key_can_come_from_stdin() {
    let w = world();
    assert_ok(&w.hide("out/c.pgm", &[]));
    let text = std::fs::read_to_string(&w.config).unwrap().replace("private = \"glyphs\"\n", "");
    std::fs::write(w.path("receiver.toml"), text).unwrap();
    let args = ["reveal", "--config", "receiver.toml", "--container", "out/c.pgm", "--out", "out/r.pgm"];
    assert_ok(&w.run_with_stdin(&args, "glyphs\n"));
    let flagged = [
        "reveal",
        "--config",
        "receiver.toml",
        "--container",
        "out/c.pgm",
        "--out",
        "out/f.pgm",
        "--private-key",
        "glyphs",
    ];
    assert_ok(&w.run(&flagged));
    assert_eq!(std::fs::read(w.path("out/r.pgm")).unwrap(), std::fs::read(w.path("out/f.pgm")).unwrap());
    assert_eq!(w.run(&args).status.code(), Some(1));
}

#[test]
fn private_material_only_with_diagnostics() {
    let w = world();
    assert_ok(&w.hide("out/c.pgm", &[]));
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(w.path("out/c.pgm.json")).unwrap()).unwrap();
    assert!(meta.get("private_key").is_none());
    assert!(meta.get("latent").is_none());
    assert_eq!(meta["public_key"], "glyphs-striped");
    assert!(!w.path("out/c.pgm.latent.json").exists());

    assert_ok(&w.hide("out/d.pgm", &["--unsafe-diagnostics"]));
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(w.path("out/d.pgm.json")).unwrap()).unwrap();
    assert_eq!(meta["private_key"], "glyphs");
    let latent: Vec<f64> = serde_json::from_slice(&std::fs::read(w.path("out/d.pgm.latent.json")).unwrap()).unwrap();
    assert_eq!(latent.len(), 256);

    let o = w.hide("out/e.pgm", &["--public-key", "glyphs"]);
    assert_eq!(o.status.code(), Some(2));
    assert_ok(&w.hide("out/e.pgm", &["--public-key", "glyphs", "--unsafe-diagnostics"]));
}

#[test]
fn bench_writes_the_default_grid_and_redacts() {
    let w = world();
    let o = w.run(&["bench", "--config", "config.toml", "--out", "report"]);
    assert_ok(&o);
    let csv = std::fs::read_to_string(w.path("report/report.csv")).unwrap();
    assert!(csv.contains("# private_key=<redacted>"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    for cell in [
        "identity,0,",
        "gaussian_noise,0,",
        "gaussian_noise,10,",
        "gaussian_noise,20,",
        "gaussian_noise,30,",
        "jpeg_like,80,",
        "jpeg_like,40,",
        "jpeg_like,20,",
    ] {
        assert!(rows.iter().any(|r| r.starts_with(cell)), "missing {cell}");
    }
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(w.path("report/report.json")).unwrap()).unwrap();
    assert!(json["config"]["private_key"].is_null());

    assert_ok(&w.run(&["bench", "--config", "config.toml", "--out", "open", "--unsafe-diagnostics"]));
    let csv = std::fs::read_to_string(w.path("open/report.csv")).unwrap();
    assert!(csv.contains("# private_key=glyphs\n"));
}

#[test]
fn bench_on_one_image_warns() {
    let w = world();
    std::fs::create_dir(w.path("one")).unwrap();
    std::fs::copy(w.path("secrets/secret-03.pgm"), w.path("one/a.pgm")).unwrap();
    let o = w.run(&["bench", "--config", "config.toml", "--corpus", "one", "--out", "one-report"]);
    assert_ok(&o);
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(w.path("one-report/report.json")).unwrap()).unwrap();
    for row in json["rows"].as_array().unwrap() {
        assert_eq!(row["trials"], 5);
    }
    std::fs::create_dir(w.path("empty")).unwrap();
    let o = w.run(&["bench", "--config", "config.toml", "--corpus", "empty"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_needs_a_seed_for_noisy_channels() {
    let w = world();
    let text = std::fs::read_to_string(&w.config).unwrap().replace("seed = 7\n", "");
    std::fs::write(w.path("unseeded.toml"), text).unwrap();
    let o = w.run(&["bench", "--config", "unseeded.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
    assert_ok(&w.run(&["bench", "--config", "unseeded.toml", "--seed", "3"]));
}

#[test]
fn cli_reveal_matches_the_quantized_sweep_row() {
    let w = world();
    assert_ok(&w.hide("out/c.pgm", &[]));
    assert_ok(&w.run(&["reveal", "--config", "config.toml", "--container", "out/c.pgm", "--out", "out/r.pgm"]));
    let secret = pnm::read(&w.path("secrets/secret-00.pgm")).unwrap();
    let revealed = pnm::read(&w.path("out/r.pgm")).unwrap();
    let cli_psnr = psnr_u8(&secret, &revealed).unwrap();

    // The file round trip quantizes the container, which is what the
    // zero-noise channel does.
    let loaded = Loaded::from_file(&w.config).unwrap();
    let reg = loaded.registry().unwrap();
    let settings = SweepSettings {
        grid: vec![DegradationSpec::identity(), DegradationSpec::gaussian_noise(0.0, 0)],
        solver: SolverConfig::default(),
        seed: 7,
        repeats: 1,
    };
    let report =
        robustness_sweep(&[secret], &reg.key("glyphs").unwrap(), &reg.key("glyphs-striped").unwrap(), &settings, &reg)
            .unwrap();
    let row = report.row(DegradationKind::GaussianNoise, 0.0).unwrap();
    assert!((row.mean_psnr_u8 - cli_psnr).abs() < 1e-9, "{} vs {cli_psnr}", row.mean_psnr_u8);
    assert!(cli_psnr > 18.0);
}

#[test]
fn roundtrip_reports_error() {
    let w = world();
    let o =
        w.run(&["roundtrip", "--config", "config.toml", "--secret", "secrets/secret-01.pgm", "--out", "out/rt.pgm"]);
    assert_ok(&o);
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.starts_with("key=glyphs steps=50 rms="), "{line}");
    assert!(w.path("out/rt.pgm").exists());
}

#[test]
fn make_prior_creates_and_extends_specs() {
    let w = world();
    let spec = "made/prior.toml";
    let o = w.run(&[
        "make-prior",
        "--key",
        "pair",
        "--variance",
        "0.01",
        "--out",
        spec,
        "templates/blobs-0.pgm",
        "templates/blobs-1.pgm",
    ]);
    assert_ok(&o);
    let o = w.run(&["make-prior", "--key", "solo", "--variance", "0.02", "--out", spec, "templates/glyphs-2.pgm"]);
    assert_ok(&o);
    let text = std::fs::read_to_string(w.path(spec)).unwrap();
    let parsed = diffsteg_cli::prior_spec::PriorSpec::parse(&text).unwrap();
    assert_eq!(parsed.keys.len(), 2);
    let reg = parsed.registry(&w.path("made"), diffsteg::NoiseSchedule::default_linear()).unwrap();
    let pair = reg.mixture(&reg.key("pair").unwrap()).unwrap();
    assert_eq!(pair.weights(), &[0.5, 0.5]);
    assert!(!text.contains(&w.root.display().to_string()), "template paths should be relative:\n{text}");

    let bad = w.run(&["make-prior", "--key", "k", "--variance", "-1", "--out", spec, "templates/blobs-0.pgm"]);
    assert_eq!(bad.status.code(), Some(1));
    std::fs::write(w.path("tiny.pgm"), b"P5\n2 2\n255\nabcd").unwrap();
    let bad = w.run(&["make-prior", "--key", "k", "--variance", "0.1", "--out", spec, "tiny.pgm"]);
    assert_eq!(bad.status.code(), Some(2));
}
