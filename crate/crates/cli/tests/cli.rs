use std::path::{Path, PathBuf};
use std::process::Command as Process;

use nars_cli::{run, Command, Manifest, RunConfig, RESOLVED_CONFIG};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn manifest(command: Command, config: &Path, out: &Path) -> Manifest {
    Manifest { command, config_path: config.to_path_buf(), out_dir: out.to_path_buf(), seed: None, parallel: 1 }
}

fn nars(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_nars")).args(args).env("NARS_LOG", "error").output().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn linear_wave_has_no_second_harmonic() {
    let dir = tempfile::tempdir().unwrap();
    run(&manifest(Command::Wave, &configs().join("wave_linear.toml"), dir.path())).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("harmonics.csv")).unwrap();
    let b2 = column(&csv, "B2");
    assert_eq!(b2.len(), 201);
    assert!(b2.iter().all(|v| *v <= 1e-6));
    assert!(column(&csv, "B1").iter().all(|v| (v - 1.0).abs() < 1e-9));
}

#[test]
fn nonlinear_wave_grows_harmonics() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&manifest(Command::Wave, &configs().join("wave.toml"), dir.path())).unwrap();
    let b2: f64 = summary.iter().find(|s| s.0 == "B2").unwrap().1.parse().unwrap();
    assert!(b2 > 0.2 && b2 < 0.25, "B2 at sigma 0.5: {b2}");
}

#[test]
fn anechoic_localization_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = nars(&["localize", "--config", configs().join("localize_anechoic.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("doa_err_deg:")).unwrap();
    let err: f64 = line.split(':').nth(1).unwrap().trim().parse().unwrap();
    assert!(err <= 1.0, "{line}");
    assert!(dir.path().join("srp.csv").exists());
}

#[test]
fn missing_sample_rate_fails_fast() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("scene.toml")).unwrap().replace("fs = 16000.0\n", "");
    let cfg = dir.path().join("broken.toml");
    std::fs::write(&cfg, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = nars(&["scene", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fs"));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_key_and_missing_section_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("wave.toml")).unwrap().replace("n_harmonics = 5", "n_harmonics = 5\nn_harmonic = 3");
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = nars(&["wave", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = nars(&["kzk", "--config", configs().join("wave.toml").to_str().unwrap(), "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("a").exists() && !dir.path().join("b").exists());
}

#[test]
fn bad_flags_exit_with_config_code() {
    let out = nars(&["wave", "--config"]);
    assert_eq!(out.status.code(), Some(1));
    let out = nars(&["transmogrify", "--config", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn beyond_shock_is_a_validity_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("wave.toml")).unwrap().replace("z_max = 0.0767", "z_max = 0.2");
    let cfg = dir.path().join("shock.toml");
    std::fs::write(&cfg, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = nars(&["wave", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!out_dir.exists());
}

#[test]
fn empty_bench_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("bench.toml")).unwrap().replace("[3.0, 8.0, 15.0, 25.0, 40.0]", "[]");
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = nars(&["bench", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn seed_override_lands_in_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(Command::Scene, &configs().join("scene.toml"), dir.path());
    m.seed = Some(42);
    run(&m).unwrap();
    let resolved = RunConfig::from_toml(&std::fs::read_to_string(dir.path().join(RESOLVED_CONFIG)).unwrap()).unwrap();
    assert_eq!(resolved.seed, 42);
    let original = RunConfig::from_toml(&std::fs::read_to_string(configs().join("scene.toml")).unwrap()).unwrap();
    assert_eq!(resolved.scenario, original.scenario);
}

#[test]
fn scene_artifacts_decode() {
    let dir = tempfile::tempdir().unwrap();
    run(&manifest(Command::Scene, &configs().join("scene.toml"), dir.path())).unwrap();
    let (mics, fs) = nars_core::io::read_wav(&dir.path().join("mics.wav")).unwrap();
    assert_eq!((mics.len(), mics[0].len(), fs), (8, 32_000, 16_000));
    let (rir, _) = nars_core::io::read_wav(&dir.path().join("rir.wav")).unwrap();
    assert_eq!(rir.len(), 8);
    assert!(dir.path().join("far.wav").exists());
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().all(|n| !n.ends_with(".tmp")));
}

#[test]
fn kzk_dumps_parse() {
    let dir = tempfile::tempdir().unwrap();
    run(&manifest(Command::Kzk, &configs().join("kzk.toml"), dir.path())).unwrap();
    for step in [0, 50, 100, 150, 200] {
        let bytes = std::fs::read(dir.path().join(format!("field_{step:05}.bin"))).unwrap();
        let f = nars_core::wavefield::HarmonicField::from_dump_bytes(&bytes, 3.125e-4).unwrap();
        assert_eq!((f.n_harm(), f.n_r()), (8, 256));
    }
    assert_eq!(std::fs::read(dir.path().join("field_00200.bin")).unwrap(), std::fs::read(dir.path().join("field_final.bin")).unwrap());
    let axis = std::fs::read_to_string(dir.path().join("axis.csv")).unwrap();
    assert_eq!(axis.lines().count(), 202);
}

#[test]
fn frontend_reports_echo_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&manifest(Command::Frontend, &configs().join("frontend.toml"), dir.path())).unwrap();
    let get = |k: &str| -> f64 { summary.iter().find(|s| s.0 == k).unwrap().1.parse().unwrap() };
    assert!(get("erle_db_second_half") > 0.0);
    assert!(get("rtf") >= 0.0);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("scenario_id,si_snr_db,snr_gain_db,rtf,doa_err_deg\n"));
    assert!(dir.path().join("erle.csv").exists());
}

#[test]
fn parallel_localization_matches_serial() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("localize_reverb.toml")).unwrap().replace("random_scenes = 50", "random_scenes = 5");
    let cfg = dir.path().join("few.toml");
    std::fs::write(&cfg, text).unwrap();
    let serial = dir.path().join("serial");
    let mut m = manifest(Command::Localize, &cfg, &serial);
    run(&m).unwrap();
    let par = dir.path().join("par");
    m.out_dir = par.clone();
    m.parallel = 3;
    run(&m).unwrap();
    assert_eq!(std::fs::read(serial.join("localize.csv")).unwrap(), std::fs::read(par.join("localize.csv")).unwrap());
}

#[test]
fn train_example_is_the_mistuned_preset() {
    let cfg = RunConfig::from_toml(&std::fs::read_to_string(configs().join("train.toml")).unwrap()).unwrap();
    let (scenario, rl) = nars_core::rl::mistuned_scenario();
    assert_eq!(cfg.scenario.as_ref(), Some(&scenario));
    assert_eq!(cfg.rl.as_ref(), Some(&rl));
}
