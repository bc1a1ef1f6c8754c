use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cevo_core::environment::WorldConfig;
use cevo_core::harness::{read_manifest, RunConfig};

fn cevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cevo"))
        .args(args)
        .env_remove("CEVO_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A run small enough to finish in seconds.
fn tiny_config(dir: &Path, out: &Path) -> String {
    let mut cfg = RunConfig::desk();
    cfg.environment = WorldConfig {
        max_frames: 200,
        ..WorldConfig::with_resolution(16, 20)
    };
    cfg.autoencoder.chokepoint_size = 8;
    cfg.autoencoder.buffer_capacity = 40;
    cfg.autoencoder.max_presentations = 20;
    cfg.autoencoder.comparison_presentations = 20;
    cfg.experiment.generations = 3;
    cfg.experiment.novelty_generations = 1;
    cfg.experiment.episodes_per_fitness = 2;
    cfg.experiment.eval_episodes = 5;
    cfg.experiment.sparsity_frames = 10;
    cfg.experiment.checkpoint_every = 1;
    cfg.cmaes.population_size = Some(4);
    cfg.output_dir = out.to_path_buf();
    let path = dir.join("tiny.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = cevo(&["train", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"));
}

#[test]
fn unknown_key_reports_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = RunConfig::desk().to_json().replacen("\"master_seed\"", "\"master_sed\"", 1);
    fs::write(&path, text).unwrap();
    let o = cevo(&["train", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("master_sed") && err.contains("line"), "{err}");
}

#[test]
fn dry_run_prints_config_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = tiny_config(dir.path(), &out);
    let o = cevo(&["--dry-run", "train", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let echoed = RunConfig::from_json(&stdout(&o)).unwrap();
    assert_eq!(echoed.experiment.generations, 3);
    assert!(!out.exists());
}

#[test]
fn seed_environment_variable_overrides_config() {
    let o = Command::new(env!("CARGO_BIN_EXE_cevo"))
        .args(["--dry-run", "train", "desk"])
        .env("CEVO_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(RunConfig::from_json(&stdout(&o)).unwrap().master_seed, 77);
    let o = Command::new(env!("CARGO_BIN_EXE_cevo"))
        .args(["--dry-run", "train", "desk"])
        .env("CEVO_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_recon_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = tiny_config(dir.path(), &out);
    let o = cevo(&["--jobs", "1", "train", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("Network,Mean,std dev,Solved,Good,Mediocre,Bad\n"));
    assert_eq!(stderr(&o).lines().filter(|l| l.starts_with("gen ")).count(), 3);
    let manifest = read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.generations.len(), 3);

    // Same seed, same champion file.
    let out2 = dir.path().join("run2");
    let o = cevo(&["train", &cfg, "--output-dir", out2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(out.join("champion.cevo")).unwrap(),
        fs::read(out2.join("champion.cevo")).unwrap()
    );

    // Evaluation table.
    let genome = out.join("champion.cevo");
    let csv = dir.path().join("eval.csv");
    let o = cevo(&[
        "eval",
        genome.to_str().unwrap(),
        &cfg,
        "--episodes",
        "7",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(&csv).unwrap();
    assert_eq!(table, stdout(&o));
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("Network,Mean,std dev,Solved,Good,Mediocre,Bad"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "A");
    let total: usize = row[3..].iter().map(|c| c.parse::<usize>().unwrap()).sum();
    assert_eq!(total, 7);
    let o = cevo(&["eval", genome.to_str().unwrap(), &cfg, "--episodes", "3", "--random-input"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("1,"));

    // Exported genome feeds back into eval; a wrong-length one is rejected.
    let json = dir.path().join("genome.json");
    let o = cevo(&["export-genome", out.to_str().unwrap(), "--out", json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let weights: Vec<f64> = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(weights.len(), 8 * 16 + 16 * 8 + 8 * 4);
    let auto = out.join("champion_autoencoder.cevo");
    let o = cevo(&[
        "eval",
        json.to_str().unwrap(),
        &cfg,
        "--episodes",
        "7",
        "--autoencoder",
        auto.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&o), table);
    let short = dir.path().join("short.json");
    fs::write(&short, serde_json::to_string(&weights[1..]).unwrap()).unwrap();
    let o = cevo(&[
        "eval",
        short.to_str().unwrap(),
        &cfg,
        "--autoencoder",
        auto.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    // Reconstruction pairs are twice the frame width.
    let recon = dir.path().join("recon");
    let o = cevo(&["recon", out.to_str().unwrap(), "--frames", "3", "--out", recon.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut files: Vec<_> = fs::read_dir(&recon).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 3);
    assert!(fs::read(&files[0]).unwrap().starts_with(b"P6\n40 16\n255\n"));
    let empty = dir.path().join("none");
    let o = cevo(&["recon", out.to_str().unwrap(), "--frames", "0", "--out", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!empty.exists());

    // A truncated checkpoint file is a usage error.
    fs::write(out.join("checkpoint/cmaes.bin"), b"CMAS").unwrap();
    let o = cevo(&["recon", out.to_str().unwrap(), "--frames", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn resume_continues_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let cfg = tiny_config(dir.path(), &full);
    assert_eq!(cevo(&["train", &cfg]).status.code(), Some(0));

    // Interrupt by running a shorter schedule, then resume under the full one.
    let part = dir.path().join("part");
    let mut short = RunConfig::from_file(Path::new(&cfg)).unwrap();
    short.experiment.generations = 2;
    short.output_dir = part.clone();
    let short_path = dir.path().join("short.json");
    fs::write(&short_path, short.to_json()).unwrap();
    assert_eq!(cevo(&["train", short_path.to_str().unwrap(), "--no-sparsity"]).status.code(), Some(0));
    let progress: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(part.join("checkpoint/progress.json")).unwrap()).unwrap();
    assert_eq!(progress["generation"], 2);
    // Re-point the checkpoint at the full schedule.
    let mut resumed = RunConfig::from_file(&part.join("checkpoint/config.json")).unwrap();
    resumed.experiment.generations = 3;
    fs::write(part.join("checkpoint/config.json"), resumed.to_json()).unwrap();
    let o = cevo(&["train", short_path.to_str().unwrap(), "--resume"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("resuming at generation 2"));
    let a = read_manifest(&full.join("manifest.json")).unwrap();
    let b = read_manifest(&part.join("manifest.json")).unwrap();
    assert_eq!(a.generations, b.generations);
    assert_eq!(a.evaluation, b.evaluation);
    assert_eq!(
        fs::read(full.join("champion.cevo")).unwrap(),
        fs::read(part.join("champion.cevo")).unwrap()
    );
}

#[test]
fn bench_env_suite_passes() {
    let o = cevo(&["bench", "env"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("PASS env"));
    let o = cevo(&["bench", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}
