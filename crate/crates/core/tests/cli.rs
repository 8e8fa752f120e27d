use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_v2v-consensus"));
    c.env_remove("V2V_CONSENSUS_OUT");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_dir(o: &Output) -> PathBuf {
    let line = stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("wrote ").map(str::to_string))
        .expect("run prints its output directory");
    PathBuf::from(line)
}

fn run(subcommand: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(subcommand)
        .arg("--config")
        .arg(configs().join(config))
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

/// Writes a config next to a copy of the calibration file.
fn scratch_config(dir: &Path, body: &str) -> PathBuf {
    fs::create_dir_all(dir.join("calibration")).unwrap();
    fs::copy(
        configs().join("calibration/default.toml"),
        dir.join("calibration/default.toml"),
    )
    .unwrap();
    let path = dir.join("c.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn run_writes_one_jsonl_line_per_episode() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("run", "swarm_6g.toml", tmp.path(), &["--seeds", "1", "--episodes", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = run_dir(&o);
    assert!(dir.starts_with(tmp.path()));
    let jsonl = fs::read_to_string(dir.join("episodes.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 10);
    assert!(dir.join("summary.csv").exists());
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn missing_config_names_the_path() {
    let o = bin().args(["run", "--config", "missing.toml"]).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing.toml"), "{}", stderr(&o));
}

#[test]
fn sweeps_write_one_row_per_grid_point() {
    let tmp = tempfile::tempdir().unwrap();
    for (config, rows) in [
        ("sweep_tau.toml", 8),
        ("sweep_packet_loss.toml", 4),
        ("sweep_swarm_size.toml", 5),
    ] {
        let o = run("sweep", config, tmp.path(), &["--seeds", "0", "--episodes", "5"]);
        assert!(o.status.success(), "{config}: {}", stderr(&o));
        let csv = fs::read_to_string(run_dir(&o).join("summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), rows + 1, "{config}");
    }
}

#[test]
fn run_and_sweep_reject_the_wrong_config_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("run", "sweep_tau.toml", tmp.path(), &[]);
    assert!(!o.status.success());
    let o = run("sweep", "swarm_6g.toml", tmp.path(), &[]);
    assert!(!o.status.success());
}

#[test]
fn unknown_sweep_kind_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scratch_config(
        tmp.path(),
        "calibration_file = \"calibration/default.toml\"\n[campaign]\ncondition = \"swarm_6g\"\n[sweep]\nkind = \"bandwidth\"\n",
    );
    let o = bin().arg("sweep").arg("--config").arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sweep.kind"), "{}", stderr(&o));
}

#[test]
fn validate_accepts_every_shipped_config() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let o = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
            assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
            assert!(stdout(&o).contains("[campaign]"));
        }
    }
}

#[test]
fn validate_names_an_out_of_range_tau() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scratch_config(
        tmp.path(),
        "calibration_file = \"calibration/default.toml\"\n[campaign]\ncondition = \"swarm_6g\"\n[consensus]\ntau = 1.5\n",
    );
    let o = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("tau"), "{}", stderr(&o));
}

#[test]
fn validate_names_a_decreasing_loss_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scratch_config(
        tmp.path(),
        "calibration_file = \"calibration/default.toml\"\n[campaign]\ncondition = \"swarm_6g\"\n[sweep]\nkind = \"swarm_size\"\n[density_loss]\nanchors = [[2, 0.2], [4, 0.1]]\n",
    );
    let o = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("density_loss"), "{}", stderr(&o));
}

#[test]
fn report_merges_core_runs_with_the_cloud_row() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = ["single_local.toml", "swarm_baseline_v2x.toml", "swarm_6g.toml"]
        .iter()
        .map(|c| {
            let o = run("run", c, tmp.path(), &["--seeds", "0,1", "--episodes", "5"]);
            assert!(o.status.success(), "{c}: {}", stderr(&o));
            run_dir(&o)
        })
        .collect();

    let o = bin().arg("report").args(&dirs).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for label in ["single_local", "swarm_baseline_v2x", "swarm_6g", "cloud_gpt4_reference"] {
        assert!(text.contains(label), "{label} missing from:\n{text}");
    }

    let o = bin().arg("report").arg("--no-cloud-reference").args(&dirs).output().unwrap();
    assert!(o.status.success());
    assert!(!stdout(&o).contains("cloud_gpt4_reference"));
}

#[test]
fn report_points_at_the_corrupt_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("run", "single_local.toml", tmp.path(), &["--seeds", "0", "--episodes", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = run_dir(&o);
    let csv = dir.join("summary.csv");
    let text = fs::read_to_string(&csv).unwrap();
    fs::write(&csv, text.replacen("single_local,,", "single_local,,oops", 1)).unwrap();

    let o = bin().arg("report").arg(&dir).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("summary.csv:2:"), "{}", stderr(&o));
}

#[test]
fn report_without_artifacts_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().arg("report").arg(tmp.path()).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("summary.csv"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .env("V2V_CONSENSUS_OUT", tmp.path())
        .args(["run", "--seeds", "0", "--episodes", "2", "--config"])
        .arg(configs().join("single_local.toml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(run_dir(&o).starts_with(tmp.path()));
}

#[test]
fn identical_runs_share_a_run_id_and_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run("run", "swarm_6g.toml", &tmp.path().join("a"), &["--seeds", "0,1", "--episodes", "8", "--parallelism", "1"]);
    let b = run("run", "swarm_6g.toml", &tmp.path().join("b"), &["--seeds", "1,0", "--episodes", "8", "--parallelism", "4"]);
    assert!(a.status.success() && b.status.success());
    let (da, db) = (run_dir(&a), run_dir(&b));
    assert_eq!(da.file_name(), db.file_name());
    for f in ["summary.csv", "episodes.jsonl"] {
        assert_eq!(fs::read(da.join(f)).unwrap(), fs::read(db.join(f)).unwrap(), "{f}");
    }
}
