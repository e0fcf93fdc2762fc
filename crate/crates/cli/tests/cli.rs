use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_illusion"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.args(args).env_remove("ILLUSION_OUT_DIR");
    cmd.output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn identity_caravan_passes_with_unit_slowdown() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["run", path(&shipped("identity_caravan.json")), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    assert_eq!(r["illusion"]["measured_slowdown"], 1);
    assert_eq!(r["zero_residual"], true);
    for f in [
        "steps.csv",
        "report.json",
        "witness.json",
        "traces.json",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn missing_seed_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"scenario": "caravan", "horizon": 5, "output_dir": "x"}"#,
    );
    let o = run(&["run", path(&cfg), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`seed`"));
    assert!(!tmp.path().join("o").exists(), "nothing runs on a bad config");
}

#[test]
fn unknown_scenario_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"scenario": "teleport", "seed": 1, "horizon": 5, "output_dir": "x"}"#,
    );
    assert_eq!(run(&["run", path(&cfg)]).status.code(), Some(2));
    assert_eq!(
        run(&["run", path(&tmp.path().join("absent.json"))]).status.code(),
        Some(2)
    );
}

#[test]
fn written_witness_verifies_and_tampering_is_caught() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(
        run(&["run", path(&shipped("caravan.json")), "--out", path(&out)])
            .status
            .code(),
        Some(0)
    );
    let (w, t) = (out.join("witness.json"), out.join("traces.json"));
    let o = run(&["verify", path(&w), path(&t)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let mut witness: Value = serde_json::from_str(&fs::read_to_string(&w).unwrap()).unwrap();
    witness["roles"][10][1] = serde_json::json!([2]);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, witness.to_string()).unwrap();
    let o = run(&["verify", path(&bad), path(&t)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 10"));
}

#[test]
fn every_single_run_scenario_round_trips_through_verify() {
    let tmp = tempfile::tempdir().unwrap();
    for name in [
        "identity_disks",
        "identity_thirds",
        "compose",
        "coarsen_round",
        "coarsen_constant",
        "squeeze",
    ] {
        let out = tmp.path().join(name);
        let o = run(&["run", path(&shipped(&format!("{name}.json"))), "--out", path(&out)]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let o = run(&[
            "verify",
            path(&out.join("witness.json")),
            path(&out.join("traces.json")),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn squeeze_plateau_csv_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(
        run(&["run", path(&shipped("squeeze.json")), "--out", path(&out)])
            .status
            .code(),
        Some(0)
    );
    let text = fs::read_to_string(out.join("plateaus.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("h,secondary_step,plateau_len,lower_bound_floor_3h_2,state_num,state_den")
    );
    assert_eq!(lines.next(), Some("1,4,4,1,85,64"));
    assert_eq!(text.lines().count(), 13);
}

fn small_disks(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "disks.json",
        r#"{"scenario": "disks", "seed": 2, "horizon": 25, "output_dir": "x",
            "parameters": {"trials": 2, "robot_counts": [10, 12]}}"#,
    )
}

#[test]
fn disks_sweep_writes_one_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["sweep", path(&small_disks(tmp.path())), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csvs: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert_eq!(csvs.len(), 1);
    let text = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert!(
        text.starts_with("trial_id,strategy,n_primary,secondary_steps,primary_steps,slowdown_max,slowdown_mean,seed\n")
    );
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 2);
    assert_eq!(report(&out)["heuristic_slowdown"]["finite"], true);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn artifacts_do_not_depend_on_jobs_or_repetition() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_disks(tmp.path());
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, jobs) in dirs.iter().zip(["1", "4", "4"]) {
        assert_eq!(
            run(&["run", path(&cfg), "--out", path(dir), "--jobs", jobs])
                .status
                .code(),
            Some(0)
        );
    }
    let a = read_all(&dirs[0]);
    assert_eq!(a, read_all(&dirs[1]));
    assert_eq!(a, read_all(&dirs[2]));
}

#[test]
fn out_flag_beats_environment_beats_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_out = tmp.path().join("from_config");
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"scenario": "identity", "seed": 1, "horizon": 5, "output_dir": {:?}}}"#,
            path(&cfg_out)
        ),
    );
    assert_eq!(run(&["run", path(&cfg)]).status.code(), Some(0));
    assert!(cfg_out.join("report.json").is_file());

    let env_out = tmp.path().join("from_env");
    let o = bin()
        .args(["run", path(&cfg)])
        .env("ILLUSION_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env_out.join("report.json").is_file());

    let flag_out = tmp.path().join("from_flag");
    let o = bin()
        .args(["run", path(&cfg), "--out", path(&flag_out)])
        .env("ILLUSION_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_out.join("report.json").is_file());
}

#[test]
fn seed_override_lands_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&[
        "run",
        path(&shipped("caravan.json")),
        "--out",
        path(&out),
        "--seed",
        "99",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 99);
    assert_eq!(m["config"]["seed"], 99);
    assert_eq!(m["command"], "run");
    assert!(m.get("time").is_none() && m.get("timestamp").is_none());
}

#[test]
fn caravan_sweep_respects_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&[
        "sweep",
        path(&shipped("caravan.json")),
        "--out",
        path(&out),
        "--jobs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["runs"].as_array().unwrap().len(), 10);
    assert!(r["runs"].as_array().unwrap().iter().all(|t| t["within_bound"] == true));
}
