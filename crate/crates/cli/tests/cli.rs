use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn floorfield(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_floorfield"));
    cmd.args(args).env_remove("FLOORFIELD_OUT");
    if let Some(dir) = out_env {
        cmd.env("FLOORFIELD_OUT", dir);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn presets_lists_the_corridors() {
    let o = floorfield(&["presets"], None);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["corridor_A", "corridor_B", "corridor_C"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&floorfield(&[], None)), 1);
    assert_eq!(code(&floorfield(&["run"], None)), 1);
    assert_eq!(code(&floorfield(&["run", "--scenario", "corridor_A", "--seed", "x"], None)), 1);
    assert_eq!(code(&floorfield(&["bogus"], None)), 1);
    assert_eq!(code(&floorfield(&["--help"], None)), 0);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&floorfield(&["run", "--scenario", "no_such_file.toml", "--out", out], None)), 2);
    assert_eq!(code(&floorfield(&["run", "--scenario", "corridor_A", "--density", "9", "--out", out], None)), 2);
    assert_eq!(code(&floorfield(&["analyze", "missing.csv"], None)), 2);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nwidth = 2.4\nheight = 4.0\n[weights]\ngoal = 150\n").unwrap();
    assert_eq!(code(&floorfield(&["run", "--scenario", bad.to_str().unwrap(), "--out", out], None)), 2);

    let log = dir.path().join("empty.csv");
    fs::write(&log, "# rows=5\n# cols=5\nstep,agent_id,group_id,row,col,action\n").unwrap();
    assert_eq!(code(&floorfield(&["analyze", log.to_str().unwrap(), "--metrics", "nonsense"], None)), 2);
}

#[test]
fn run_writes_into_floorfield_out_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let args = ["run", "--scenario", "corridor_B", "--seed", "7", "--steps", "120"];
    assert_eq!(code(&floorfield(&args, Some(&first))), 0);
    let mut with_flag = args.to_vec();
    with_flag.extend(["--out", second.to_str().unwrap()]);
    assert_eq!(code(&floorfield(&with_flag, Some(&first))), 0);
    let a = fs::read(first.join("corridor_B_seed7.csv")).unwrap();
    let b = fs::read(second.join("corridor_B_seed7.csv")).unwrap();
    assert_eq!(a, b);
    assert!(first.join("corridor_B_seed7_summary.txt").exists());
}

#[test]
fn run_then_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = floorfield(
        &["run", "--scenario", "corridor_A", "--seed", "3", "--steps", "400", "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = out.join("corridor_A_seed3.csv");
    let tables = dir.path().join("tables");
    let o = floorfield(
        &[
            "analyze",
            log.to_str().unwrap(),
            "--metrics",
            "diagram,speeds,dispersion,flows,los,compare",
            "--cohort-by",
            "membership",
            "--window",
            "100",
            "--out",
            tables.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for m in ["diagram", "speeds", "dispersion", "flows", "los", "compare"] {
        let t = fs::read_to_string(tables.join(format!("{m}.csv"))).unwrap();
        assert!(t.lines().count() >= 2, "{m}: {t}");
    }
    let speeds = fs::read_to_string(tables.join("speeds.csv")).unwrap();
    assert!(speeds.contains("individual") && speeds.contains("group"), "{speeds}");
}

#[test]
fn empty_log_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("empty.csv");
    fs::write(&log, "# rows=5\n# cols=5\nstep,agent_id,group_id,row,col,action\n").unwrap();
    let o = floorfield(&["analyze", log.to_str().unwrap()], None);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn small_sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = floorfield(
        &[
            "sweep",
            "--scenario",
            "corridor_C",
            "--densities",
            "0.5,1.5",
            "--reps",
            "2",
            "--steps",
            "200",
            "--parallel",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fd = fs::read_to_string(out.join("fundamental_diagram.csv")).unwrap();
    assert_eq!(fd.lines().count(), 3);
    assert!(out.join("dispersion.csv").exists() && out.join("runs.csv").exists());
    assert_eq!(fs::read_dir(out.join("logs")).unwrap().count(), 4);
    assert_eq!(code(&floorfield(&["sweep", "--scenario", "corridor_C", "--densities=-1"], Some(&out))), 2);
}

#[test]
fn every_preset_round_trips_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["corridor_A", "corridor_B", "corridor_C"] {
        let o = floorfield(&["run", "--scenario", preset, "--steps", "150"], Some(dir.path()));
        assert_eq!(code(&o), 0);
        let log = dir.path().join(format!("{preset}_seed1.csv"));
        let all = "diagram,los,speeds,dispersion,arrangements,positions,compare,flows";
        let o = floorfield(&["analyze", log.to_str().unwrap(), "--metrics", all, "--window", "50"], None);
        assert_eq!(code(&o), 0, "{preset}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
