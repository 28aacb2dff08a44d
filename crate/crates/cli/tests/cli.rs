use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn rmpnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmpnav")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const CUBE_SCENE: &str = r#"
min_cell_size = 0.1
bounds = { min = [0, 0, 0], max = [4, 4, 4] }
boxes = [{ min = [1, 1, 1], max = [2, 2, 2] }]
"#;

#[test]
fn build_map_counts_cells_and_round_trips() {
    let tmp = TempDir::new().unwrap();
    let scene = write(tmp.path(), "cube.toml", CUBE_SCENE);
    let dump = tmp.path().join("cube.map");
    let o = rmpnav(&["build-map", "--scene", &scene, "--out", dump.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("occupied cells: 1000\n"));
    let text = fs::read_to_string(&dump).unwrap();
    assert!(text.starts_with("# rmpnav "));
    assert!(text.contains("\nrmpnav-map 1\n"));
    assert!(text.contains("\noccupied 1000\n"));

    // the dump feeds the other commands
    let csv = tmp.path().join("cells.csv");
    let o = rmpnav(&[
        "extract",
        "--map",
        dump.to_str().unwrap(),
        "--pos",
        "3.5,3.5,3.5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report = stdout(&o);
    let rows = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1;
    assert!(report.starts_with(&format!("cells: {rows}\n")));
    let per_height: usize = report
        .lines()
        .filter_map(|l| l.strip_prefix("height ")?.split(": ").nth(1)?.parse::<usize>().ok())
        .sum();
    assert_eq!(per_height, rows);
}

#[test]
fn empty_scene_gives_header_only_csv() {
    let tmp = TempDir::new().unwrap();
    let scene = write(
        tmp.path(),
        "empty.toml",
        "min_cell_size = 0.1\nbounds = { min = [0, 0, 0], max = [3, 3, 3] }\n",
    );
    let csv = tmp.path().join("cells.csv");
    let o = rmpnav(&[
        "extract",
        "--scene",
        &scene,
        "--pos",
        "1,1,1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("cells: 0\n"));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("# rmpnav "));
    assert_eq!(lines[1], "center_x,center_y,center_z,height,side_length");
}

#[test]
fn malformed_inputs_exit_one_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out.map");
    let bad = write(
        tmp.path(),
        "bad.toml",
        "min_cell_size = 0.1\nbounds = { min = [0, 0, 0], max = [4, 4] }\n",
    );
    let unknown = write(tmp.path(), "unknown.toml", "min_cell_size = 0.1\nbogus = 3\n");
    let inverted =
        write(tmp.path(), "inverted.toml", "min_cell_size = 0.1\nbounds = { min = [0, 0, 0], max = [4, 4, 4] }\nboxes = [{ min = [2, 2, 2], max = [1, 3, 3] }]\n");
    for scene in [&bad, &unknown, &inverted] {
        let o = rmpnav(&["build-map", "--scene", scene, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{scene}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
        assert!(!out.exists());
    }
    let o = rmpnav(&[
        "build-map",
        "--scene",
        &tmp.path().join("missing.toml").to_string_lossy(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = rmpnav(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    let scene = write(tmp.path(), "cube.toml", CUBE_SCENE);
    let sim_out = tmp.path().join("sim");
    let o = rmpnav(&[
        "simulate",
        "--scene",
        &scene,
        "--start",
        "1.5,1.5,1.5",
        "--goal",
        "3,3,3",
        "--out",
        sim_out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!sim_out.exists());
    let o = rmpnav(&[
        "simulate",
        "--scene",
        &scene,
        "--start",
        "0.5,0.5,0.5",
        "--out",
        sim_out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = rmpnav(&[
        "benchmark",
        "--scene",
        &scene,
        "--variant",
        "fixed:0",
        "--out",
        sim_out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!sim_out.exists());
}

#[test]
fn approx_error_writes_samples_and_summary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("approx");
    let o = rmpnav(&[
        "approx-error",
        "--scenario",
        "all",
        "--distances",
        "1,4",
        "--trials",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<_> = summary.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "scenario,distance,trials,angular_error_mean,angular_error_std,magnitude_ratio_mean,magnitude_ratio_std"
    );
    assert_eq!(rows.len(), 3);
    for row in &rows[1..] {
        let fields: Vec<_> = row.split(',').collect();
        assert_eq!(fields[0], "All");
        assert!(fields[3].parse::<f64>().unwrap().abs() < 1e-6);
    }
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(samples
        .lines()
        .any(|l| l == "scenario,trial,distance,angular_error_deg,magnitude_ratio"));
}
