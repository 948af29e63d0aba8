use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collapse-lab"))
        .args(args)
        .current_dir(cwd)
        .env("COLLAPSE_LAB_CACHE", cwd.join("cache"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn build_table(dir: &Path) {
    let o = lab(
        &[
            "ctm",
            "build",
            "--states",
            "2",
            "--symbols",
            "2",
            "--budget",
            "200",
            "--out",
            "t.ctm",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ctm_build_and_bdm_score() {
    let tmp = tempfile::tempdir().unwrap();
    build_table(tmp.path());
    let text = fs::read_to_string(tmp.path().join("t.ctm")).unwrap();
    assert!(text.starts_with("ctm-table v1\n"));
    assert!(text.contains("\n0,3456\n"));

    fs::write(tmp.path().join("objs.txt"), "0101\n\n11111111\n").unwrap();
    let o = lab(
        &["bdm", "score", "--table", "t.ctm", "--k", "4", "--input", "@objs.txt"],
        tmp.path(),
    );
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "object,bdm_bits,miss_flag");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0101,") && lines[1].ends_with(",1"));
    assert!(lines[2].starts_with("11111111,") && lines[2].ends_with(",0"));

    // Strict policy turns the miss into a plain failure.
    let o = lab(
        &[
            "bdm",
            "score",
            "--table",
            "t.ctm",
            "--k",
            "4",
            "--input",
            "0101",
            "--miss-policy",
            "error",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn aid_rank_orders_by_magnitude() {
    let tmp = tempfile::tempdir().unwrap();
    build_table(tmp.path());
    let o = lab(
        &[
            "aid",
            "rank",
            "--table",
            "t.ctm",
            "--k",
            "2",
            "--object",
            "01010101",
            "--perturbations",
            "del:0:2;flip:3",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(rows[0].starts_with("1,flip:3,"));
    assert!(rows[1].starts_with("2,del:0:2,010101,"));
}

#[test]
fn integrity_and_config_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    build_table(tmp.path());
    let path = tmp.path().join("t.ctm");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("0,3456", "0,3457", 1)).unwrap();
    let o = lab(
        &["bdm", "score", "--table", "t.ctm", "--k", "2", "--input", "01"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3));

    fs::write(tmp.path().join("p.json"), r#"{"seedz": 3}"#).unwrap();
    let o = lab(&["drift", "--config", "p.json", "--out", "d"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    let o = lab(&["bdm", "score", "--table", "t.ctm"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("cfg.json"),
        r#"{"experiment":"thm3-drift","master_seed":3,"output_dir":"a","params":{"seeds":20,"steps":50}}"#,
    )
    .unwrap();
    let o = lab(&["run", "--config", "cfg.json"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = lab(&["run", "--config", "cfg.json", "--out", "b"], tmp.path());
    assert!(o.status.success());
    for f in ["variance.csv", "summary.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }

    let o = lab(
        &[
            "report",
            "--manifest",
            "a/manifest.json",
            "--series",
            "variance:alpha=0",
            "--out",
            "v.csv",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    let plot = fs::read_to_string(tmp.path().join("v.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 51);
    assert!(plot
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("variance:alpha=0,aggregate,0,"));

    let o = lab(
        &["report", "--manifest", "a/manifest.json", "--series", "nope"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("variance:alpha=0.1"));
}

#[test]
fn simulate_writes_replicates() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("loop.json"),
        r#"{
            "true_dist": {"labels": ["a", "b", "c"], "probs": [0.5, 0.25, 0.25]},
            "initial_model": {"labels": ["a", "b", "c"], "probs": [0.2, 0.4, 0.4]},
            "schedule": {"kind": "constant", "alpha": 0.2},
            "sample_size": 30,
            "steps": 10,
            "master_seed": 1,
            "capacity": "finite-sample"
        }"#,
    )
    .unwrap();
    let o = lab(
        &["simulate", "--config", "loop.json", "--replicates", "3", "--out", "s"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("s/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 11);
}

#[test]
fn program_pool_and_select() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(
        &[
            "program",
            "pool",
            "--family",
            "prefix",
            "--width",
            "4",
            "--out",
            "pool.json",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    fs::write(tmp.path().join("data.txt"), "0110 1001 0000 1111").unwrap();
    let o = lab(
        &[
            "program",
            "select",
            "--pool",
            "pool.json",
            "--data",
            "data.txt",
            "--lambda",
            "2",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    let sel: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(sel["id"], "prefix:*");

    let o = lab(
        &["program", "pool", "--family", "periodic", "--out", "periodic.json"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("cache").read_dir().unwrap().count() >= 1);
}

#[test]
fn list_names_every_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["list"], tmp.path());
    assert_eq!(stdout(&o).lines().count(), 11);
}
