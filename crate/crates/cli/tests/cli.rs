use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn selfsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn help_and_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(selfsim(d.path(), &["--help"]).status.code(), Some(0));
    let o = selfsim(d.path(), &["covers", "--nope"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(
        selfsim(d.path(), &["--workers", "0", "dim", "--ifs", "x"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn config_errors_name_the_field() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.toml");
    std::fs::write(&bad, "[[map]]\nc = \"4/3\"\nb = \"0\"\n").unwrap();
    let o = selfsim(d.path(), &["dim", "--ifs", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        text(&o.stderr).contains("`map[0].c`"),
        "{}",
        text(&o.stderr)
    );

    let cfg = data("cantor.toml");
    let cfg = cfg.to_str().unwrap();
    let o = selfsim(
        d.path(),
        &["covers", "--ifs", cfg, "--v", "1/1", "--m", "3..4"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("`v`"));
    let o = selfsim(d.path(), &["covers", "--ifs", cfg, "--v", "3/2"]);
    assert!(text(&o.stderr).contains("`m`"));
    let o = selfsim(
        d.path(),
        &["covers", "--ifs", cfg, "--v", "1.5", "--m", "3"],
    );
    assert_eq!(o.status.code(), Some(3));
    let o = selfsim(d.path(), &["mass", "--tree", "missing.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("`tree`"));
}

#[test]
fn far_window_gives_zero_rows() {
    let d = tempfile::tempdir().unwrap();
    let cfg = data("cantor.toml");
    let o = selfsim(
        d.path(),
        &[
            "covers",
            "--ifs",
            cfg.to_str().unwrap(),
            "--v",
            "3/2",
            "--m",
            "2..3",
            "--window",
            "10,11",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        text(&o.stdout),
        "m,count_all,count_hits,count_undecided,log2_radius_hi\n2,0,0,0,-5\n3,0,0,0,-7.5\n"
    );
}

#[test]
fn config_defaults_and_flag_overrides() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    let base = std::fs::read_to_string(data("cantor.toml")).unwrap();
    std::fs::write(&cfg, format!("v = \"3/2\"\nm = \"2..3\"\n{base}")).unwrap();
    let o = selfsim(d.path(), &["covers", "--ifs", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(text(&o.stdout).lines().count(), 3);
    let o = selfsim(
        d.path(),
        &["covers", "--ifs", cfg.to_str().unwrap(), "--m", "1..4"],
    );
    assert_eq!(text(&o.stdout).lines().count(), 5);
}

#[test]
fn overlapping_levels_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let o = selfsim(d.path(), &["disjoint", "--v", "3/2", "--m", "1..2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("pairwise-disjointness"));
    let o = selfsim(
        d.path(),
        &["disjoint", "--v", "2", "--m", "4..6", "--family", "D"],
    );
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn steep_exponent_has_no_children() {
    let d = tempfile::tempdir().unwrap();
    let cfg = data("cantor.toml");
    let o = selfsim(
        d.path(),
        &[
            "cantor",
            "build",
            "--ifs",
            cfg.to_str().unwrap(),
            "--v",
            "10",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(
        text(&o.stderr).contains("zero-children"),
        "{}",
        text(&o.stderr)
    );
}

#[test]
fn tree_round_trip_and_tamper() {
    let d = tempfile::tempdir().unwrap();
    let cfg = data("cantor.toml");
    let o = selfsim(
        d.path(),
        &[
            "cantor",
            "build",
            "--ifs",
            cfg.to_str().unwrap(),
            "--v",
            "5/4",
            "--depth",
            "1",
            "--out",
            "t.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let o = selfsim(
        d.path(),
        &["cantor", "verify", "--tree", "t.json", "--out", "r.json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["pass"], true);

    // Move one child outside its parent: verification names the invariant.
    let mut t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("t.json")).unwrap()).unwrap();
    let child = &mut t["root"]["children"][0];
    let p: i64 = child["p"].as_i64().unwrap();
    child["p"] = (p + 1000).into();
    std::fs::write(
        d.path().join("bad.json"),
        serde_json::to_string(&t).unwrap(),
    )
    .unwrap();
    let o = selfsim(d.path(), &["cantor", "verify", "--tree", "bad.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("nesting"), "{}", text(&o.stderr));

    let o = selfsim(d.path(), &["mass", "--tree", "t.json"]);
    assert_eq!(o.status.code(), Some(0));
    let o = selfsim(d.path(), &["frostman", "--tree", "t.json", "--t", "0.9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("frostman-bound"));
}

#[test]
fn critical_reads_saved_counts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = data("cantor.toml");
    let cfg = cfg.to_str().unwrap();
    let o = selfsim(
        d.path(),
        &[
            "covers", "--ifs", cfg, "--v", "3/2", "--m", "3..9", "--out", "c.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let a = selfsim(
        d.path(),
        &[
            "critical", "--ifs", cfg, "--v", "3/2", "--m", "3..9", "--counts", "c.csv",
        ],
    );
    let b = selfsim(
        d.path(),
        &["critical", "--ifs", cfg, "--v", "3/2", "--m", "3..9"],
    );
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let j: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    for k in [
        "l",
        "verdict",
        "per_level",
        "l_star",
        "formula_value",
        "abs_gap",
    ] {
        assert!(j.get(k).is_some(), "missing {k}");
    }
    std::fs::write(d.path().join("bad.csv"), "m,count\n1,2\n").unwrap();
    let o = selfsim(
        d.path(),
        &[
            "critical", "--ifs", cfg, "--v", "3/2", "--m", "3..9", "--counts", "bad.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn golden_ratio_dimension() {
    let d = tempfile::tempdir().unwrap();
    let o = selfsim(
        d.path(),
        &["dim", "--ifs", data("golden.toml").to_str().unwrap()],
    );
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let s = j["s"].as_f64().unwrap();
    assert!((s - ((1.0 + 5f64.sqrt()) / 2.0).log2()).abs() < 1e-11);
}
