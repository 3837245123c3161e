use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn geotv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geotv"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn geotv")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = geotv(args, cwd);
    assert!(
        out.status.success(),
        "geotv {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn put(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Data rows of a TSV output, comments dropped.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn ingest_keeps_only_reciprocated_pairs() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "m.tsv", "1\t2\t5\n2\t1\t3\n1\t3\t4\n");
    let out = ok(&["ingest", "--mentions", "m.tsv", "--out", "net.tsv"], dir.path());
    assert_eq!(rows(&dir.path().join("net.tsv")), vec![vec!["1", "2", "3"]]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 reciprocated edges"));
    assert!(dir.path().join("net.tsv.manifest.json").exists());
}

#[test]
fn ingest_empty_input_and_self_mentions() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "empty.tsv", "");
    let out = ok(&["ingest", "--mentions", "empty.tsv", "--stdout"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with('#')));

    put(dir.path(), "selfie.tsv", "7\t7\t2\n");
    let out = ok(&["ingest", "--mentions", "selfie.tsv", "--stdout"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropped 1 self-mentions"));
}

#[test]
fn ingest_requires_a_destination() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "m.tsv", "1\t2\t1\n");
    let out = geotv(&["ingest", "--mentions", "m.tsv"], dir.path());
    assert!(!out.status.success());
}

const GPS: &str = "1\t48.8566\t2.3522\t1000\n1\t48.8570\t2.3530\t4600\n1\t48.8560\t2.3510\t8200\n";
const GAZ: &str = "Paris\t48.8566\t2.3522\nTokyo\t35.6762\t139.6503\n";
const NOW: i64 = 100 * 86_400;

#[test]
fn seed_from_gps_only() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "gps.tsv", GPS);
    ok(&["seed", "--gps", "gps.tsv", "--out", "seeds.tsv"], dir.path());
    let r = rows(&dir.path().join("seeds.tsv"));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][0], "1");
    assert_eq!(r[0][3], "gps");
}

#[test]
fn seed_gps_wins_and_stale_profiles_drop() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "gps.tsv", GPS);
    put(dir.path(), "gaz.tsv", GAZ);
    let fresh = NOW - 86_400;
    let stale = NOW - 200 * 86_400;
    put(
        dir.path(),
        "profiles.tsv",
        &format!("1\t{fresh}\tTokyo\n2\t{fresh}\tTokyo\n3\t{stale}\tParis\n"),
    );
    let now = NOW.to_string();
    ok(
        &[
            "seed", "--gps", "gps.tsv", "--profiles", "profiles.tsv", "--gazetteer", "gaz.tsv", "--now", &now,
            "--out", "seeds.tsv",
        ],
        dir.path(),
    );
    let r = rows(&dir.path().join("seeds.tsv"));
    let users: Vec<&str> = r.iter().map(|row| row[0].as_str()).collect();
    assert_eq!(users, ["1", "2"]);
    assert_eq!(r[0][3], "gps");
    assert_eq!(r[1][3], "gazetteer");
}

#[test]
fn seed_reports_malformed_line() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "gps.tsv", "1\t48.8\t2.3\t10\n1\tnorth\t2.3\t20\n");
    let out = geotv(&["seed", "--gps", "gps.tsv", "--out", "seeds.tsv"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gps.tsv") && err.contains("line 2"), "{err}");
}

#[test]
fn seed_holdout_partitions() {
    let dir = TempDir::new().unwrap();
    let mut gps = String::new();
    for user in 1..=10 {
        for t in 0..3 {
            gps.push_str(&format!("{user}\t{}\t10.0\t{}\n", user as f64, t * 3600));
        }
    }
    put(dir.path(), "gps.tsv", &gps);
    ok(
        &[
            "seed", "--gps", "gps.tsv", "--out", "train.tsv", "--holdout", "0.3", "--rng-seed", "4", "--test-out",
            "test.tsv",
        ],
        dir.path(),
    );
    let train = rows(&dir.path().join("train.tsv"));
    let test = rows(&dir.path().join("test.tsv"));
    assert_eq!(train.len() + test.len(), 10);
    assert_eq!(test.len(), 3);
    assert!(train.iter().all(|t| test.iter().all(|s| s[0] != t[0])));
}

/// Path 1-2-3-4 with a heavier 1-2 edge and a single seed at user 1.
fn path_fixture(dir: &Path) {
    put(dir, "net.tsv", "1\t2\t3\n2\t3\t1\n3\t4\t1\n");
    put(dir, "seeds.tsv", "1\t40.0\t-3.0\tplanted\t0\n");
}

#[test]
fn infer_spreads_one_hop_per_round() {
    let dir = TempDir::new().unwrap();
    path_fixture(dir.path());
    ok(
        &["infer", "--network", "net.tsv", "--seeds", "seeds.tsv", "--iterations", "2", "--out", "est.tsv"],
        dir.path(),
    );
    let r = rows(&dir.path().join("est.tsv"));
    let users: Vec<&str> = r.iter().map(|row| row[0].as_str()).collect();
    assert_eq!(users, ["1", "2", "3"]);
    assert_eq!((r[1][1].as_str(), r[1][2].as_str()), ("40", "-3"));
    assert_eq!(r[2][5], "2");
    let report = fs::read_to_string(dir.path().join("est.iterations.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
}

#[test]
fn infer_infinite_gamma_matches_a_huge_one() {
    let dir = TempDir::new().unwrap();
    ok(&["synth", "--num-cities", "4", "--users-per-city", "60", "--rng-seed", "3", "--out-dir", "s"], dir.path());
    let base = ["infer", "--network", "s/network.tsv", "--seeds", "s/seeds.tsv", "--stdout"];
    let inf = ok(&[&base[..], &["--gamma", "inf"]].concat(), dir.path()).stdout;
    let huge = ok(&[&base[..], &["--gamma", "1e6"]].concat(), dir.path()).stdout;
    assert_eq!(inf, huge);
}

#[test]
fn infer_output_does_not_depend_on_threads() {
    let dir = TempDir::new().unwrap();
    ok(&["synth", "--num-cities", "5", "--users-per-city", "80", "--rng-seed", "9", "--out-dir", "s"], dir.path());
    let run = |threads: &str| {
        ok(
            &["--threads", threads, "infer", "--network", "s/network.tsv", "--seeds", "s/seeds.tsv", "--stdout"],
            dir.path(),
        )
        .stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = |out: &'static str| {
        ["synth", "--num-cities", "3", "--users-per-city", "40", "--rng-seed", "11", "--out-dir", out]
    };
    ok(&args("a"), dir.path());
    ok(&args("b"), dir.path());
    for name in ["network.tsv", "truth.tsv", "seeds.tsv", "test.tsv", "assignments.tsv", "cities.tsv", "manifest.json"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        if name == "manifest.json" {
            // Output paths differ by directory; everything else must agree.
            let strip = |v: Vec<u8>, d: &str| String::from_utf8(v).unwrap().replace(&format!("{d}/"), "");
            assert_eq!(strip(a, "a"), strip(b, "b"));
        } else {
            assert_eq!(a, b, "{name}");
        }
    }
    assert!(!geotv(&["synth", "--rng-seed", "1", "--out-dir", "c", "--stdout"], dir.path()).status.success());
}

#[test]
fn eval_of_truth_against_itself_is_exact() {
    let dir = TempDir::new().unwrap();
    put(
        dir.path(),
        "est.tsv",
        "5\t10\t20\t0\tinferred\t1\n6\t-30\t150\tNA\tinferred\t2\n",
    );
    put(dir.path(), "truth.tsv", "5\t10\t20\tplanted\t0\n6\t-30\t150\tplanted\t0\n");
    let out = ok(&["eval", "--estimates", "est.tsv", "--truth", "truth.tsv", "--stdout"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..5], ["2", "2", "1", "0", "0"]);
}

#[test]
fn eval_single_gamma_sweep_has_one_row() {
    let dir = TempDir::new().unwrap();
    path_fixture(dir.path());
    put(dir.path(), "truth.tsv", "2\t40.0\t-3.0\tplanted\t0\n");
    ok(
        &["infer", "--network", "net.tsv", "--seeds", "seeds.tsv", "--out", "est.tsv"],
        dir.path(),
    );
    ok(
        &[
            "eval", "--estimates", "est.tsv", "--truth", "truth.tsv", "--sweep", "50", "--network", "net.tsv",
            "--seeds", "seeds.tsv", "--out-dir", "ev",
        ],
        dir.path(),
    );
    let sweep = fs::read_to_string(dir.path().join("ev/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2, "{sweep}");
    for name in ["summary.csv", "iterations.csv", "histogram.csv", "manifest.json"] {
        assert!(dir.path().join("ev").join(name).exists(), "{name}");
    }
}

#[test]
fn benchmark_pipeline_reproduces_pinned_estimates() {
    use sha2::{Digest, Sha256};
    let dir = TempDir::new().unwrap();
    ok(&["synth", "--benchmark", "--out-dir", "b"], dir.path());
    ok(&["infer", "--network", "b/network.tsv", "--seeds", "b/seeds.tsv", "--out", "est.tsv"], dir.path());
    let bytes = fs::read(dir.path().join("est.tsv")).unwrap();
    assert_eq!(
        hex::encode(Sha256::digest(&bytes)),
        "e225ceeab9a9016d89ffb3658cd0dc3fecb70d1ddf5dfc348527596b56ee3d80"
    );
}
