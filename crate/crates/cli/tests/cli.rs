use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_crowdreview"));
    c.env_remove("CROWDREVIEW_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = run(args, out);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Every file under `dir`, relative path → bytes.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_deterministic() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["simulate", "--scenario", "fig4", "--seed", "7"], &a);
    ok(&["simulate", "--scenario", "fig4", "--seed", "7", "--jobs", "1"], &b);
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn simulate_manifest_reruns_exactly() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["simulate", "--scenario", "fig7", "--seed", "3", "--replicates", "2", "--no-events"], &a);
    let m = a.join("manifest.json");
    ok(&["simulate", "--manifest", m.to_str().unwrap()], &b);
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn missing_config_leaves_nothing() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("out");
    let o = run(&["simulate", "--config", "/definitely/not/here.toml"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not/here.toml"));
    assert!(!out.exists());
}

#[test]
fn invalid_config_is_a_data_error() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("bad.toml");
    fs::write(&cfg, "years = 0\n").unwrap();
    let out = t.path().join("out");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn config_overrides_apply() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("small.toml");
    fs::write(
        &cfg,
        "years = 2\ninitial_users = 80\njoins_per_year = 10\n[world]\nbot_fraction = 0.25\n",
    )
    .unwrap();
    let out = t.path().join("out");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--no-events"], &out);
    let rows = csv_rows(&out.join("years.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][2], "80");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["args"]["config"]["world"]["bot_fraction"], 0.25);
    assert_eq!(manifest["args"]["config"]["years"], 2);
}

#[test]
fn unknown_figure_lists_ids() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("out");
    let o = run(&["reproduce", "fig99"], &out);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for id in ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "suppfig4"] {
        assert!(err.contains(id), "{err}");
    }
    assert!(!out.exists());
}

#[test]
fn bad_flags_are_usage_errors() {
    let o = bin().args(["simulate", "--replicates", "many"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().args(["--help"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn warm_start_shares_the_pool() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("base"), t.path().join("warm"));
    ok(&["simulate", "--scenario", "fig6", "--no-events"], &a);
    ok(&["simulate", "--scenario", "fig6", "--warm-start", "--no-events"], &b);
    let hash = |d: &Path| {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(d.join("report.json")).unwrap()).unwrap();
        v["replicates"][0]["pool_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&a), hash(&b));
    assert_ne!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

fn fixture(dir: &Path, with_confidence: bool) -> std::path::PathBuf {
    let mut s = String::from(if with_confidence {
        "reviewer,paper,score,confidence\n"
    } else {
        "reviewer,paper,score\n"
    });
    for p in 0..12 {
        for r in 0..4 {
            let reviewer = (p + r) % 9;
            let score = ((p * 7 + r * 3) % 10) + 1;
            s.push_str(&format!("u{reviewer},p{p},{score}"));
            if with_confidence {
                s.push_str(&format!(",{}", 1 + (reviewer % 5)));
            }
            s.push('\n');
        }
    }
    let path = dir.join(if with_confidence { "conf.csv" } else { "plain.csv" });
    fs::write(&path, s).unwrap();
    path
}

fn schema(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("schema.toml");
    fs::write(&path, "reviewer = \"reviewer\"\npaper = \"paper\"\nscore_min = 1.0\nscore_max = 10.0\n").unwrap();
    path
}

#[test]
fn analyze_skips_confidence_analyses() {
    let t = TempDir::new().unwrap();
    let reviews = fixture(t.path(), false);
    let sch = schema(t.path());
    let out = t.path().join("out");
    ok(
        &["analyze", "--reviews", reviews.to_str().unwrap(), "--schema", sch.to_str().unwrap()],
        &out,
    );
    let metrics = csv_rows(&out.join("metrics.csv"));
    let pair = metrics
        .iter()
        .find(|r| r[0] == "pairwise_r" && r[1] == "pairwise_r")
        .expect("pairwise row");
    assert!(pair[5].parse::<usize>().unwrap() >= 3);
    let skipped: Vec<String> = csv_rows(&out.join("skipped.csv")).into_iter().skip(1).map(|r| r[0].clone()).collect();
    for name in ["confidence_strata", "confidence_score", "author_vs_reviewer", "evaluate"] {
        assert!(skipped.contains(&name.to_string()), "{skipped:?}");
    }
}

#[test]
fn analyze_uses_confidence_when_present() {
    let t = TempDir::new().unwrap();
    let reviews = fixture(t.path(), true);
    let sch = schema(t.path());
    let out = t.path().join("out");
    ok(
        &[
            "analyze",
            "--reviews",
            reviews.to_str().unwrap(),
            "--schema",
            sch.to_str().unwrap(),
            "--analyses",
            "confidence_strata,confidence_score",
        ],
        &out,
    );
    let metrics = csv_rows(&out.join("metrics.csv"));
    assert!(metrics.iter().any(|r| r[1] == "confidence_score_r"));
    assert!(metrics.iter().any(|r| r[1] == "review_share"));
    assert_eq!(csv_rows(&out.join("skipped.csv")).len(), 1);
}

#[test]
fn analyze_rejects_bad_data() {
    let t = TempDir::new().unwrap();
    let path = t.path().join("dup.csv");
    fs::write(&path, "reviewer_id,paper_id,score\na,p,0.5\na,p,0.6\n").unwrap();
    let out = t.path().join("out");
    let o = run(&["analyze", "--reviews", path.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate"));
    assert!(!out.exists());

    let o = run(&["analyze", "--reviews", path.to_str().unwrap(), "--analyses", "nope"], &out);
    assert_eq!(o.status.code(), Some(1));
}

/// Final-year rows of `simulate` metrics keyed by (method, field).
fn simulate_final(dir: &Path) -> Vec<((String, String), String)> {
    let rows = csv_rows(&dir.join("metrics.csv"));
    let header = rows[0].clone();
    let last_year = rows[1..].iter().map(|r| r[1].parse::<u32>().unwrap()).max().unwrap();
    let mut out = Vec::new();
    for r in rows[1..].iter().filter(|r| r[1] == last_year.to_string()) {
        for field in ["correlation", "correlation_all", "coverage", "mse"] {
            let i = header.iter().position(|h| h == field).unwrap();
            out.push(((r[2].clone(), field.to_string()), r[i].clone()));
        }
    }
    out.sort();
    out
}

#[test]
fn analyze_matches_in_process_evaluation() {
    let t = TempDir::new().unwrap();
    let sim = t.path().join("sim");
    ok(&["simulate", "--scenario", "fig7", "--seed", "11"], &sim);
    let ev = sim.join("events/r0");
    let out = t.path().join("an");
    ok(
        &[
            "analyze",
            "--reviews",
            ev.join("reviews.csv").to_str().unwrap(),
            "--ratings",
            ev.join("ratings.csv").to_str().unwrap(),
            "--truth",
            ev.to_str().unwrap(),
            "--config",
            sim.join("manifest.json").to_str().unwrap(),
            "--analyses",
            "evaluate",
        ],
        &out,
    );
    let mut got: Vec<((String, String), String)> = csv_rows(&out.join("metrics.csv"))
        .into_iter()
        .skip(1)
        .map(|r| ((r[2].clone(), r[1].clone()), r[3].clone()))
        .collect();
    got.sort();
    let want = simulate_final(&sim);
    assert_eq!(want.len(), 24);
    assert_eq!(got, want);
}

#[test]
fn analyze_reads_jsonl() {
    let t = TempDir::new().unwrap();
    let path = t.path().join("r.jsonl");
    let mut s = String::new();
    for p in 0..10 {
        for r in 0..3 {
            s.push_str(&format!(
                "{{\"reviewer_id\": \"u{}\", \"paper_id\": \"p{p}\", \"score\": {}}}\n",
                (p + r) % 7,
                ((p * 3 + r * 5) % 10) as f64 / 10.0
            ));
        }
    }
    fs::write(&path, s).unwrap();
    let out = t.path().join("out");
    ok(&["analyze", "--reviews", path.to_str().unwrap(), "--format", "json"], &out);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert!(v.as_array().unwrap().iter().any(|r| r["metric"] == "pairwise_r"));
}

#[test]
fn reproduce_fig7_has_three_conditions() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("out");
    ok(&["reproduce", "fig7", "--replicates", "2"], &out);
    let rows = csv_rows(&out.join("fig7/fig7.csv"));
    let col = rows[0].iter().position(|h| h == "condition").unwrap();
    let mut conds: Vec<&str> = rows[1..].iter().map(|r| r[col].as_str()).collect();
    conds.sort();
    conds.dedup();
    assert_eq!(conds, ["binary", "binary_5x", "continuous"]);
}

#[test]
fn reproduce_fig2_and_suppfig4_columns() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("out");
    ok(&["reproduce", "fig2", "--replicates", "2"], &out);
    ok(&["reproduce", "suppfig4", "--replicates", "2"], &t.path().join("s"));
    let h = &csv_rows(&out.join("fig2/fig2.csv"))[0];
    for c in ["oracle_bayes_msd", "empirical_bayes_msd", "simple_mean_msd"] {
        assert!(h.contains(&c.to_string()), "{h:?}");
    }
    let h = &csv_rows(&t.path().join("s/suppfig4/suppfig4.csv"))[0];
    assert!(h.contains(&"gated_correlation".to_string()) && h.contains(&"ungated_correlation".to_string()));
}

#[test]
fn calibrate_round_trips() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("out");
    ok(&["calibrate"], &out);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("calibration.json")).unwrap()).unwrap();
    let alpha = v["alpha"].as_f64().unwrap();
    assert!((0.13..=0.23).contains(&alpha), "{alpha}");
    assert!((v["pairwise_r_fresh"].as_f64().unwrap() - 0.161).abs() <= 0.03);
}

#[test]
fn output_dir_from_environment() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("envout");
    let o = bin()
        .args(["reproduce", "fig2", "--replicates", "1"])
        .env("CROWDREVIEW_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("fig2/fig2.csv").exists());
    assert!(out.join("manifest.json").exists());
}
