//! End-to-end runs of the `soap-tails` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use soap_tails::rank::Piece;
use soap_tails::RankFunction;
use tempfile::TempDir;

struct Run {
    code: i32,
    stderr: String,
}

fn soap(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_soap-tails"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Writes `config.toml` and runs `cmd` with output in `out/`.
fn run_config(cmd: &str, config: &str, extra: &[&str]) -> (TempDir, Run) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.toml"), config).unwrap();
    let mut args = vec![cmd, "--config", "config.toml", "--out", "out"];
    args.extend_from_slice(extra);
    let run = soap(dir.path(), &args);
    (dir, run)
}

fn out(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join("out").join(name)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn policy<'a>(v: &'a Value, name: &str) -> &'a Value {
    v["policies"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["policy"] == name)
        .unwrap_or_else(|| panic!("no policy {name}"))
}

#[test]
fn exponential_gittins_rank_is_constant() {
    let (dir, run) = run_config("rank", "[distribution]\nname = \"exp\"\n", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let g = column(&out(&dir, "rank.csv"), "gittins");
    assert_eq!(g.len(), 201);
    assert!(g.iter().all(|r| (r - 1.0).abs() < 1e-5));
    let wa = read_json(&out(&dir, "worst_age.json"));
    assert_eq!(policy(&wa, "gittins")["worst_age"], 0.0);
}

#[test]
fn fb_and_step_rank_columns() {
    let cfg = "[distribution]\nname = \"exp\"\n[policies]\nlist = [\"fb\", \"step:2\"]\n[grid]\nages = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0]\n";
    let (dir, run) = run_config("rank", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let path = out(&dir, "rank.csv");
    let ages = column(&path, "age");
    assert_eq!(column(&path, "fb"), ages);
    let step: Vec<f64> = ages.iter().map(|a| a.min(2.0)).collect();
    assert_eq!(column(&path, "step:2"), step);
}

#[test]
fn light_report_for_mm1() {
    let cfg = "[distribution]\nname = \"exp\"\n[system]\nlambda = 0.5\n";
    let (dir, run) = run_config("analyze-light", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = read_json(&out(&dir, "light_report.json"));
    assert!((v["d_fcfs"]["value"].as_f64().unwrap() - 0.5).abs() < 1e-8);
    let fb = (1.0 - 0.5f64.sqrt()).powi(2);
    assert!((v["d_fb"]["value"].as_f64().unwrap() - fb).abs() < 1e-6);
    assert_eq!(v["gittins"]["verdict"], "LogTailOptimal");
    assert_eq!(policy(&v, "fb")["verdict"], "LogTailPessimal");
}

#[test]
fn hyperexponential_gittins_is_pessimal() {
    let (dir, run) = run_config("analyze-light", "[distribution]\nname = \"hyperexp\"\n", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = read_json(&out(&dir, "light_report.json"));
    assert_eq!(v["gittins"]["verdict"], "LogTailPessimal");
    assert_eq!(v["gittins"]["consistent"], true);
}

#[test]
fn heavy_fit_for_pareto() {
    let (dir, run) = run_config("analyze-heavy", "[distribution]\nname = \"pareto\"\n", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = read_json(&out(&dir, "heavy_fit.json"));
    let g = policy(&v, "gittins");
    assert_eq!(g["sufficient"], true);
    // No interval past x: the fit is (0, 0, 1), whose margin is 0.6 + 1.
    assert_eq!(g["vacuous"], true);
    assert!((g["margin"].as_f64().unwrap() - 1.6).abs() < 1e-12);
    assert_eq!(policy(&v, "fb")["vacuous"], true);
    let (header, rows) = read_csv(&out(&dir, "diagnostics.csv"));
    assert!(header.contains(&"integral_ratio".to_string()));
    assert_eq!(rows.len(), 16);
}

#[test]
fn growing_dips_fail_the_sufficient_condition() {
    let mut pieces = vec![Piece {
        start: 0.0,
        end: 1.0,
        value: 0.0,
        slope: 0.0,
    }];
    for k in 0..20 {
        let s = 2f64.powi(k);
        pieces.push(Piece {
            start: s,
            end: 1.5 * s,
            value: 0.0,
            slope: 0.0,
        });
        pieces.push(Piece {
            start: 1.5 * s,
            end: 2.0 * s,
            value: 4.0 * s,
            slope: 0.0,
        });
    }
    pieces.push(Piece {
        start: 2f64.powi(20),
        end: f64::INFINITY,
        value: 0.0,
        slope: 0.0,
    });
    let ladder = RankFunction::from_pieces(pieces, vec![], "ladder", f64::INFINITY).unwrap();
    let cfg = "[distribution]\nname = \"pareto\"\n[policies]\nlist = [\"file:ladder.txt\"]\n[grid]\nscan_horizon = 1e9\n";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ladder.txt"), ladder.to_text()).unwrap();
    fs::write(dir.path().join("config.toml"), cfg).unwrap();
    let run = soap(dir.path(), &["analyze-heavy", "--config", "config.toml", "--out", "out"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = read_json(&out(&dir, "heavy_fit.json"));
    let p = &v["policies"][0];
    assert!((p["zeta"].as_f64().unwrap() - 1.0).abs() < 1e-6, "{p}");
    assert_eq!(p["sufficient"], false);
}

#[test]
fn mm1_fcfs_fitted_decay_matches_analysis() {
    let cfg = "[distribution]\nname = \"exp\"\n[system]\nlambda = 0.5\n[policies]\nlist = [\"fcfs\"]\n[sim]\nn_jobs = 2000000\nreplications = 4\nseed = 5\n";
    let (dir, run) = run_config("simulate", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let ratio = column(&out(&dir, "compare.csv"), "ratio")[0];
    assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    let (header, _) = read_csv(&out(&dir, "tail_fcfs.csv"));
    assert_eq!(header, ["t", "survival", "ci_lo", "ci_hi"]);
}

#[test]
fn pareto_compare_has_tail_ratio() {
    let cfg = "[distribution]\nname = \"pareto\"\n[sim]\nn_jobs = 20000\nreplications = 2\n";
    let (dir, run) = run_config("simulate", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (header, rows) = read_csv(&out(&dir, "compare.csv"));
    assert!(header.contains(&"tail_ratio".to_string()));
    assert_eq!(rows.len(), 3);
}

#[test]
fn outputs_are_deterministic_and_carry_headers() {
    let cfg = "[distribution]\nname = \"hyperexp\"\n[system]\nrho = 0.7\n[policies]\nlist = [\"fcfs\", \"gittins\", \"approx-gittins:0.1\"]\n[sim]\nn_jobs = 30000\nreplications = 3\nmin_tail_samples = 1000\n";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.toml"), cfg).unwrap();
    let mut snapshots = Vec::new();
    for (out_dir, seed) in [("a", "9"), ("b", "9"), ("c", "10")] {
        for cmd in ["simulate", "rank", "analyze-light", "classify"] {
            let run = soap(dir.path(), &[cmd, "--config", "config.toml", "--out", out_dir, "--seed", seed]);
            assert_eq!(run.code, 0, "{cmd}: {}", run.stderr);
        }
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path().join(out_dir))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let sim = |s: &Vec<(String, Vec<u8>)>| s.iter().find(|f| f.0 == "sim_summary.csv").unwrap().1.clone();
    assert_ne!(sim(&snapshots[0]), sim(&snapshots[2]));

    for (name, bytes) in &snapshots[0] {
        let text = String::from_utf8(bytes.clone()).unwrap();
        if name.ends_with(".csv") {
            assert!(text.starts_with("# soap-tails "), "{name}");
            assert!(text.contains("# kind = \"hyperexponential\""), "{name}");
            assert!(text.contains("# seed = 9"), "{name}");
        } else {
            let v: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["meta"]["spec"]["sim"]["seed"], 9, "{name}");
            assert!(v["meta"]["version"].is_string());
        }
    }
}

#[test]
fn exit_codes() {
    let (_, run) = run_config("rank", "[sim]\nseeds = 1\n", &[]);
    assert_eq!(run.code, 2, "{}", run.stderr);
    assert!(run.stderr.contains("seeds") && run.stderr.contains("line 2"), "{}", run.stderr);

    let cfg = "[distribution]\nkind = \"exponential\"\nrate = 1.0\ncolour = 2\n";
    let (_, run) = run_config("rank", cfg, &[]);
    assert_eq!(run.code, 2, "{}", run.stderr);
    assert!(run.stderr.contains("colour"), "{}", run.stderr);

    let dir = tempfile::tempdir().unwrap();
    assert_eq!(soap(dir.path(), &["rank", "--config", "missing.toml"]).code, 2);

    let (_, run) = run_config("analyze-heavy", "[distribution]\nname = \"exp\"\n", &[]);
    assert_eq!(run.code, 2, "{}", run.stderr);

    let (_, run) = run_config("simulate", "[distribution]\nname = \"exp\"\n[system]\nrho = 1.2\n", &[]);
    assert_eq!(run.code, 4, "{}", run.stderr);

    let cfg = "[distribution]\nname = \"pareto\"\n[policies]\nlist = [\"approx-gittins:0.1\"]\n";
    let (_, run) = run_config("rank", cfg, &[]);
    assert_eq!(run.code, 3, "{}", run.stderr);
}
