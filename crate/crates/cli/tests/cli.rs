use serde_json::Value;
use staircase_core::variational::{minimize_periodic, ConfigStore, SolverOptions};
use staircase_core::GeneratingModel;
use staircase_lab::cache::{CacheKey, DiskCache};
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_staircase-lab"));
    c.env_remove("STAIRCASE_LAB_CACHE");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = match std::fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v
}

const K2: &str = r#"
[model]
family = "frenkel-kontorova"
k = 2.0

[scan]
q_max = 6

[estimators]
q_values = [3]
real_cap = 60

[[flatness]]
p = 0
q = 1
t_grid = [1, 2, 3]

[[flatness]]
p = 2
q = 4
t_grid = [1, 2]

[[probe]]
rho_lo = 0.5
rho_hi = 0.7
"#;

#[test]
fn missing_model_section_exits_2_without_output() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "bad.toml", "[scan]\nq_max = 4\n");
    let out = d.path().join("out");
    let o = run(&["scan", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn unknown_keys_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "bad.toml", &K2.replace("q_max = 6", "q_max = 6\nqmax = 6"));
    let out = d.path().join("out");
    assert_eq!(run(&["scan", &cfg, "--out-dir", out.to_str().unwrap()]).status.code(), Some(2));
    assert!(files(&out).is_empty());
}

#[test]
fn integrable_scan_has_no_locking() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "k0.toml",
        "[model]\nfamily = \"frenkel-kontorova\"\nk = 0.0\n\n[scan]\nq_max = 10\nc_lo = 0.0\nc_hi = 1.0\n\n[estimators]\nq_values = [2]\nreal_cap = 40\n",
    );
    let out = d.path().join("out");
    let o = run(&["scan", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&out.join("locking.csv"));
    assert_eq!(h, ["p", "q", "c_minus", "c_plus", "width"]);
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() < 1e-8));
    let (h, rows) = read_csv(&out.join("staircase.csv"));
    assert_eq!(h, ["c", "d_alpha"]);
    let spacing = 1.0 / (rows.len() - 1) as f64;
    for r in &rows {
        let (c, d): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!((c - d).abs() <= 2.0 * spacing.max(0.1), "{c} {d}");
    }
    let (h, _) = read_csv(&out.join("beta.csv"));
    assert_eq!(h, ["p", "q", "rho", "beta", "c_minus", "c_plus", "bracket_width"]);
}

#[test]
fn scan_writes_layout_and_isolates_failures() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "k2.toml", K2);
    let out = d.path().join("out");
    let o = run(&["scan", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        files(&out),
        [
            "beta.csv",
            "estimators.csv",
            "flatness_0_1.csv",
            "flatness_0_1.json",
            "locking.csv",
            "report.json",
            "staircase.csv"
        ]
    );
    let (h, _) = read_csv(&out.join("flatness_0_1.csv"));
    assert_eq!(h, ["T", "delta", "u", "zeta_upper", "bound_value"]);
    let (h, rows) = read_csv(&out.join("estimators.csv"));
    assert_eq!(h, ["kind", "nu", "theta", "Q", "value"]);
    assert!(rows.iter().any(|r| r[0] == "variation"));
    let fit: Value = serde_json::from_str(&std::fs::read_to_string(out.join("flatness_0_1.json")).unwrap()).unwrap();
    let keys: Vec<&str> = fit.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    for k in ["p", "q", "c_plus", "C_fit", "lambda_fit", "lambda_monodromy", "verdict"] {
        assert!(keys.contains(&k), "{k}");
    }
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report: Value = serde_json::from_str(&text).unwrap();
    for k in ["tool_version", "model", "config_digest", "results"] {
        assert!(report.get(k).is_some(), "{k}");
    }
    let failures = report["results"]["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["stage"], "flatness");
    assert_eq!(failures[0]["q"], 4);
    assert!(report["results"]["table_size"].as_u64().unwrap() > 5);
}

#[test]
fn report_values_survive_a_generic_parser() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "k2.toml", K2);
    let out = d.path().join("out");
    assert!(run(&["scan", &cfg, "--out-dir", out.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    // every float in the report matches its CSV rendering bit for bit
    let (_, rows) = read_csv(&out.join("estimators.csv"));
    let est = v["results"]["estimators"].as_array().unwrap();
    assert_eq!(est.len(), rows.len());
    for (e, r) in est.iter().zip(&rows) {
        assert_eq!(e["value"].as_f64().unwrap().to_bits(), r[4].parse::<f64>().unwrap().to_bits());
    }
    let again = serde_json::to_string(&serde_json::from_str::<Value>(&text).unwrap()).unwrap();
    assert_eq!(serde_json::from_str::<Value>(&again).unwrap(), v);
}

#[test]
fn runs_are_deterministic_and_cache_transparent() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "k2.toml", K2);
    let cache = d.path().join("cache");
    let dirs: Vec<_> = ["a", "b", "c"].iter().map(|n| d.path().join(n)).collect();
    assert!(run(&["scan", &cfg, "--out-dir", dirs[0].to_str().unwrap(), "--workers", "1"]).status.success());
    let cold = bin()
        .args(["scan", &cfg, "--out-dir", dirs[1].to_str().unwrap()])
        .env("STAIRCASE_LAB_CACHE", &cache)
        .output()
        .unwrap();
    assert!(cold.status.success());
    assert!(!files(&cache).is_empty());
    let warm = bin()
        .args(["scan", &cfg, "--out-dir", dirs[2].to_str().unwrap(), "--cache-dir", cache.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(warm.status.success());
    for f in files(&dirs[0]) {
        let a = std::fs::read(dirs[0].join(&f)).unwrap();
        assert_eq!(a, std::fs::read(dirs[1].join(&f)).unwrap(), "{f} differs between runs");
        assert_eq!(a, std::fs::read(dirs[2].join(&f)).unwrap(), "{f} differs between cold and warm cache");
    }
}

#[test]
fn concurrent_writers_leave_one_record() {
    let d = tempfile::tempdir().unwrap();
    let model = GeneratingModel::frenkel_kontorova(1.5);
    let opts = SolverOptions::default();
    let config = minimize_periodic(&model, 3, 7, &opts).unwrap();
    let cache = Arc::new(DiskCache::new(d.path(), opts.clone()));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let cache = cache.clone();
            let mut c = config.clone();
            // workers land on the same minimizer up to round-off
            c.positions[0] += i as f64 * 1e-15;
            std::thread::spawn(move || cache.store(&c))
        })
        .collect();
    for h in handles {
        h.join().unwrap().unwrap();
    }
    let dir = d.path().join(model.hash());
    let entries: Vec<_> = files(&dir);
    assert_eq!(entries, ["3_7.json"]);
    let key = CacheKey { model_hash: model.hash().to_string(), p: 3, q: 7 };
    let rec = cache.get(&key).unwrap().unwrap();
    for (a, b) in rec.payload.config.positions.iter().zip(&config.positions) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn single_rational_commands() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["beta", "-p", "1", "-q", "2", "-k", "0"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["results"]["beta"].as_f64().unwrap() - 0.125).abs() < 1e-10);

    let o = run(&["hyperbolicity", "-p", "0", "-q", "1", "-k", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &v["results"];
    let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
    assert!((r["trace"].as_f64().unwrap() - 2.0 - four_pi2).abs() < 1e-9);
    assert!(r["c0_estimate"].as_f64().unwrap() > 0.0);
    assert!(r["pn_barrier"].as_f64().unwrap() > 0.0);

    let out = d.path().join("pn");
    let o = run(&["pn-barrier", "-p", "0", "-q", "1", "-k", "0.5", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    let barrier: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!((barrier - 1.0).abs() < 1e-9, "{barrier}");
    assert_eq!(files(&out), ["pn_0_1.csv"]);

    let out = d.path().join("fl");
    let o = run(&["flatness", "-p", "0", "-q", "1", "-k", "2", "--t-grid", "1,2,3", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&out), ["flatness_0_1.csv", "flatness_0_1.json"]);

    let model = write(d.path(), "m.toml", "[model]\nfamily = \"fourier-potential\"\nk = 0.2\na = 0.5\n\n[[harmonic]]\norder = 1\ncos_amp = 1.0\n");
    let o = run(&["beta", "-p", "1", "-q", "3", "--model", &model]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    assert_eq!(run(&["beta", "-p", "1", "-q", "2"]).status.code(), Some(2));
    assert_eq!(run(&["beta", "-p", "2", "-q", "4", "-k", "1"]).status.code(), Some(1));
    assert_eq!(run(&["flatness", "-p", "0", "-q", "1", "-k", "1", "--t-grid", "0"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
}
