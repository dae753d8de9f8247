use std::path::Path;
use std::process::Command;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn survcobra(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_survcobra")).args(args).output().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

const SMALL_ROSTER: &str = r#"
[[roster]]
kind = "survival_tree"
max_depth = 4
[[roster]]
kind = "cox_ridge"
lambda = 1.0
[[roster]]
kind = "knn_survival"
"#;

#[test]
fn bench_is_reproducible_and_covers_all_models() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 3\nfolds = 3\n[data.synthetic]\nn = 240\ndim = 5\n[search]\ntrials = 4\ninner_folds = 2\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = survcobra(&["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "1"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["metrics.csv", "concordance.csv", "ibs.csv", "dcalibration.csv", "tuned_params.csv", "run.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs");
    }
    let metrics = read(&a.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 1 + 6 * 3);
    for m in ["survival_tree", "random_survival_forest", "cox_lasso", "cox_ridge", "knn_survival", "proposed"] {
        assert_eq!(metrics.lines().filter(|l| l.split(',').nth(1) == Some(m)).count(), 3, "{m}");
    }
    assert!(metrics.starts_with("dataset,model,fold,concordance,ibs,dcal_pass,dcal_pvalue\n"));
    assert_eq!(read(&a.join("dcalibration.csv")).lines().count(), 7);
    assert_eq!(read(&a.join("tuned_params.csv")).lines().count(), 1 + 2 * 3);
}

#[test]
fn bench_with_fixed_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("folds = 2\n[data.synthetic]\nn = 160\ndim = 4\n[cobra]\nepsilon = 0.02\nalpha = 0.6666666666666666\nl_fraction = 0.5\n{SMALL_ROSTER}");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("o");
    let o = survcobra(&["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("tuned_params.csv").exists());
    assert_eq!(read(&out.join("concordance.csv")).lines().count(), 1 + 4);
}

#[test]
fn missing_dataset_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\npath = \"nope.csv\"\n[search]\ntrials = 1\n");
    let out = tmp.path().join("out");
    let o = survcobra(&["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
    assert!(!out.exists());
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = write_config(tmp.path(), "[search]\ntrials = 0\n");
    let o = survcobra(&["tune", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = survcobra(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = survcobra(&["tune", "--config", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(survcobra(&["--help"]).status.code(), Some(0));
}

#[test]
fn tune_single_trial() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 5\n[data.synthetic]\nn = 200\ndim = 5\n[search]\ntrials = 1\n");
    let out = tmp.path().join("t");
    let o = survcobra(&["tune", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read(&out.join("trace.csv"));
    assert_eq!(trace.lines().count(), 2);
    assert!(trace.starts_with("trial,epsilon,alpha,l_fraction,objective\n"));
}

#[test]
fn tune_reports_params_from_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data.synthetic]\nn = 200\ndim = 5\n[search]\ntrials = 12\ninner_folds = 2\nobjective = \"neg_concordance\"\n");
    let out = tmp.path().join("t");
    let o = survcobra(&["tune", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let best: serde_json::Value = serde_json::from_str(&read(&out.join("best_params.json"))).unwrap();
    assert_eq!(best["objective"], "neg_concordance");
    let trace = read(&out.join("trace.csv"));
    let row = trace.lines().nth(1 + best["trial"].as_u64().unwrap() as usize).unwrap();
    let cells: Vec<f64> = row.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    assert_eq!(cells[0], best["epsilon"].as_f64().unwrap());
    assert_eq!(cells[1], best["alpha"].as_f64().unwrap());
    assert_eq!(cells[2], best["l_fraction"].as_f64().unwrap());
    assert_eq!(cells[3], best["objective_value"].as_f64().unwrap());
    for line in trace.lines().skip(1) {
        let alpha = line.split(',').nth(2).unwrap();
        assert!(["0.2", "0.4", "0.6", "0.8", "1"].contains(&alpha), "{alpha}");
    }
}

#[test]
fn simulate_writes_relevance_table_per_covariate() {
    let tmp = tempfile::tempdir().unwrap();
    for (dim, rows) in [(9, 9), (4, 4)] {
        let body = format!(
            "[data.synthetic]\nn = 300\ndim = {dim}\n[cobra]\nepsilon = 0.03\nalpha = 0.3333333333333333\nl_fraction = 0.5\n[relevance]\nqueries = 20\n{SMALL_ROSTER}"
        );
        let cfg = write_config(tmp.path(), &body);
        let out = tmp.path().join(format!("s{dim}"));
        let o = survcobra(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let rel = read(&out.join("relevance.csv"));
        assert!(rel.starts_with("covariate,aggregate_score,rank\n"));
        assert_eq!(rel.lines().count(), 1 + rows);
        assert_eq!(read(&out.join("relevance_per_query.csv")).lines().count(), 21);
        assert!(read(&out.join("curves.csv")).contains("population,0,1"));
    }
}

#[test]
fn simulate_rejects_data_file_but_relevance_accepts_it() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("time,event,a,b\n");
    for i in 0..120 {
        csv.push_str(&format!("{},{},{},{}\n", 1 + (i * 37) % 50, u8::from(i % 3 != 0), (i % 7) as f64 / 7.0, (i % 5) as f64));
    }
    std::fs::write(tmp.path().join("d.csv"), csv).unwrap();
    let body = format!("[data]\npath = \"d.csv\"\n[cobra]\nepsilon = 0.05\nalpha = 0.3333333333333333\nl_fraction = 0.5\n[relevance]\nqueries = 10\n{SMALL_ROSTER}");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("r");
    let o = survcobra(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = survcobra(&["relevance", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("relevance.csv")).lines().count(), 3);
}
