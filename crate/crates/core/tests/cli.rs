use std::fs;
use std::path::Path;

use ssirvrp::cli::run;

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn simulate(dir: &Path, model: &str, n: usize, p: usize) -> std::path::PathBuf {
    let prefix = dir.join(format!("sim_{model}_{n}_{p}"));
    let code = run([
        "ssirvrp", "simulate", "--model", model, "--n", &n.to_string(), "--p", &p.to_string(),
        "--seed", "4", "--out", &s(&prefix),
    ]);
    assert_eq!(code, 0);
    prefix
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: [&str; 4] = ["--stage1", "60,30", "--stage2", "40,30"];

#[test]
fn simulate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "V", 30, 12);
    let csv = fs::read_to_string(prefix.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 13);
    assert_eq!((header[0], header[11], header[12]), ("x1", "x12", "y"));
    assert_eq!(lines.count(), 30);

    let side = json(&prefix.with_extension("json"));
    assert_eq!(side["support"].as_array().unwrap().len(), 5);
    assert_eq!(side["scenario"]["d"], 2);
    assert_eq!(side["beta"][0]["row"].as_array().unwrap().len(), 2);
}

#[test]
fn fit_writes_coefficients_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "I", 100, 60);
    let out = dir.path().join("fit");
    let mut args = vec![
        "ssirvrp".to_string(), "fit".into(), "--input".into(), s(&prefix.with_extension("csv")),
        "--response".into(), "y".into(), "--l".into(), "6".into(), "--out-dir".into(), s(&out),
    ];
    args.extend(SMALL.iter().map(|a| a.to_string()));
    assert_eq!(run(args), 0);

    let coef = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let rows: Vec<&str> = coef.lines().collect();
    assert_eq!(rows[0], "variable,beta_1");
    assert_eq!(rows.len(), 61);
    let nonzero = rows[1..].iter().filter(|r| !r.ends_with(",0")).count();
    assert_eq!(nonzero, 6);

    let report = json(&out.join("report.json"));
    assert_eq!(report["support"].as_array().unwrap().len(), 6);
    assert_eq!(report["weights"]["stage1"].as_array().unwrap().len(), 60);
    assert_eq!(report["config"]["l_prime"], 50);
    assert_eq!(report["config"]["storage_used"], "dense");
    assert!(report["config"]["stage1_seed"].is_u64());
    assert!(report["criterion"].is_null());
}

#[test]
fn fit_with_bic_reports_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "II", 100, 40);
    let out = dir.path().join("fit");
    let mut args = vec![
        "ssirvrp".to_string(), "fit".into(), "--input".into(), s(&prefix.with_extension("csv")),
        "--response".into(), "y".into(), "--criterion".into(), "bic".into(), "--grid".into(),
        "2..9".into(), "--k".into(), "10".into(), "--l-prime".into(), "20".into(),
        "--out-dir".into(), s(&out),
    ];
    args.extend(SMALL.iter().map(|a| a.to_string()));
    assert_eq!(run(args), 0);
    let report = json(&out.join("report.json"));
    let chosen = report["criterion"]["chosen_l"].as_u64().unwrap() as usize;
    assert!((2..=9).contains(&chosen));
    assert_eq!(report["criterion"]["values"].as_array().unwrap().len(), 8);
    assert_eq!(report["support"].as_array().unwrap().len(), chosen);
}

#[test]
fn tune_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "III", 80, 30);
    let out = dir.path().join("tune.json");
    let mut args = vec![
        "ssirvrp".to_string(), "tune".into(), "--input".into(), s(&prefix.with_extension("csv")),
        "--response".into(), "y".into(), "--criterion".into(), "aic".into(), "--k".into(), "8".into(),
        "--out".into(), s(&out),
    ];
    args.extend(SMALL.iter().map(|a| a.to_string()));
    assert_eq!(run(args), 0);
    let t = json(&out);
    assert_eq!(t["criterion"], "aic");
    // Default grid: d+1 ..= min(l', n/2) with l' = min(50, p) = 30.
    assert_eq!(t["criterion_values"].as_array().unwrap().len(), 29);
}

#[test]
fn thread_count_leaves_outputs_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "IV", 100, 50);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let mut args = vec![
            "ssirvrp".to_string(), "fit".into(), "--input".into(), s(&prefix.with_extension("csv")),
            "--response".into(), "y".into(), "--l".into(), "5".into(), "--threads".into(),
            threads.into(), "--out-dir".into(), s(&out),
        ];
        args.extend(SMALL.iter().map(|a| a.to_string()));
        assert_eq!(run(args), 0);
        let mut report = json(&out.join("report.json"));
        report["seconds"] = serde_json::Value::Null;
        report["config"]["threads"] = serde_json::Value::Null;
        for stage in ["stage1", "stage2"] {
            report["diagnostics"][stage]["seconds"] = serde_json::Value::Null;
        }
        outputs.push((fs::read(out.join("coefficients.csv")).unwrap(), report));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn projected_storage_agrees_with_dense() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "I", 90, 70);
    let mut coefs = Vec::new();
    for storage in ["dense", "projected"] {
        let out = dir.path().join(storage);
        let mut args = vec![
            "ssirvrp".to_string(), "fit".into(), "--input".into(), s(&prefix.with_extension("csv")),
            "--response".into(), "y".into(), "--l".into(), "5".into(), "--storage".into(),
            storage.into(), "--out-dir".into(), s(&out),
        ];
        args.extend(SMALL.iter().map(|a| a.to_string()));
        assert_eq!(run(args), 0);
        let text = fs::read_to_string(out.join("coefficients.csv")).unwrap();
        let values: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        coefs.push(values);
    }
    for (a, b) in coefs[0].iter().zip(&coefs[1]) {
        assert!((a - b).abs() < 1e-8);
        assert_eq!(*a == 0.0, *b == 0.0);
    }
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = simulate(dir.path(), "I", 40, 25);
    let csv = s(&prefix.with_extension("csv"));
    let out = s(&dir.path().join("o"));
    assert_eq!(run(["ssirvrp", "fit", "--input", &csv, "--response", "nope", "--l", "5", "--out-dir", &out]), 2);
    assert_eq!(run(["ssirvrp", "fit", "--input", &csv, "--response", "y", "--out-dir", &out]), 2);
    assert_eq!(run(["ssirvrp", "fit", "--input", "/no/such/file.csv", "--response", "y", "--l", "5"]), 2);
    assert_eq!(run(["ssirvrp", "fit", "--bogus"]), 2);
    assert_eq!(run(["ssirvrp", "simulate", "--model", "VII", "--n", "5", "--p", "5", "--out", &out]), 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b,y\n1,2,3\n4,x,6\n").unwrap();
    assert_eq!(run(["ssirvrp", "fit", "--input", &s(&bad), "--response", "y", "--l", "1", "--out-dir", &out]), 2);
}

#[test]
fn constant_response_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    let mut text = String::from("a,b,c,y\n");
    for i in 0..20 {
        text.push_str(&format!("{},{},{},1.5\n", i, (i * 7) % 5, (i * 3) % 11));
    }
    fs::write(&path, text).unwrap();
    let out = s(&dir.path().join("o"));
    let code = run([
        "ssirvrp", "fit", "--input", &s(&path), "--response", "y", "--l", "2", "--k", "2",
        "--out-dir", &out,
    ]);
    assert_eq!(code, 3);
}

#[test]
fn experiment_tsv_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        r#"
seed = 3
replicates = 3
variants = ["fixed", "aic", "single-stage"]
[params]
stage1 = { groups = 40, candidates = 20 }
stage2 = { groups = 30, candidates = 20 }
k = 8
l_prime = 20
[[scenario]]
model = "I"
cov = "toeplitz"
n = 60
p = 40
"#,
    )
    .unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("res{threads}.tsv"));
        let raw = dir.path().join(format!("raw{threads}.tsv"));
        assert_eq!(
            run(["ssirvrp", "experiment", &s(&spec), "--out", &s(&out), "--raw", &s(&raw), "--threads", threads]),
            0
        );
        // Drop the timing column, which is last.
        let strip = |p: &Path| -> Vec<String> {
            fs::read_to_string(p)
                .unwrap()
                .lines()
                .map(|l| l.rsplit_once('\t').map_or(l, |(keep, _)| keep).to_string())
                .collect()
        };
        tables.push((strip(&out), fs::read_to_string(&raw).unwrap().lines().count()));
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0].0.len(), 4);
    assert_eq!(tables[0].1, 10);
}
