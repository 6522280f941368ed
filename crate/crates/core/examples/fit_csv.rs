//! The command-line workflow driven in-process: simulate a CSV, fit it with a
//! fixed support size, then let BIC choose.

use ssirvrp::cli;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let prefix = dir.path().join("toy");
    let csv = dir.path().join("toy.csv");
    let out = dir.path().join("fit");
    let s = |p: &std::path::Path| p.to_str().unwrap().to_string();

    let code = cli::run([
        "ssirvrp", "simulate", "--model", "II", "--cov", "toeplitz", "--n", "150", "--p", "120",
        "--seed", "5", "--out", &s(&prefix),
    ]);
    assert_eq!(code, 0);
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("json"))?)?;
    println!("true support: {}", truth["support"]);

    let code = cli::run([
        "ssirvrp", "fit", "--input", &s(&csv), "--response", "y", "--d", "1", "--l", "5",
        "--stage1", "300,100", "--stage2", "200,100", "--out-dir", &s(&out),
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json"))?)?;
    let names: Vec<&str> = report["support"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["variable"].as_str().unwrap())
        .collect();
    println!("fixed l = 5 selects: {names:?}");
    let coef = std::fs::read_to_string(out.join("coefficients.csv"))?;
    for line in coef.lines().filter(|l| l.starts_with("variable") || !l.ends_with(",0")) {
        println!("  {line}");
    }

    let code = cli::run([
        "ssirvrp", "fit", "--input", &s(&csv), "--response", "y", "--criterion", "bic",
        "--grid", "2..12", "--stage1", "300,100", "--stage2", "200,100", "--out-dir", &s(&out),
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json"))?)?;
    println!("BIC chose l = {}", report["criterion"]["chosen_l"]);

    // A missing response column is an input error.
    let code = cli::run(["ssirvrp", "fit", "--input", &s(&csv), "--response", "nope", "--l", "5"]);
    println!("missing column exit code: {code}");
    Ok(())
}
