//! A small Monte-Carlo study described in TOML, printed as TSV.

use ssirvrp::experiment::{run_experiment, write_tsv, ExperimentSpec};

const SPEC: &str = r#"
seed = 17
replicates = 4
variants = ["fixed", "bic"]

[params]
stage1 = { groups = 300, candidates = 100 }
stage2 = { groups = 200, candidates = 100 }

[[scenario]]
model = "I"
cov = "identity"
n = 100
p = 200

[[scenario]]
model = "V"
cov = "toeplitz:0.5"
n = 200
p = 200
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec::from_toml(SPEC)?;
    let out = run_experiment(&spec)?;
    write_tsv(&out.rows, std::io::stdout())?;
    Ok(())
}
