//! Monte-Carlo experiment runner: simulate scenarios, fit every estimator
//! variant on each replicate, and summarize losses and support recovery.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{derive_seed, stream_rng};
use crate::metrics::{correlation_loss, exact_hit, signal_hit, ORTHONORMAL_TOL};
use crate::moments::{build_moments, KernelEstimator, SlicedMoments};
use crate::projection::{ssir_rp, Basis, RpParams};
use crate::reweight::{reweighting_stages, ProjectionBudget, Rp2Params};
use crate::simulation::{draw_dataset, make_cov, CovSpec, Model, SimulatedDataset};
use crate::tuning::{tune_screened, Criterion};

/// Estimator variants compared per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Two-stage estimator with `l` fixed.
    Fixed,
    /// Two-stage estimator with `l` tuned by BIC.
    Bic,
    /// Two-stage estimator with `l` tuned by AIC.
    Aic,
    /// Single-stage estimator with the same total number of scored subsets.
    SingleStage,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Fixed => "fixed",
            Variant::Bic => "bic",
            Variant::Aic => "aic",
            Variant::SingleStage => "single-stage",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Variant::Fixed),
            "bic" => Ok(Variant::Bic),
            "aic" => Ok(Variant::Aic),
            "single-stage" => Ok(Variant::SingleStage),
            other => Err(Error::InvalidParams(format!("unknown variant '{other}'"))),
        }
    }
}

/// One simulated setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: Model,
    pub cov: CovSpec,
    pub n: usize,
    pub p: usize,
}

impl Scenario {
    pub fn new(model: Model, cov: CovSpec, n: usize, p: usize) -> Self {
        Scenario { model, cov, n, p }
    }

    pub fn id(&self) -> String {
        format!("{}/{}/{}x{}", self.model, self.cov, self.n, self.p)
    }
}

/// Estimator settings shared by all scenarios; `d` comes from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    #[serde(default = "default_stage1")]
    pub stage1: ProjectionBudget,
    #[serde(default = "default_stage2")]
    pub stage2: ProjectionBudget,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Fixed support size; defaults to the true sparsity.
    #[serde(default)]
    pub l: Option<usize>,
    #[serde(default = "default_l_prime")]
    pub l_prime: usize,
    /// Sparsity grid for the tuned variants; defaults to `{d+1, …, min(l′, n/2)}`.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
}

fn default_stage1() -> ProjectionBudget {
    ProjectionBudget::new(900, 300)
}
fn default_stage2() -> ProjectionBudget {
    ProjectionBudget::new(600, 200)
}
fn default_k() -> usize {
    20
}
fn default_l_prime() -> usize {
    50
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            stage1: default_stage1(),
            stage2: default_stage2(),
            k: default_k(),
            l: None,
            l_prime: default_l_prime(),
            grid: None,
        }
    }
}

impl EstimatorSettings {
    pub fn rp2(&self, d: usize, l: usize, seed: u64) -> Rp2Params {
        Rp2Params {
            stage1: self.stage1,
            stage2: self.stage2,
            k: self.k,
            l,
            l_prime: self.l_prime,
            d,
            seed,
            jitter_retry: true,
        }
    }

    /// Single-stage settings scoring as many subsets as both stages combined,
    /// keeping the first stage's candidates per group.
    pub fn single_stage(&self, d: usize, l: usize, seed: u64) -> RpParams {
        let total = self.stage1.total() + self.stage2.total();
        let candidates = self.stage1.candidates;
        RpParams::new(total.div_ceil(candidates), candidates, self.k, l, d, seed)
    }
}

/// A complete experiment description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_slices")]
    pub slices: usize,
    #[serde(default)]
    pub kernel: KernelEstimator,
    /// True sparsity of the simulated coefficients.
    #[serde(default = "default_support_size")]
    pub support_size: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub params: EstimatorSettings,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Optional per-replicate dump.
    #[serde(default)]
    pub raw_output: Option<PathBuf>,
}

fn default_replicates() -> usize {
    100
}
fn default_slices() -> usize {
    10
}
fn default_support_size() -> usize {
    5
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Fixed]
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::InvalidParams(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParams("replicates must be at least 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::InvalidParams("no scenarios given".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidParams("no variants given".into()));
        }
        for s in &self.scenarios {
            let l = self.params.l.unwrap_or(self.support_size);
            self.params.rp2(s.model.d(), l, 0).validate(s.p)?;
            if self.support_size > s.p {
                return Err(Error::InvalidParams(format!(
                    "support size {} exceeds p = {} in {}",
                    self.support_size,
                    s.p,
                    s.id()
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one variant on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub scenario: String,
    pub variant: Variant,
    pub replicate: usize,
    pub loss: Option<f64>,
    pub signal_hit: bool,
    pub exact_hit: bool,
    pub chosen_l: Option<usize>,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Summary of one (scenario, variant) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub model: Model,
    pub cov: CovSpec,
    pub n: usize,
    pub p: usize,
    pub variant: Variant,
    pub replicates: usize,
    pub failures: usize,
    pub mean_loss: f64,
    /// Absent for a single replicate.
    pub std_err: Option<f64>,
    pub signal_rate: f64,
    pub exact_rate: f64,
    pub mean_seconds: f64,
}

/// Seeds used for replicate `rep` of scenario number `index`:
/// `(data stream seed, data stream, estimator seed)`.
pub fn replicate_seeds(master: u64, index: usize, rep: usize) -> (u64, u64, u64) {
    let scenario_seed = derive_seed(master, 0x5ce0_0000 + index as u64);
    (scenario_seed, rep as u64, derive_seed(scenario_seed, rep as u64))
}

/// The dataset of replicate `rep` of scenario number `index`.
pub fn replicate_data(
    master: u64,
    index: usize,
    rep: usize,
    scenario: &Scenario,
    support_size: usize,
) -> Result<SimulatedDataset> {
    let (seed, stream, _) = replicate_seeds(master, index, rep);
    let mut rng = stream_rng(seed, stream);
    draw_dataset(
        &mut rng,
        scenario.n,
        scenario.p,
        support_size,
        scenario.model,
        scenario.cov,
    )
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    scenario: &'a Scenario,
    index: usize,
    sigma: crate::linalg::SymMatrix,
}

fn score(
    ctx: &Context,
    data: &SimulatedDataset,
    moments: &SlicedMoments,
    basis: &Basis,
    support: &[usize],
) -> Result<(f64, bool, bool)> {
    let deviation = basis.sigma_deviation(moments)?;
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    let loss = correlation_loss(basis.matrix.view(), data.beta.view(), &ctx.sigma)?;
    Ok((
        loss,
        signal_hit(support, &data.support),
        exact_hit(support, &data.support),
    ))
}

fn run_replicate(ctx: &Context, rep: usize) -> Vec<ReplicateOutcome> {
    let spec = ctx.spec;
    let id = ctx.scenario.id();
    let d = ctx.scenario.model.d();
    let l = spec.params.l.unwrap_or(spec.support_size);
    let (_, _, fit_seed) = replicate_seeds(spec.seed, ctx.index, rep);
    let outcome = |variant: Variant, res: Result<(f64, bool, bool, Option<usize>)>, seconds: f64| {
        match res {
            Ok((loss, hit, exact, chosen_l)) => ReplicateOutcome {
                scenario: id.clone(),
                variant,
                replicate: rep,
                loss: Some(loss),
                signal_hit: hit,
                exact_hit: exact,
                chosen_l,
                seconds,
                error: None,
            },
            Err(e) => ReplicateOutcome {
                scenario: id.clone(),
                variant,
                replicate: rep,
                loss: None,
                signal_hit: false,
                exact_hit: false,
                chosen_l: None,
                seconds,
                error: Some(e.to_string()),
            },
        }
    };

    let start = Instant::now();
    let prepared = replicate_data(spec.seed, ctx.index, rep, ctx.scenario, spec.support_size)
        .and_then(|data| {
            let m = build_moments(data.x.view(), &data.y, spec.slices, spec.kernel)?;
            Ok((data, m))
        });
    let (data, moments) = match prepared {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return spec
                .variants
                .iter()
                .map(|&v| outcome(v, Err(Error::Degenerate(msg.clone())), 0.0))
                .collect();
        }
    };
    let setup = start.elapsed().as_secs_f64();

    let params = spec.params.rp2(d, l, fit_seed);
    let two_stage = spec.variants.iter().any(|v| *v != Variant::SingleStage);
    let start = Instant::now();
    let screening = if two_stage {
        Some(reweighting_stages(&moments, &params))
    } else {
        None
    };
    let stage_seconds = setup + start.elapsed().as_secs_f64();

    let mut out = Vec::with_capacity(spec.variants.len());
    for &variant in &spec.variants {
        let start = Instant::now();
        let res = match variant {
            Variant::SingleStage => {
                let p1 = spec.params.single_stage(d, l, fit_seed);
                ssir_rp(&moments, &p1)
                    .and_then(|fit| score(ctx, &data, &moments, &fit.basis, &fit.support))
                    .map(|(a, b, c)| (a, b, c, Some(l)))
            }
            _ => match screening.as_ref().expect("two-stage variants present") {
                Err(e) => Err(e.clone()),
                Ok(screening) => match variant {
                    Variant::Fixed => screening
                        .select(&moments, l, d, true)
                        .and_then(|(support, basis)| score(ctx, &data, &moments, &basis, &support))
                        .map(|(a, b, c)| (a, b, c, Some(l))),
                    Variant::Bic | Variant::Aic => {
                        let criterion = if variant == Variant::Bic {
                            Criterion::Bic
                        } else {
                            Criterion::Aic
                        };
                        tune_screened(&moments, screening, &params, criterion, spec.params.grid.as_deref())
                            .and_then(|t| {
                                let (a, b, c) = score(ctx, &data, &moments, &t.basis, &t.support)?;
                                Ok((a, b, c, Some(t.chosen_l)))
                            })
                    }
                    Variant::SingleStage => unreachable!(),
                },
            },
        };
        let mut seconds = start.elapsed().as_secs_f64();
        seconds += if variant == Variant::SingleStage { setup } else { stage_seconds };
        out.push(outcome(variant, res, seconds));
    }
    out
}

/// Runs every replicate of one scenario; `index` selects its seed family.
pub fn run_scenario(spec: &ExperimentSpec, scenario: &Scenario, index: usize) -> Result<Vec<ReplicateOutcome>> {
    let ctx = Context {
        spec,
        scenario,
        index,
        sigma: make_cov(scenario.cov, scenario.p)?,
    };
    let per_rep: Vec<Vec<ReplicateOutcome>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| run_replicate(&ctx, rep))
        .collect();
    let mut out = Vec::with_capacity(spec.replicates * spec.variants.len());
    for &variant in &spec.variants {
        for rep in &per_rep {
            out.extend(rep.iter().filter(|o| o.variant == variant).cloned());
        }
    }
    Ok(out)
}

/// Collapses replicate outcomes of one (scenario, variant) cell.
pub fn summarize(scenario: &Scenario, variant: Variant, outcomes: &[ReplicateOutcome]) -> ResultRow {
    let cell: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.variant == variant).collect();
    let losses: Vec<f64> = cell.iter().filter_map(|o| o.loss).collect();
    let ok = losses.len();
    let mean = if ok > 0 { losses.iter().sum::<f64>() / ok as f64 } else { f64::NAN };
    let std_err = (ok > 1).then(|| {
        let var = losses.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (ok - 1) as f64;
        (var / ok as f64).sqrt()
    });
    let reps = cell.len().max(1) as f64;
    ResultRow {
        scenario: scenario.id(),
        model: scenario.model,
        cov: scenario.cov,
        n: scenario.n,
        p: scenario.p,
        variant,
        replicates: cell.len(),
        failures: cell.len() - ok,
        mean_loss: mean,
        std_err,
        signal_rate: cell.iter().filter(|o| o.signal_hit).count() as f64 / reps,
        exact_rate: cell.iter().filter(|o| o.exact_hit).count() as f64 / reps,
        mean_seconds: cell.iter().map(|o| o.seconds).sum::<f64>() / reps,
    }
}

/// Summary rows and raw outcomes of a whole experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub raw: Vec<ReplicateOutcome>,
}

/// Runs every scenario in order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    for (index, scenario) in spec.scenarios.iter().enumerate() {
        log::info!("scenario {} ({} replicates)", scenario.id(), spec.replicates);
        let outcomes = run_scenario(spec, scenario, index)?;
        for &variant in &spec.variants {
            rows.push(summarize(scenario, variant, &outcomes));
        }
        raw.extend(outcomes);
    }
    Ok(ExperimentOutput { rows, raw })
}

/// Column order of the summary table. Timing is last because it is the only
/// column that varies between otherwise identical runs.
pub const TSV_HEADER: [&str; 13] = [
    "scenario",
    "model",
    "cov",
    "n",
    "p",
    "variant",
    "replicates",
    "failures",
    "mean_loss",
    "std_err",
    "signal_rate",
    "exact_rate",
    "mean_seconds",
];

pub fn write_tsv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let io = |e: csv::Error| Error::InvalidParams(format!("writing results: {e}"));
    w.write_record(TSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.model.to_string(),
            r.cov.to_string(),
            r.n.to_string(),
            r.p.to_string(),
            r.variant.name().to_string(),
            r.replicates.to_string(),
            r.failures.to_string(),
            format!("{:.6}", r.mean_loss),
            r.std_err.map(|s| format!("{s:.6}")).unwrap_or_default(),
            format!("{:.4}", r.signal_rate),
            format!("{:.4}", r.exact_rate),
            format!("{:.3}", r.mean_seconds),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidParams(format!("writing results: {e}")))?;
    Ok(())
}

pub fn write_raw_tsv<W: Write>(raw: &[ReplicateOutcome], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let io = |e: csv::Error| Error::InvalidParams(format!("writing raw results: {e}"));
    w.write_record([
        "scenario", "variant", "replicate", "loss", "signal_hit", "exact_hit", "chosen_l", "error",
        "seconds",
    ])
    .map_err(io)?;
    for o in raw {
        w.write_record([
            o.scenario.clone(),
            o.variant.name().to_string(),
            o.replicate.to_string(),
            o.loss.map(|x| format!("{x:.8}")).unwrap_or_default(),
            o.signal_hit.to_string(),
            o.exact_hit.to_string(),
            o.chosen_l.map(|l| l.to_string()).unwrap_or_default(),
            o.error.clone().unwrap_or_default(),
            format!("{:.3}", o.seconds),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidParams(format!("writing raw results: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
seed = 11
replicates = 2
variants = ["fixed", "bic", "single-stage"]

[params]
stage1 = { groups = 20, candidates = 10 }
stage2 = { groups = 10, candidates = 10 }
k = 6
l_prime = 12

[[scenario]]
model = "I"
cov = "toeplitz"
n = 60
p = 30
"#;

    #[test]
    fn spec_parses_with_defaults() {
        let spec = ExperimentSpec::from_toml(SPEC).unwrap();
        assert_eq!(spec.slices, 10);
        assert_eq!(spec.kernel, KernelEstimator::Means);
        assert_eq!(spec.scenarios[0].cov, CovSpec::TOEPLITZ);
        assert_eq!(spec.params.l, None);
        assert_eq!(spec.support_size, 5);
    }

    #[test]
    fn spec_rejects_bad_input() {
        assert!(ExperimentSpec::from_toml("seed = 1\nscenario = []").is_err());
        let bad = SPEC.replace("replicates = 2", "replicates = 0");
        assert!(ExperimentSpec::from_toml(&bad).is_err());
        let bad = SPEC.replace("model = \"I\"", "model = \"VII\"");
        assert!(ExperimentSpec::from_toml(&bad).is_err());
        let bad = SPEC.replace("l_prime = 12", "l_prime = 4");
        assert!(ExperimentSpec::from_toml(&bad).is_err());
    }

    #[test]
    fn single_stage_budget_matches_two_stage_total() {
        let s = EstimatorSettings::default();
        let p = s.single_stage(1, 5, 0);
        assert_eq!(p.groups * p.candidates, s.stage1.total() + s.stage2.total());
        assert_eq!(p.candidates, 300);
    }

    #[test]
    fn small_experiment_runs_and_summarizes() {
        let spec = ExperimentSpec::from_toml(SPEC).unwrap();
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.rows.len(), 3);
        assert_eq!(out.raw.len(), 6);
        for row in &out.rows {
            assert_eq!(row.replicates, 2);
            assert!(row.mean_loss >= 0.0 && row.mean_loss <= 1.0);
            assert!(row.std_err.is_some());
        }
        let mut buf = Vec::new();
        write_tsv(&out.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scenario\tmodel\tcov"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn one_replicate_has_no_std_err() {
        let spec = ExperimentSpec::from_toml(&SPEC.replace("replicates = 2", "replicates = 1")).unwrap();
        let out = run_experiment(&spec).unwrap();
        assert!(out.rows.iter().all(|r| r.std_err.is_none()));
        let mut buf = Vec::new();
        write_tsv(&out.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let fields: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
        assert_eq!(fields[9], "");
    }
}
