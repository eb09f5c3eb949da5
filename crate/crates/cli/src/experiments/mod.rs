pub mod checks;
pub mod repr;
pub mod synth;

use rayon::prelude::*;
use tramlab_core::kv::parse_f64_list;
use tramlab_core::linear_risk::{
    check_proposition_with, inner_seed_for, EstimatorKind, FixedDesign, LinearGenerator, Proposition, RiskLab,
    DEFAULT_N_INNER,
};
use tramlab_core::rng::derive_seed;
use tramlab_core::synth::{estimate_cmi, gen_regression, ClassificationTaskSpec, RegressionTaskSpec, DEFAULT_BINS};
use tramlab_core::theory::{run_theory_suite, TheorySuiteConfig};
use tramlab_core::tram::PredictorKind;
use tramlab_core::{Error, Result};

use crate::bundle::{CheckOutcome, Row};
use crate::config::{Experiment, ExperimentConfig};
use crate::plot::Curve;
use repr::TrainOptions;
use synth::DistillOptions;

pub const DEFAULT_EPS: [f64; 5] = [0.1, 0.5, 1.0, 1.5, 2.0];
pub const DEFAULT_WIDTH_FACTORS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
pub const DEFAULT_CMI_N: usize = 100_000;
pub const DEFAULT_RISK_REPS: usize = 10_000;

const DESIGN_STREAM: u64 = 0xde5;

pub const REGRESSION_PREDICTORS: [PredictorKind; 5] = [
    PredictorKind::NoPI,
    PredictorKind::Tram,
    PredictorKind::ZeroImpute,
    PredictorKind::MeanImpute,
    PredictorKind::FullMarg(100),
];

pub const CLASSIFICATION_PREDICTORS: [PredictorKind; 4] =
    [PredictorKind::NoPI, PredictorKind::Tram, PredictorKind::MeanImpute, PredictorKind::FullMarg(100)];

#[derive(Debug, Default)]
pub struct Output {
    pub rows: Vec<Row>,
    pub curve: Option<Curve>,
    pub report: Option<String>,
}

/// Run `job` for every item in parallel and concatenate in input order.
fn ordered<T: Sync, R: Send>(items: &[T], job: impl Fn(&T) -> Result<Vec<R>> + Sync + Send) -> Result<Vec<R>> {
    let parts: Vec<Vec<R>> = items.par_iter().map(job).collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn f64_list_or(text: Option<&str>, default: &[f64]) -> Result<Vec<f64>> {
    match text {
        Some(t) => {
            let v = parse_f64_list(t)?;
            if v.is_empty() {
                return Err(Error::Config("empty value list".into()));
            }
            Ok(v)
        }
        None => Ok(default.to_vec()),
    }
}

fn pairs<A: Copy, B: Copy>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Output> {
    match cfg.experiment {
        Experiment::LinearRisk => linear_risk(cfg),
        Experiment::SynthRegression => synth_regression(cfg),
        Experiment::SynthClassification => synth_classification(cfg),
        Experiment::EpsSweep => eps_sweep(cfg),
        Experiment::CmiTable => cmi_table(cfg),
        Experiment::TheoryChecks => theory_checks(cfg),
        Experiment::AblatePi => ablate_pi(cfg),
        Experiment::AblateCapacity => ablate_capacity(cfg),
    }
}

pub fn run_checks(experiment: Experiment, rows: &[Row]) -> Vec<CheckOutcome> {
    match experiment {
        Experiment::LinearRisk => checks::check_linear(rows),
        Experiment::SynthRegression => checks::check_regression(rows),
        Experiment::SynthClassification => checks::check_classification(rows),
        Experiment::EpsSweep => checks::check_sweep(rows),
        Experiment::CmiTable => checks::check_cmi(rows),
        Experiment::TheoryChecks => checks::check_theory(rows),
        Experiment::AblatePi | Experiment::AblateCapacity => checks::check_finite(rows),
    }
}

/// `gen.*` holds the generator and `gen.n`; `risk.n_reps`, `risk.n_inner`.
fn linear_risk(cfg: &ExperimentConfig) -> Result<Output> {
    let gen_kv = cfg.section("gen");
    let gen = LinearGenerator::from_kv(&gen_kv)?;
    let n: usize = gen_kv.parse_required("n")?;
    let risk = cfg.section("risk");
    let n_reps = risk.parse_or("n_reps", DEFAULT_RISK_REPS)?;
    let n_inner = risk.parse_or("n_inner", DEFAULT_N_INNER)?;
    let propositions = risk.parse_or("propositions", true)?;
    let rows = ordered(&cfg.seeds, |&seed| {
        let design = FixedDesign::gaussian(n, gen.d(), gen.m(), derive_seed(seed, DESIGN_STREAM))?;
        let lab = RiskLab::new(&design, &gen, inner_seed_for(seed), n_inner)?;
        let mut rows = Vec::new();
        for kind in EstimatorKind::ALL {
            let e = lab.estimate(kind, n_reps, seed)?;
            rows.push(
                Row::new(kind.name(), "", seed)
                    .with("closed_form", e.closed_form)
                    .with("mc_mean", e.mc_mean)
                    .with("mc_stderr", e.mc_stderr)
                    .with("z", (e.closed_form - e.mc_mean) / e.mc_stderr),
            );
        }
        if propositions {
            for (name, which) in [("prop_plain", Proposition::Plain), ("prop_marginalized", Proposition::Marginalized)]
            {
                let c = check_proposition_with(which, &lab, n_reps, seed)?;
                rows.push(
                    Row::new(name, "", seed)
                        .with("lhs", c.lhs)
                        .with("rhs", c.rhs)
                        .with("pi_wins", f64::from(u8::from(c.pi_wins)))
                        .with("consistent", f64::from(u8::from(c.consistent))),
                );
            }
        }
        Ok(rows)
    })?;
    Ok(Output { rows, ..Default::default() })
}

fn synth_regression(cfg: &ExperimentConfig) -> Result<Output> {
    let spec = RegressionTaskSpec::from_kv(&cfg.section("task"))?;
    let opts = TrainOptions::from_kv(&cfg.section("train"))?;
    let kinds = cfg.predictors_or(&REGRESSION_PREDICTORS);
    let first = cfg.seeds[0];
    let runs: Vec<(Vec<Row>, Option<Curve>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| synth::regression_seed(&spec, &opts, &kinds, seed, seed == first).map(|r| (r.rows, r.curve)))
        .collect::<Result<_>>()?;
    let mut out = Output::default();
    for (rows, curve) in runs {
        out.rows.extend(rows);
        out.curve = out.curve.or(curve);
    }
    Ok(out)
}

fn synth_classification(cfg: &ExperimentConfig) -> Result<Output> {
    let spec = ClassificationTaskSpec::from_kv(&cfg.section("task"))?;
    let opts = TrainOptions::from_kv(&cfg.section("train"))?;
    let distill = DistillOptions::from_kv(&cfg.section("distill"))?;
    let kinds = cfg.predictors_or(&CLASSIFICATION_PREDICTORS);
    let first = cfg.seeds[0];
    let runs: Vec<(Vec<Row>, Option<Curve>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            synth::classification_seed(&spec, &opts, &kinds, distill, seed, seed == first).map(|r| (r.rows, r.curve))
        })
        .collect::<Result<_>>()?;
    let mut out = Output::default();
    for (rows, curve) in runs {
        out.rows.extend(rows);
        out.curve = out.curve.or(curve);
    }
    Ok(out)
}

/// `sweep.eps` (comma list); the remaining task keys come from `task.*`.
fn eps_sweep(cfg: &ExperimentConfig) -> Result<Output> {
    let base = RegressionTaskSpec::from_kv(&cfg.section("task"))?;
    let opts = TrainOptions::from_kv(&cfg.section("train"))?;
    let eps = f64_list_or(cfg.section("sweep").get("eps"), &DEFAULT_EPS)?;
    let jobs = pairs(&cfg.seeds, &eps);
    let rows = ordered(&jobs, |&(seed, e)| {
        let spec = RegressionTaskSpec { eps_std: e, ..base.clone() };
        spec.validate()?;
        synth::sweep_point(&spec, &opts, &format!("eps={e:?}"), seed)
    })?;
    Ok(Output { rows, ..Default::default() })
}

/// `cmi.eps`, `cmi.n`, `cmi.bins_x`, `cmi.bins_y`; `task.p_noise`.
fn cmi_table(cfg: &ExperimentConfig) -> Result<Output> {
    let base = RegressionTaskSpec::from_kv(&cfg.section("task"))?;
    let c = cfg.section("cmi");
    let eps = f64_list_or(c.get("eps"), &DEFAULT_EPS)?;
    let n = c.parse_or("n", DEFAULT_CMI_N)?;
    let bins_x = c.parse_or("bins_x", DEFAULT_BINS)?;
    let bins_y = c.parse_or("bins_y", DEFAULT_BINS)?;
    let jobs = pairs(&cfg.seeds, &eps);
    let rows = ordered(&jobs, |&(seed, e)| {
        let spec = RegressionTaskSpec { eps_std: e, n, ..base.clone() };
        let est = estimate_cmi(&gen_regression(&spec, seed)?, bins_x, bins_y)?;
        Ok(vec![Row::new("cmi", format!("eps={e:?}"), seed)
            .with("cmi_nats", est.value)
            .with("sparse", f64::from(u8::from(est.sparse)))])
    })?;
    Ok(Output { rows, ..Default::default() })
}

/// `theory.lemma_joints`, `theory.optimality_joints`, `theory.challengers`,
/// `theory.het_specs`. One suite per seed.
fn theory_checks(cfg: &ExperimentConfig) -> Result<Output> {
    let t = cfg.section("theory");
    let d = TheorySuiteConfig::default();
    let base = TheorySuiteConfig {
        lemma_joints: t.parse_or("lemma_joints", d.lemma_joints)?,
        optimality_joints: t.parse_or("optimality_joints", d.optimality_joints)?,
        challengers: t.parse_or("challengers", d.challengers)?,
        het_specs: t.parse_or("het_specs", d.het_specs)?,
        seed: 0,
    };
    let mut rows = Vec::new();
    let mut report = String::new();
    for &seed in &cfg.seeds {
        let r = run_theory_suite(&TheorySuiteConfig { seed, ..base })?;
        report.push_str(&format!("# seed {seed}\n"));
        report.push_str(&r.to_text());
        let mut families: Vec<(String, usize, usize)> = Vec::new();
        for line in &r.lines {
            let family = line.name.split('[').next().unwrap_or(&line.name).to_string();
            match families.iter_mut().find(|f| f.0 == family) {
                Some(f) => {
                    f.1 += 1;
                    f.2 += usize::from(!line.passed);
                }
                None => families.push((family, 1, usize::from(!line.passed))),
            }
        }
        for (family, checks, failures) in families {
            rows.push(Row::new(family, "", seed).with("checks", checks as f64).with("failures", failures as f64));
        }
    }
    Ok(Output { rows, report: Some(report), ..Default::default() })
}

/// `ablate.extra_value` (adds the annotator's value as a second PI column),
/// `ablate.drop` (variants separated by `;`, each `none` or columns joined by `+`).
fn ablate_pi(cfg: &ExperimentConfig) -> Result<Output> {
    let spec = RegressionTaskSpec::from_kv(&cfg.section("task"))?;
    let opts = TrainOptions::from_kv(&cfg.section("train"))?;
    let a = cfg.section("ablate");
    let extra = a.parse_or("extra_value", true)?;
    let default = if extra { "none;0;1;0+1" } else { "none;0" };
    let variants: Vec<String> = a.get("drop").unwrap_or(default).split(';').map(|s| s.trim().to_string()).collect();
    for v in &variants {
        synth::parse_drop_variant(v)?;
    }
    let jobs = pairs(&cfg.seeds, &(0..variants.len()).collect::<Vec<_>>());
    let rows = ordered(&jobs, |&(seed, i)| Ok(vec![synth::ablate_pi_point(&spec, &opts, extra, &variants[i], seed)?]))?;
    Ok(Output { rows, ..Default::default() })
}

/// `ablate.width_factors` (comma list) multiplies every hidden width.
fn ablate_capacity(cfg: &ExperimentConfig) -> Result<Output> {
    let spec = RegressionTaskSpec::from_kv(&cfg.section("task"))?;
    let opts = TrainOptions::from_kv(&cfg.section("train"))?;
    let factors = f64_list_or(cfg.section("ablate").get("width_factors"), &DEFAULT_WIDTH_FACTORS)?;
    let jobs = pairs(&cfg.seeds, &factors);
    let rows = ordered(&jobs, |&(seed, f)| {
        let o = TrainOptions { width_factor: f, ..opts.clone() };
        o.validate()?;
        synth::sweep_point(&spec, &o, &format!("width={f:?}"), seed)
    })?;
    Ok(Output { rows, ..Default::default() })
}
