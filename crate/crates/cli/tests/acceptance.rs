//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported but do not fail the target;
//! set `TRAMLAB_STRICT=1` to make every failure fatal.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use tramlab_cli::bundle::mean_std;
use tramlab_cli::config::ExperimentConfig;
use tramlab_cli::experiments::checks;
use tramlab_cli::experiments::repr::{
    model_spec, task_of, train_selected, Representation, TrainOptions, TEST_STREAM, VALIDATION_STREAM,
};
use tramlab_cli::experiments::synth::{classification_seed, DistillOptions, SeedRun};
use tramlab_cli::{run, CheckOutcome, RunOptions};
use tramlab_core::linear_risk::{
    check_proposition, projector, sherman_morrison_bound, BlockOperators, BoundVariant, CovModel, FixedDesign,
    LinearGenerator, MeanModel, Proposition,
};
use tramlab_core::nn::{loss_and_grad, softmax_rows, Activation, LossKind, Mlp, MlpSpec, Targets};
use tramlab_core::rng::{derive_seed, stream_rng, BoxMuller};
use tramlab_core::synth::{gen_het_mixture, ClassificationOracle, ClassificationTaskSpec, HetMixtureSpec};
use tramlab_core::theory::{lemma1_check, DiscreteJoint};
use tramlab_core::tram::{
    build_tram, evaluate, het_probs, logit_noise, train_l1_only, train_one_step, train_two_step, EvalContext,
    PredictorKind, TrainData, TramModel,
};

const KNOWN_RED: [u8; 3] = [4, 5, 7];

const LINEAR_MAX_SECS: f64 = 60.0;
const REGRESSION_MAX_SECS: f64 = 300.0;
const THEORY_MAX_SECS: f64 = 30.0;
const GRAD_REL_TOL: f64 = 1e-4;
const ALGEBRA_TOL: f64 = 1e-8;
const NORMALIZATION_TOL: f64 = 1e-12;
const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

type Res<T> = Result<T, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    passed: bool,
    detail: String,
    secs: f64,
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Res<ExperimentConfig> {
    ExperimentConfig::from_path(&configs().join(format!("{name}.cfg"))).map_err(|e| e.to_string())
}

fn gaussian(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 77);
    let mut g = BoxMuller::new();
    DMatrix::from_fn(n, k, |_, _| g.sample(&mut rng))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

fn summarize(checks: &[CheckOutcome]) -> (bool, String) {
    let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
    let detail: Vec<String> = checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
    (passed, detail.join("; "))
}

fn linear_consistency() -> Res<(bool, String)> {
    let cfg = load("linear_risk")?;
    let start = Instant::now();
    let bundle = run(&cfg, &RunOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let z: Vec<&CheckOutcome> = bundle.checks.iter().filter(|c| c.name.starts_with("risk_consistency")).collect();
    let passed = z.len() == 4 && z.iter().all(|c| c.passed) && secs < LINEAR_MAX_SECS;
    let detail: Vec<String> = z.iter().map(|c| c.detail.clone()).collect();
    Ok((passed, format!("{} in {secs:.1}s (< {LINEAR_MAX_SECS}s)", detail.join("; "))))
}

fn propositions() -> Res<(bool, String)> {
    let e = |e: tramlab_core::Error| e.to_string();
    let v = |s: &[f64]| DVector::from_column_slice(s);
    // PI mean far outside span(X)
    let design = FixedDesign::gaussian(200, 5, 1, 21).map_err(e)?;
    let gen = LinearGenerator::new(
        v(&[1.0, 0.0, -1.0, 0.5, 0.5]),
        v(&[2.0]),
        1.0,
        MeanModel::Constant(v(&[3.0])),
        CovModel::Isotropic(1.0),
    )
    .map_err(e)?;
    let off_plain = check_proposition(Proposition::Plain, &design, &gen, 2000, 3).map_err(e)?;
    let off_marg = check_proposition(Proposition::Marginalized, &design, &gen, 2000, 3).map_err(e)?;
    // PI mean inside span(X), large PI variance
    let design = FixedDesign::gaussian(100, 4, 1, 23).map_err(e)?;
    let gen = LinearGenerator::new(
        v(&[1.0, 2.0, -1.0, 0.0]),
        v(&[1.0]),
        0.5,
        MeanModel::Linear(DMatrix::from_row_slice(1, 4, &[0.3, 0.0, 0.0, 1.0])),
        CovModel::Isotropic(25.0),
    )
    .map_err(e)?;
    let var_plain = check_proposition(Proposition::Plain, &design, &gen, 1000, 8).map_err(e)?;
    let var_marg = check_proposition(Proposition::Marginalized, &design, &gen, 1000, 8).map_err(e)?;
    let all_consistent = [&off_plain, &off_marg, &var_plain, &var_marg].iter().all(|c| c.consistent);
    let passed = off_plain.pi_wins
        && off_marg.pi_wins
        && var_plain.pi_wins
        && var_marg.lhs < var_plain.lhs / 10.0
        && all_consistent;
    Ok((
        passed,
        format!(
            "off-span: plain {:.4e}/{:.4e} marg {:.4e}/{:.4e}; in-span: plain {:.4e}/{:.4e} marg {:.4e}/{:.4e}; mc consistent={all_consistent}",
            off_plain.lhs, off_plain.rhs, off_marg.lhs, off_marg.rhs, var_plain.lhs, var_plain.rhs, var_marg.lhs, var_marg.rhs
        ),
    ))
}

fn sherman_morrison() -> Res<(bool, String)> {
    let mut violations = 0;
    for seed in 0..100u64 {
        let d = 1 + (seed % 6) as usize;
        let n = d + 3 + (seed % 17) as usize;
        let x = gaussian(n, d, seed);
        let a = gaussian(n, 1, seed + 500).column(0).into_owned();
        let mu = gaussian(n, 1, seed + 900).column(0).into_owned() * 0.3;
        for variant in [BoundVariant::K { mu: &mu }, BoundVariant::L] {
            let b = sherman_morrison_bound(&x, &a, variant).map_err(|e| e.to_string())?;
            if !b.holds() {
                violations += 1;
            }
        }
    }
    Ok((violations == 0, format!("{violations} violations in 200 bounds (100 instances, K and L)")))
}

fn config_checks(name: &str, max_secs: Option<f64>) -> Res<(bool, String)> {
    let cfg = load(name)?;
    let start = Instant::now();
    let bundle = run(&cfg, &RunOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (passed, detail) = summarize(&bundle.checks);
    match max_secs {
        Some(limit) => Ok((passed && secs < limit, format!("{detail}; {secs:.1}s (< {limit}s)"))),
        None => Ok((passed, format!("{detail}; {secs:.1}s"))),
    }
}

struct ClassificationRuns {
    spec: ClassificationTaskSpec,
    opts: TrainOptions,
    runs: Vec<SeedRun>,
}

fn classification_runs() -> Res<ClassificationRuns> {
    let cfg = load("synth_classification")?;
    let spec = ClassificationTaskSpec::from_kv(&cfg.section("task")).map_err(|e| e.to_string())?;
    let opts = TrainOptions::from_kv(&cfg.section("train")).map_err(|e| e.to_string())?;
    let distill = DistillOptions::from_kv(&cfg.section("distill")).map_err(|e| e.to_string())?;
    let kinds = [PredictorKind::NoPI, PredictorKind::Tram, PredictorKind::DistillNoPI, PredictorKind::DistilledTram];
    let runs = SEEDS
        .iter()
        .map(|&s| classification_seed(&spec, &opts, &kinds, distill, s, false).map_err(|e| e.to_string()))
        .collect::<Res<Vec<_>>>()?;
    Ok(ClassificationRuns { spec, opts, runs })
}

fn classification(c: &ClassificationRuns) -> (bool, String) {
    let rows: Vec<_> = c.runs.iter().flat_map(|r| r.rows.clone()).collect();
    summarize(&checks::check_classification(&rows))
}

fn bits(m: &Mlp) -> Vec<u64> {
    m.params().as_slice().iter().map(|v| v.to_bits()).collect()
}

fn shared_bits(m: &TramModel) -> Vec<u64> {
    let mut out = bits(&m.phi);
    if let Some(psi) = &m.psi {
        out.extend(bits(&psi.first));
        if let Some(s) = &psi.second {
            out.extend(bits(s));
        }
    }
    if let Some(u) = &m.head_u {
        out.extend(bits(u));
    }
    out
}

fn one_step_equivalence(c: &ClassificationRuns) -> Res<(bool, String)> {
    let e = |e: tramlab_core::Error| e.to_string();
    let oracle = ClassificationOracle::new(&c.spec).map_err(e)?;
    let reference = |x: f64| oracle.prob_one(x);
    let (mut shared_ok, mut frozen_ok) = (0, 0);
    let (mut one_nll, mut two_nll) = (Vec::new(), Vec::new());
    for (&seed, r) in SEEDS.iter().zip(&c.runs) {
        let fresh =
            || build_tram(model_spec(r.train.x_dim(), r.train.a_dim(), task_of(&r.train), false, seed, &c.opts));
        let data = TrainData::from_dataset(&r.train).map_err(e)?;
        let mut l1 = fresh().map_err(e)?;
        let cfg = c.opts.train_config(&l1, seed, r.pi.lr);
        train_l1_only(&mut l1, &data, &cfg).map_err(e)?;
        let mut two = fresh().map_err(e)?;
        train_two_step(&mut two, &data, &cfg).map_err(e)?;
        if shared_bits(&r.pi.model) == shared_bits(&l1) {
            shared_ok += 1;
        }
        if bits(&two.phi) == bits(&l1.phi) {
            frozen_ok += 1;
        }
        let pool = r.train.a_matrix();
        let ctx = EvalContext { pi_pool: Some(&pool), reference: Some(&reference), seed };
        one_nll.push(evaluate(PredictorKind::Tram, &r.pi.model, &r.test, &ctx).map_err(e)?.metrics.nll);
        two_nll.push(evaluate(PredictorKind::Tram, &two, &r.test, &ctx).map_err(e)?.metrics.nll);
    }
    let (m1, s1) = mean_std(&one_nll);
    let (m2, s2) = mean_std(&two_nll);
    let tol = 2.0 * s1.max(s2);
    let n = SEEDS.len();
    let passed = shared_ok == n && frozen_ok == n && (m1 - m2).abs() <= tol;
    Ok((
        passed,
        format!(
            "shared bit-identical {shared_ok}/{n}; frozen phi {frozen_ok}/{n}; nll one-step {m1:.4}+-{s1:.4} two-step {m2:.4}+-{s2:.4} |diff|={:.4} <= {tol:.4}",
            (m1 - m2).abs()
        ),
    ))
}

fn gradient_checks() -> Res<(bool, f64)> {
    let e = |e: tramlab_core::Error| e.to_string();
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for seed in 0..5u64 {
        let net = Mlp::new(MlpSpec::new(
            3,
            vec![5, 4, 2],
            vec![Activation::Tanh, Activation::Relu, Activation::Identity],
            seed,
        ))
        .map_err(e)?;
        let x = gaussian(6, 3, seed + 10);
        let w = gaussian(6, 2, seed + 20);
        let objective = |m: &Mlp| m.predict(&x).map(|p| p.component_mul(&w).sum());
        let (_, cache) = net.forward(&x).map_err(e)?;
        let (grads, _) = net.backward(&cache, &w).map_err(e)?;
        let base = net.params().as_slice().to_vec();
        let mut probe = net.clone();
        for (i, &g) in grads.as_slice().iter().enumerate() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.params_mut().set_flat(&p).map_err(e)?;
            let up = objective(&probe).map_err(e)?;
            p[i] = base[i] - h;
            probe.params_mut().set_flat(&p).map_err(e)?;
            let down = objective(&probe).map_err(e)?;
            let fd = (up - down) / (2.0 * h);
            if g.abs() + fd.abs() > 1e-6 {
                worst = worst.max(rel_err(g, fd));
            }
        }
        let preds = gaussian(4, 3, seed + 30);
        let y = gaussian(4, 3, seed + 40);
        let labels: Vec<usize> = (0..4).map(|i| (seed as usize + i) % 3).collect();
        let teacher = gaussian(4, 3, seed + 50) * 2.0;
        let gauss = gaussian(4, 2, seed + 60);
        let yg = gaussian(4, 1, seed + 70);
        let cases: Vec<(LossKind, &DMatrix<f64>, Targets<'_>, Option<&DMatrix<f64>>)> = vec![
            (LossKind::Mse, &preds, Targets::Values(&y), None),
            (LossKind::SoftmaxCe, &preds, Targets::Classes(&labels), None),
            (LossKind::distill(2.0, 0.5).map_err(e)?, &preds, Targets::Classes(&labels), Some(&teacher)),
            (LossKind::GaussianNll, &gauss, Targets::Values(&yg), None),
        ];
        for (kind, p, t, aux) in cases {
            let (_, grad) = loss_and_grad(kind, p, &t, aux).map_err(e)?;
            for i in 0..p.len() {
                let mut up = p.clone();
                up[i] += h;
                let mut down = p.clone();
                down[i] -= h;
                let fd = (loss_and_grad(kind, &up, &t, aux).map_err(e)?.0
                    - loss_and_grad(kind, &down, &t, aux).map_err(e)?.0)
                    / (2.0 * h);
                if grad[i].abs() + fd.abs() > 1e-6 {
                    worst = worst.max(rel_err(grad[i], fd));
                }
            }
        }
    }
    Ok((worst < GRAD_REL_TOL, worst))
}

fn algebra_checks() -> Res<(bool, f64)> {
    let e = |e: tramlab_core::Error| e.to_string();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let x = gaussian(30, 4, seed);
        let a = gaussian(30, 2, seed + 50);
        let p = projector(&x).map_err(e)?;
        worst = worst.max((&p * &p - &p).norm()).max((&p - p.transpose()).norm()).max((&p * &x - &x).norm());
        let ops = BlockOperators::new(&x, &a).map_err(e)?;
        worst = worst
            .max((&ops.h_a_perp * &x - DMatrix::<f64>::identity(4, 4)).norm())
            .max((&ops.h_a_perp * &a).norm())
            .max((&ops.g_x_perp * &a - DMatrix::<f64>::identity(2, 2)).norm())
            .max((&ops.g_x_perp * &x).norm());
        let joint = DiscreteJoint::random(3, 3, 4, seed).map_err(e)?;
        let l = lemma1_check(&joint);
        worst = worst.max((l.i - (l.h_y_given_x - l.h_y_given_xa)).abs());
    }
    Ok((worst <= ALGEBRA_TOL, worst))
}

/// Max norm of the φ gradient from the marginal branch over one-step runs.
fn stop_gradient_zeros() -> Res<(bool, usize)> {
    let e = |e: tramlab_core::Error| e.to_string();
    let spec = ClassificationTaskSpec { n: 600, ..Default::default() };
    let data = tramlab_core::synth::gen_classification(&spec, 5).map_err(e)?;
    let opts = TrainOptions { epochs: 2, ..Default::default() };
    let mut model = build_tram(model_spec(data.x_dim(), data.a_dim(), task_of(&data), false, 5, &opts)).map_err(e)?;
    let cfg = opts.train_config(&model, 5, 1e-2);
    let curves = train_one_step(&mut model, &TrainData::from_dataset(&data).map_err(e)?, &cfg).map_err(e)?;
    let steps = curves.l2_phi_grad_norm.len();
    Ok((steps > 0 && curves.l2_phi_grad_norm.iter().all(|&g| g == 0.0), steps))
}

fn normalization(c: &ClassificationRuns) -> Res<(bool, f64)> {
    let e = |e: tramlab_core::Error| e.to_string();
    let mut worst: f64 = 0.0;
    let logits = gaussian(50, 4, 3) * 10.0;
    for row in softmax_rows(&logits).row_iter() {
        worst = worst.max((row.sum() - 1.0).abs());
    }
    let scale = gaussian(50, 4, 4);
    let p = het_probs(&logits, &scale, &logit_noise(50, 4, 20, 9)).map_err(e)?;
    for row in p.row_iter() {
        worst = worst.max((row.sum() - 1.0).abs());
    }
    let r = &c.runs[0];
    let x = r.test.x_matrix();
    for m in [&r.pi.model, &r.no_pi.model] {
        let raw = m.marginal_raw(&x).map_err(e)?;
        for row in softmax_rows(&raw).row_iter() {
            worst = worst.max((row.sum() - 1.0).abs());
        }
    }
    Ok((worst <= NORMALIZATION_TOL, worst))
}

const DETERMINISM_CONFIG: &str = "\
experiment = synth_regression
seeds = 0,1
predictors = no_pi, tram, mean_impute, full_marg_10

task.n = 300
train.epochs = 2
train.lr_grid = 0.01, 0.03
";

fn determinism() -> Res<bool> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let outputs = ["1", "2", "1"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let out = dir.path().join(format!("run{i}"));
            let status = Command::new(env!("CARGO_BIN_EXE_tram-lab"))
                .args(["run", "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .env("TRAMLAB_THREADS", threads)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("run {i} exited with {}", status.status));
            }
            let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
            Ok((read("results.csv")?, read("results.json")?, read("plotdata/regression_curve.tsv")?))
        })
        .collect::<Res<Vec<_>>>()?;
    Ok(outputs.windows(2).all(|w| w[0] == w[1]))
}

fn distill_direction(c: &ClassificationRuns) -> (bool, String) {
    let acc = |name: &str| {
        let v: Vec<f64> = c
            .runs
            .iter()
            .flat_map(|r| r.rows.iter().filter(|row| row.predictor == name).filter_map(|row| row.metric("accuracy")))
            .collect();
        mean_std(&v).0
    };
    let (student, baseline) =
        (acc(&PredictorKind::DistilledTram.to_string()), acc(&PredictorKind::DistillNoPI.to_string()));
    (student >= baseline, format!("distilled_tram acc {student:.4} >= distill_no_pi acc {baseline:.4}"))
}

fn het_direction() -> Res<(bool, String)> {
    let e = |e: tramlab_core::Error| e.to_string();
    let spec = HetMixtureSpec::default();
    let opts = TrainOptions::default();
    let (mut het, mut plain) = (Vec::new(), Vec::new());
    for &seed in &SEEDS {
        let train = gen_het_mixture(&spec, seed).map_err(e)?;
        let validation = gen_het_mixture(&spec, derive_seed(seed, VALIDATION_STREAM)).map_err(e)?;
        let test = gen_het_mixture(&spec, derive_seed(seed, TEST_STREAM)).map_err(e)?;
        let tram = train_selected(Representation::Pi, &train, &validation, &opts, seed).map_err(e)?;
        let het_model =
            tramlab_cli::experiments::repr::train_at(Representation::Pi, &train, &opts, seed, tram.lr, true)
                .map_err(e)?;
        let pool = train.a_matrix();
        let ctx = EvalContext { pi_pool: Some(&pool), reference: None, seed };
        plain.push(evaluate(PredictorKind::Tram, &tram.model, &test, &ctx).map_err(e)?.metrics.nll);
        het.push(evaluate(PredictorKind::HetTram, &het_model, &test, &ctx).map_err(e)?.metrics.nll);
    }
    let (h, p) = (mean_std(&het).0, mean_std(&plain).0);
    Ok((h <= p, format!("het_tram nll {h:.4} <= tram nll {p:.4}")))
}

fn property_suite(c: Option<&ClassificationRuns>) -> Res<(bool, String)> {
    let (grad_ok, grad_worst) = gradient_checks()?;
    let (alg_ok, alg_worst) = algebra_checks()?;
    let (sg_ok, sg_steps) = stop_gradient_zeros()?;
    let det_ok = determinism()?;
    let (het_ok, het_detail) = het_direction()?;
    let mut parts = vec![
        format!("grad rel err {grad_worst:.2e} < {GRAD_REL_TOL:e}"),
        format!("algebra {alg_worst:.2e} <= {ALGEBRA_TOL:e}"),
        format!("stop-gradient zeros over {sg_steps} steps: {sg_ok}"),
        format!("byte-identical reruns: {det_ok}"),
        het_detail,
    ];
    let mut passed = grad_ok && alg_ok && sg_ok && det_ok && het_ok;
    match c {
        Some(c) => {
            let (norm_ok, norm_worst) = normalization(c)?;
            let (distill_ok, distill_detail) = distill_direction(c);
            parts.push(format!("normalization {norm_worst:.2e} <= {NORMALIZATION_TOL:e}"));
            parts.push(distill_detail);
            passed &= norm_ok && distill_ok;
        }
        None => {
            parts.push("classification runs unavailable".into());
            passed = false;
        }
    }
    Ok((passed, parts.join("; ")))
}

fn timed(id: u8, name: &'static str, f: impl FnOnce() -> Res<(bool, String)>) -> Criterion {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|err| (false, format!("error: {err}")));
    Criterion { id, name, passed, detail, secs: start.elapsed().as_secs_f64() }
}

fn main() -> ExitCode {
    let strict = std::env::var("TRAMLAB_STRICT").is_ok_and(|v| v == "1");
    let mut results = vec![
        timed(1, "linear_risk_consistency", linear_consistency),
        timed(2, "propositions", propositions),
        timed(3, "sherman_morrison_bound", sherman_morrison),
        timed(4, "synthetic_regression", || config_checks("synth_regression", Some(REGRESSION_MAX_SECS))),
        timed(5, "eps_sweep", || config_checks("eps_sweep", None)),
        timed(6, "cmi_table", || config_checks("cmi_table", None)),
    ];
    let start = Instant::now();
    let runs = classification_runs();
    let train_secs = start.elapsed().as_secs_f64();
    let mut c7 = match &runs {
        Ok(c) => {
            let (passed, detail) = classification(c);
            Criterion { id: 7, name: "synthetic_classification", passed, detail, secs: 0.0 }
        }
        Err(err) => Criterion {
            id: 7,
            name: "synthetic_classification",
            passed: false,
            detail: format!("error: {err}"),
            secs: 0.0,
        },
    };
    c7.secs = train_secs;
    results.push(c7);
    results.push(match &runs {
        Ok(c) => timed(8, "one_step_equivalence", || one_step_equivalence(c)),
        Err(err) => {
            Criterion { id: 8, name: "one_step_equivalence", passed: false, detail: format!("error: {err}"), secs: 0.0 }
        }
    });
    results.push(timed(9, "theory_suite", || config_checks("theory_checks", Some(THEORY_MAX_SECS))));
    results.push(timed(10, "property_suite", || property_suite(runs.as_ref().ok())));

    let mut fatal = 0;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        let known = !r.passed && KNOWN_RED.contains(&r.id);
        if !r.passed && (strict || !known) {
            fatal += 1;
        }
        let note = if known { " [known red]" } else { "" };
        println!("criterion {:>2} {status} {}{note} ({:.1}s): {}", r.id, r.name, r.secs, r.detail);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if fatal > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
