//! Batch experiment driver: configs in, CSV/JSON results and plot data out.

pub mod bundle;
pub mod config;
pub mod experiments;
pub mod plot;

use std::time::Instant;

use tramlab_core::{Error, Result};

pub use bundle::{aggregate, write_outputs, CheckOutcome, ResultBundle, Row};
pub use config::{Experiment, ExperimentConfig};

pub const THREADS_ENV: &str = "TRAMLAB_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall time in the provenance (makes outputs run-dependent).
    pub timing: bool,
    /// Worker cap; `None` lets rayon decide.
    pub threads: Option<usize>,
}

/// Parse the worker cap from the environment value, if any.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultBundle> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let out = pool.install(|| experiments::run_experiment(cfg))?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let checks = experiments::run_checks(cfg.experiment, &out.rows);
    Ok(ResultBundle {
        experiment: cfg.experiment.name().to_string(),
        config: cfg.echo(),
        aggregate: aggregate(&out.rows),
        rows: out.rows,
        checks,
        provenance: bundle::Provenance {
            seeds: cfg.seeds.clone(),
            code_version: bundle::CODE_VERSION.to_string(),
            wall_ms: opts.timing.then_some(wall_ms),
        },
        curve: out.curve,
        report: out.report,
    })
}
