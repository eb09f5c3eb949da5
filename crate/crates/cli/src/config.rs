//! Experiment files: flat `key = value` text with dotted keys.
//!
//! Top-level keys are `experiment`, `seeds`, `predictors` and `out`. Every
//! other key belongs to a section (`task.`, `train.`, `gen.`, `risk.`,
//! `sweep.`, `cmi.`, `theory.`, `ablate.`, `distill.`) read by the experiment.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tramlab_core::kv::KvConfig;
use tramlab_core::tram::PredictorKind;
use tramlab_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    LinearRisk,
    SynthRegression,
    SynthClassification,
    EpsSweep,
    CmiTable,
    TheoryChecks,
    AblatePi,
    AblateCapacity,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::LinearRisk,
        Experiment::SynthRegression,
        Experiment::SynthClassification,
        Experiment::EpsSweep,
        Experiment::CmiTable,
        Experiment::TheoryChecks,
        Experiment::AblatePi,
        Experiment::AblateCapacity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::LinearRisk => "linear_risk",
            Experiment::SynthRegression => "synth_regression",
            Experiment::SynthClassification => "synth_classification",
            Experiment::EpsSweep => "eps_sweep",
            Experiment::CmiTable => "cmi_table",
            Experiment::TheoryChecks => "theory_checks",
            Experiment::AblatePi => "ablate_pi",
            Experiment::AblateCapacity => "ablate_capacity",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let seeds = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|_| Error::Parse(format!("not a seed: `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    Ok(seeds)
}

pub fn parse_predictor_list(text: &str) -> Result<Vec<PredictorKind>> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    /// Empty means the experiment's default set.
    pub predictors: Vec<PredictorKind>,
    pub out: Option<PathBuf>,
    pub params: KvConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let params = KvConfig::parse(text)?;
        let experiment = params.require("experiment")?.parse()?;
        let seeds = parse_seed_list(params.require("seeds")?)?;
        let predictors = params.get("predictors").map(parse_predictor_list).transpose()?.unwrap_or_default();
        let out = params.get("out").map(PathBuf::from);
        Ok(Self { experiment, seeds, predictors, out, params })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set_seeds(&mut self, seeds: Vec<u64>) -> Result<()> {
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let text = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        self.params.set("seeds", text);
        self.seeds = seeds;
        Ok(())
    }

    pub fn section(&self, prefix: &str) -> KvConfig {
        self.params.section(prefix)
    }

    pub fn predictors_or(&self, default: &[PredictorKind]) -> Vec<PredictorKind> {
        if self.predictors.is_empty() {
            default.to_vec()
        } else {
            self.predictors.clone()
        }
    }

    /// The effective configuration, one key per line in sorted order.
    pub fn echo(&self) -> String {
        self.params.to_text()
    }
}
