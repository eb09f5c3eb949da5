//! Exact checks of the information-theoretic claims on small instances.

mod discrete;
mod het;
mod report;

pub use discrete::{
    dirichlet, expected_kl, lemma1_check, marginal_optimality_check, DiscreteJoint, Lemma1Result, OptimalityResult,
};
pub use het::{
    expected_kl_to_gaussian, golden_section, het_moment_match, ComponentMean, GaussianMixtureSpec, HetMomentResult,
    GOLDEN_BRACKET, GOLDEN_TOL,
};
pub use report::{run_theory_suite, CheckLine, TheoryReport, TheorySuiteConfig};
