//! Pass/fail thresholds applied to the rows of a run.

use crate::bundle::{mean_std, CheckOutcome, Row};

/// Closed form against Monte Carlo, in standard errors.
pub const RISK_Z_MAX: f64 = 3.0;

pub const REGRESSION_PI_MAX: f64 = 0.02;
pub const REGRESSION_NO_PI_MIN: f64 = 0.05;
pub const REGRESSION_RATIO_MAX: f64 = 0.5;

pub const SWEEP_INVERSION_SLACK: f64 = 0.01;
pub const SWEEP_MAX_INVERSIONS: usize = 1;
pub const SWEEP_FINAL_GAP: f64 = 0.02;

pub const CMI_TOLERANCE: f64 = 0.08;
/// (ε, I(y; a | x) in nats) at n = 100k.
pub const CMI_REFERENCE: [(f64, f64); 5] = [(0.1, 0.408), (0.5, 0.150), (1.0, 0.059), (1.5, 0.034), (2.0, 0.024)];

pub const CLASSIFICATION_PI_MIN: f64 = 0.94;
pub const CLASSIFICATION_NO_PI_RANGE: (f64, f64) = (0.87, 0.94);
pub const CLASSIFICATION_WIN_FRACTION: f64 = 0.9;

fn values(rows: &[Row], predictor: &str, param: Option<&str>, metric: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.predictor == predictor && param.is_none_or(|p| r.param == p))
        .filter_map(|r| r.metric(metric))
        .collect()
}

fn mean(rows: &[Row], predictor: &str, param: Option<&str>, metric: &str) -> f64 {
    mean_std(&values(rows, predictor, param, metric)).0
}

/// Distinct params in order of appearance.
fn params(rows: &[Row], predictor: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows.iter().filter(|r| r.predictor == predictor) {
        if !out.contains(&r.param) {
            out.push(r.param.clone());
        }
    }
    out
}

fn param_value(param: &str) -> Option<f64> {
    param.split_once('=').and_then(|(_, v)| v.parse().ok())
}

pub fn check_linear(rows: &[Row]) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.metrics.contains_key("z")) {
        let z = r.metric("z").unwrap_or(f64::NAN);
        out.push(CheckOutcome::new(
            format!("risk_consistency[{} seed={}]", r.predictor, r.seed),
            z.abs() <= RISK_Z_MAX,
            format!(
                "closed={:.6e} mc={:.6e} z={z:.3}",
                r.metric("closed_form").unwrap_or(f64::NAN),
                r.metric("mc_mean").unwrap_or(f64::NAN)
            ),
        ));
    }
    for r in rows.iter().filter(|r| r.metrics.contains_key("consistent")) {
        out.push(CheckOutcome::new(
            format!("proposition_mc_agreement[{} seed={}]", r.predictor, r.seed),
            r.metric("consistent") == Some(1.0),
            format!(
                "no_pi={:.6e} pi={:.6e} pi_wins={}",
                r.metric("lhs").unwrap_or(f64::NAN),
                r.metric("rhs").unwrap_or(f64::NAN),
                r.metric("pi_wins") == Some(1.0)
            ),
        ));
    }
    out
}

pub fn check_regression(rows: &[Row]) -> Vec<CheckOutcome> {
    let pi = mean(rows, "probe_pi", None, "probe_rmse");
    let no_pi = mean(rows, "probe_no_pi", None, "probe_rmse");
    vec![
        CheckOutcome::new("probe_rmse_pi", pi <= REGRESSION_PI_MAX, format!("{pi:.4} <= {REGRESSION_PI_MAX}")),
        CheckOutcome::new(
            "probe_rmse_no_pi",
            no_pi >= REGRESSION_NO_PI_MIN,
            format!("{no_pi:.4} >= {REGRESSION_NO_PI_MIN}"),
        ),
        CheckOutcome::new(
            "probe_rmse_ratio",
            pi <= REGRESSION_RATIO_MAX * no_pi,
            format!("{:.3} <= {REGRESSION_RATIO_MAX}", pi / no_pi),
        ),
    ]
}

/// Mean RMSE (PI, no PI) per ε, sorted by ε.
pub fn sweep_means(rows: &[Row]) -> Vec<(f64, f64, f64)> {
    let mut out: Vec<(f64, f64, f64)> = params(rows, "probe_pi")
        .iter()
        .filter_map(|p| {
            let eps = param_value(p)?;
            Some((eps, mean(rows, "probe_pi", Some(p), "probe_rmse"), mean(rows, "probe_no_pi", Some(p), "probe_rmse")))
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// The distance `|rmse_no_pi - rmse_pi|` must shrink as ε grows, with at most
/// one small inversion, and the two must meet at the largest ε.
pub fn check_sweep(rows: &[Row]) -> Vec<CheckOutcome> {
    let means = sweep_means(rows);
    let Some(&(last_eps, last_pi, last_no_pi)) = means.last() else {
        return vec![CheckOutcome::new("sweep", false, "no sweep rows")];
    };
    let gaps: Vec<f64> = means.iter().map(|m| (m.2 - m.1).abs()).collect();
    let rises: Vec<f64> = gaps.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    let shrinks = rises.len() <= SWEEP_MAX_INVERSIONS && rises.iter().all(|d| *d <= SWEEP_INVERSION_SLACK);
    let gap_text: Vec<String> = gaps.iter().map(|g| format!("{g:.4}")).collect();
    let final_gap = gaps[gaps.len() - 1];
    vec![
        CheckOutcome::new(
            "sweep_gap_shrinks",
            shrinks,
            format!("gaps=[{}] inversions={}", gap_text.join(" "), rises.len()),
        ),
        CheckOutcome::new(
            "sweep_final_gap",
            final_gap < SWEEP_FINAL_GAP,
            format!("eps={last_eps} pi={last_pi:.4} no_pi={last_no_pi:.4} |diff|={final_gap:.4} < {SWEEP_FINAL_GAP}"),
        ),
    ]
}

pub fn check_cmi(rows: &[Row]) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for p in params(rows, "cmi") {
        let Some(eps) = param_value(&p) else { continue };
        let value = mean(rows, "cmi", Some(&p), "cmi_nats");
        match CMI_REFERENCE.iter().find(|(e, _)| (e - eps).abs() < 1e-12) {
            Some(&(_, reference)) => out.push(CheckOutcome::new(
                format!("cmi[eps={eps}]"),
                (value - reference).abs() <= CMI_TOLERANCE,
                format!("{value:.4} vs {reference} +- {CMI_TOLERANCE}"),
            )),
            None => out.push(CheckOutcome::new(format!("cmi[eps={eps}]"), value.is_finite(), format!("{value:.4}"))),
        }
    }
    out
}

pub fn check_classification(rows: &[Row]) -> Vec<CheckOutcome> {
    let pi = values(rows, "probe_pi", None, "oracle_match");
    let no_pi = values(rows, "probe_no_pi", None, "oracle_match");
    let (pi_mean, no_pi_mean) = (mean_std(&pi).0, mean_std(&no_pi).0);
    let wins = pi.iter().zip(&no_pi).filter(|(a, b)| a > b).count();
    let needed = (CLASSIFICATION_WIN_FRACTION * pi.len() as f64 - 1e-9).ceil() as usize;
    let (lo, hi) = CLASSIFICATION_NO_PI_RANGE;
    vec![
        CheckOutcome::new(
            "oracle_match_pi",
            pi_mean >= CLASSIFICATION_PI_MIN,
            format!("{pi_mean:.4} >= {CLASSIFICATION_PI_MIN}"),
        ),
        CheckOutcome::new(
            "oracle_match_no_pi",
            (lo..=hi).contains(&no_pi_mean),
            format!("{no_pi_mean:.4} in [{lo}, {hi}]"),
        ),
        CheckOutcome::new(
            "oracle_match_wins",
            !pi.is_empty() && wins >= needed,
            format!("{wins}/{} >= {needed}", pi.len()),
        ),
    ]
}

pub fn check_theory(rows: &[Row]) -> Vec<CheckOutcome> {
    let checks: f64 = rows.iter().filter_map(|r| r.metric("checks")).sum();
    let failures: f64 = rows.iter().filter_map(|r| r.metric("failures")).sum();
    vec![CheckOutcome::new(
        "theory_suite",
        failures == 0.0 && checks > 0.0,
        format!("{failures} failures in {checks} checks"),
    )]
}

pub fn check_finite(rows: &[Row]) -> Vec<CheckOutcome> {
    let bad: Vec<String> = rows
        .iter()
        .flat_map(|r| {
            r.metrics.iter().filter(|(_, v)| !v.is_finite()).map(move |(k, _)| format!("{}:{}", r.predictor, k))
        })
        .collect();
    vec![CheckOutcome::new("finite_metrics", bad.is_empty() && !rows.is_empty(), format!("{} non-finite", bad.len()))]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep_rows(pairs: &[(f64, f64, f64)]) -> Vec<Row> {
        pairs
            .iter()
            .flat_map(|&(eps, pi, no_pi)| {
                let p = format!("eps={eps:?}");
                [
                    Row::new("probe_pi", p.clone(), 0).with("probe_rmse", pi),
                    Row::new("probe_no_pi", p, 0).with("probe_rmse", no_pi),
                ]
            })
            .collect()
    }

    #[test]
    fn sweep_allows_one_small_inversion() {
        let ok = sweep_rows(&[(0.1, 0.01, 0.09), (0.5, 0.05, 0.10), (1.0, 0.08, 0.135), (2.0, 0.10, 0.11)]);
        assert!(check_sweep(&ok).iter().all(|c| c.passed), "{:?}", check_sweep(&ok));
        let big = sweep_rows(&[(0.1, 0.01, 0.05), (0.5, 0.01, 0.09), (2.0, 0.10, 0.11)]);
        assert!(!check_sweep(&big)[0].passed);
        let apart = sweep_rows(&[(0.1, 0.01, 0.09), (2.0, 0.05, 0.08)]);
        assert!(!check_sweep(&apart)[1].passed);
    }

    #[test]
    fn sweep_sorts_by_eps() {
        let rows = sweep_rows(&[(2.0, 0.1, 0.1), (0.1, 0.0, 0.1)]);
        assert_eq!(sweep_means(&rows)[0].0, 0.1);
    }

    #[test]
    fn classification_needs_nine_of_ten_wins() {
        let mut rows = Vec::new();
        for s in 0..10u64 {
            let pi = if s == 0 { 0.90 } else { 0.97 };
            rows.push(Row::new("probe_pi", "", s).with("oracle_match", pi));
            rows.push(Row::new("probe_no_pi", "", s).with("oracle_match", 0.91));
        }
        let c = check_classification(&rows);
        assert!(c.iter().all(|c| c.passed), "{c:?}");
        rows[2] = Row::new("probe_pi", "", 1).with("oracle_match", 0.5);
        assert!(!check_classification(&rows)[2].passed);
    }

    #[test]
    fn cmi_uses_the_reference_only_where_it_exists() {
        let rows = vec![
            Row::new("cmi", "eps=0.1", 0).with("cmi_nats", 0.35),
            Row::new("cmi", "eps=0.7", 0).with("cmi_nats", 0.1),
            Row::new("cmi", "eps=2.0", 0).with("cmi_nats", 0.2),
        ];
        let c = check_cmi(&rows);
        assert_eq!(c.iter().map(|c| c.passed).collect::<Vec<_>>(), vec![true, true, false]);
    }
}
