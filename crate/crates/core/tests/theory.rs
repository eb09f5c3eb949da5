use proptest::prelude::*;
use tramlab_core::theory::*;

/// I(y; a | x) as the p(x,a)-weighted KL from p(y|x,a) to p(y|x).
fn cmi_as_kl(j: &DiscreteJoint) -> f64 {
    let mut total = 0.0;
    for x in 0..j.n_x {
        let Some(marg) = j.marginal(x) else { continue };
        for a in 0..j.n_a {
            let Some(cond) = j.conditional(x, a) else { continue };
            let kl: f64 = cond.iter().zip(&marg).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (p / q).ln()).sum();
            total += j.p_xa(x, a) * kl;
        }
    }
    total
}

#[test]
fn lemma1_on_random_dirichlet_joints() {
    for seed in 0..100 {
        let j = DiscreteJoint::random(3, 3, 4, seed).unwrap();
        let r = lemma1_check(&j);
        assert!(r.holds && r.identity_ok, "seed {seed}: {r:?}");
        assert!((r.i - cmi_as_kl(&j)).abs() < 1e-12);
    }
}

#[test]
fn marginal_beats_every_challenger() {
    for seed in 0..50 {
        let j = DiscreteJoint::random(2, 3, 3, 1000 + seed).unwrap();
        let r = marginal_optimality_check(&j, 100, seed);
        assert!(r.holds, "seed {seed}: {r:?}");
        // excess over the marginal is the conditional mutual information
        assert!((r.kl_marginal - cmi_as_kl(&j)).abs() < 1e-12);
    }
}

#[test]
fn zero_mass_cells_are_skipped() {
    let mut p = vec![0.0; 3 * 2 * 2];
    p[0] = 0.3;
    p[3] = 0.2;
    p[9] = 0.5;
    let j = DiscreteJoint::new(p, 3, 2, 2).unwrap();
    let r = marginal_optimality_check(&j, 20, 3);
    assert!(r.kl_marginal.is_finite() && r.holds);
    assert!(lemma1_check(&j).identity_ok);
}

#[test]
fn spread_makes_the_best_gaussian_heteroscedastic() {
    let spec = GaussianMixtureSpec::new(vec![
        std::sync::Arc::new(|x: f64| x * x),
        std::sync::Arc::new(|_| 0.0),
        std::sync::Arc::new(|x: f64| -x),
    ])
    .unwrap();
    let a = het_moment_match(&spec, 0.1).unwrap();
    let b = het_moment_match(&spec, 1.5).unwrap();
    assert!(b.numeric_sigma2 > a.numeric_sigma2 + 0.5);
    // the printed closed form does not match the numeric optimum
    assert!((b.printed_sigma2 - b.numeric_sigma2).abs() > 1e-3);
}

#[test]
fn default_suite_has_no_failures() {
    let report = run_theory_suite(&TheorySuiteConfig::default()).unwrap();
    assert_eq!(report.lines.len(), 100 + 50 + 100 + 1);
    assert!(report.all_passed(), "{}", report.to_text());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn numeric_variance_matches_moment_matching(means in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let r = het_moment_match(&GaussianMixtureSpec::constant(&means).unwrap(), 0.0).unwrap();
        prop_assert!((r.numeric_sigma2 - r.sigma2_star).abs() < 1e-5);
        // and no nearby variance does better
        for s in [r.numeric_sigma2 * 0.99, r.numeric_sigma2 * 1.01] {
            prop_assert!(expected_kl_to_gaussian(&means, r.numeric_mu, s)
                >= expected_kl_to_gaussian(&means, r.numeric_mu, r.numeric_sigma2));
        }
    }

    #[test]
    fn entropy_identity_on_any_joint(seed in any::<u64>(), nx in 1usize..4, na in 1usize..4, ny in 1usize..4) {
        let j = DiscreteJoint::random(nx, na, ny, seed).unwrap();
        let r = lemma1_check(&j);
        prop_assert!(r.identity_ok && r.holds);
        prop_assert!(r.i >= -1e-12);
    }
}
