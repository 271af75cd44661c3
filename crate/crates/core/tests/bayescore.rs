use baymeta_core::bayescore::{anomaly_score, niw_posterior, AnomalyReference, NiwPrior, StudentT};
use proptest::prelude::*;
use statrs::distribution::{Continuous, StudentsT};

fn support_strategy(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), 1..10)
}

fn prior(d: usize, kappa0: f64, scale: f64, extra_dof: f64) -> NiwPrior {
    NiwPrior::isotropic(d, kappa0, scale, d as f64 - 1.0 + extra_dof).unwrap()
}

proptest! {
    #[test]
    fn posterior_scale_is_symmetric_positive_definite(
        support in support_strategy(3),
        kappa0 in 0.01..5.0f64,
        scale in 0.05..5.0f64,
        extra in 0.05..5.0f64,
    ) {
        let post = niw_posterior(&prior(3, kappa0, scale, extra), &support).unwrap();
        let l = &post.lambda_n;
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((l[i * 3 + j] - l[j * 3 + i]).abs() <= 1e-12 * (1.0 + l[i * 3 + j].abs()));
            }
        }
        let t = post.predictive().unwrap();
        prop_assert!(!t.jittered());
        prop_assert_eq!(post.kappa_n, kappa0 + support.len() as f64);
    }

    #[test]
    fn posterior_ignores_support_order(
        support in support_strategy(2),
        rot in 0usize..10,
    ) {
        let p = prior(2, 0.5, 1.0, 1.0);
        let mut shuffled = support.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        let a = niw_posterior(&p, &support).unwrap();
        let b = niw_posterior(&p, &shuffled).unwrap();
        for (x, y) in a.mu_n.iter().zip(&b.mu_n) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        for (x, y) in a.lambda_n.iter().zip(&b.lambda_n) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn univariate_density_matches_reference_library(
        mean in -5.0..5.0f64,
        var in 0.01..10.0f64,
        dof in 0.2..50.0f64,
        x in -20.0..20.0f64,
    ) {
        let t = StudentT::new(vec![mean], &[var], dof).unwrap();
        let reference = StudentsT::new(mean, var.sqrt(), dof).unwrap().ln_pdf(x);
        let ours = t.logpdf(&[x]).unwrap();
        prop_assert!((ours - reference).abs() <= 1e-10 * (1.0 + reference.abs()), "{ours} vs {reference}");
    }

    #[test]
    fn anomaly_score_is_log_ratio(
        z in prop::collection::vec(-10.0..10.0f64, 2),
        support in support_strategy(2),
    ) {
        let p0 = niw_posterior(&prior(2, 0.1, 1.0, 2.0), &support).unwrap().predictive().unwrap();
        let p1 = AnomalyReference::default().to_student_t::<f64>(2).unwrap();
        let s = anomaly_score(&p0, &p1, &z).unwrap();
        let expected = p1.logpdf(&z).unwrap() - p0.logpdf(&z).unwrap();
        prop_assert!((s - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }
}

#[test]
fn score_increases_away_from_the_support() {
    let support = vec![vec![0.0, 0.0], vec![0.1, -0.1], vec![-0.1, 0.05]];
    let p0 = niw_posterior(&NiwPrior::standard(2), &support)
        .unwrap()
        .predictive()
        .unwrap();
    let p1 = AnomalyReference::default().to_student_t::<f64>(2).unwrap();
    let mut last = f64::NEG_INFINITY;
    for r in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let s = anomaly_score(&p0, &p1, &[r, 0.0]).unwrap();
        assert!(s > last);
        last = s;
    }
}

#[test]
fn single_support_point_in_high_dimension_is_well_posed() {
    let d = 8;
    let t = niw_posterior(&NiwPrior::standard(d), &[vec![1.0; d]])
        .unwrap()
        .predictive()
        .unwrap();
    assert!(!t.jittered());
    assert!(t.logpdf(&vec![1e3; d]).unwrap().is_finite());
}
