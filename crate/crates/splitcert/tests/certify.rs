use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;
use splitcert::certify::{self, BoundInputs, CertifyConfig, VerdictKind, VerdictStatus, CLAIMS};
use splitcert::cocycle::{self, Cocycle, SigmaTable, TauGrid};
use splitcert::NormSpec;

fn diag_cocycle(len: usize) -> Cocycle {
    Cocycle::new(0, vec![dmatrix![2.0, 0.0; 0.0, 0.5]; len], NormSpec::hilbert(2)).unwrap()
}

fn unit_inputs(d: usize, tau: f64, mu: f64) -> BoundInputs {
    BoundInputs { d, k_log: 0.0, d_svg_log: 0.0, d_fi_log: 0.0, tau, mu }
}

#[test]
fn index_one_specializations() {
    let b = unit_inputs(1, 1.0, 0.0);
    assert_eq!(certify::item1_gap_bound(&b), (1.0f64 / 5.0).ln());
    assert_eq!(certify::item2_fi_bound(&b), (3.0f64 / 25.0).ln());
    assert!((certify::item1_gap_bound_decomposed(&b) - (0.2f64).ln()).abs() < 1e-15);
    assert!((certify::item2_fi_bound_decomposed(&b) - (0.12f64).ln()).abs() < 1e-15);

    let c = diag_cocycle(60);
    let t = SigmaTable::build(&c, 1).unwrap();
    let fit = cocycle::fit_hypotheses(&c, &t, &TauGrid::default());
    let cs = certify::constants(1, c.norm_spec(), &fit).unwrap();
    assert_eq!(cs.theta_star, 0.1);
    assert_eq!(cs.k_d_used_log, 0.0);
    assert_eq!(cs.mu, 0.0);
    assert!(certify::n_star_admissible(&cs));
}

#[test]
fn universal_constant_in_log_scale() {
    let c = Cocycle::new(0, vec![DMatrix::from_diagonal(&nalgebra::dvector![4.0, 2.0, 0.5]); 40], NormSpec::hilbert(3)).unwrap();
    let t = SigmaTable::build(&c, 2).unwrap();
    let fit = cocycle::fit_hypotheses(&c, &t, &TauGrid::default());
    assert!(fit.feasible());
    let cs = certify::constants(2, c.norm_spec(), &fit).unwrap();
    assert!((cs.k_d_universal_log - 16000.0 * 4f64.ln()).abs() < 1e-9);
    assert!(cs.k_d_universal_log.is_finite());
    assert!(cs.k_d_formula_log <= cs.k_d_universal_log);
}

#[test]
fn item3_threshold_closed_form() {
    // D = 1, tau = 2 log 2, d = 1: log(4 * 4/3 * 200) / (2 log 2) = 5.03...
    let b = unit_inputs(1, 2.0 * 2f64.ln(), 0.0);
    let expect = (4.0 * 4.0 / 3.0 * 200.0f64).ln() / (2.0 * 2f64.ln());
    assert!((certify::item3_threshold_value(&b) - expect).abs() < 1e-12);
    assert_eq!(certify::item3_threshold(&b), Some(6));
}

#[test]
fn huge_constants_stay_finite() {
    let b = BoundInputs { d: 3, k_log: 2000.0 * 27.0 * 6f64.ln(), d_svg_log: 30.0, d_fi_log: 30.0, tau: 1e-6, mu: 0.5 };
    for v in [certify::item1_gap_bound(&b), certify::item2_fi_bound(&b), certify::item3_threshold_value(&b)] {
        assert!(v.is_finite());
    }
    assert_eq!(certify::item3_threshold(&b), None);
}

#[test]
fn product_bound_and_errors() {
    let p = certify::product_bound(0.5, 1.0, 500).unwrap();
    assert!(p.holds && p.partial_log <= p.rhs_log);
    assert!(certify::product_bound(1.0, 1.0, 10).is_err());
    assert!(certify::product_bound(0.5, -1.0, 10).is_err());
    // a far below f64 range
    let p = certify::product_bound_log(-1e5, 3.0, 500).unwrap();
    assert!(p.holds);
}

#[test]
fn diagonal_pipeline_is_certified() {
    let c = diag_cocycle(200);
    let cert = certify::certificate(&c, &CertifyConfig::interior(&c, 1, 40).unwrap()).unwrap();
    assert_eq!(cert.status, certify::STATUS_CERTIFIED);
    assert!(!cert.has_proved_failure());
    assert_eq!(cert.verdicts.len(), CLAIMS.len());
    for v in &cert.verdicts {
        assert_ne!(v.status, VerdictStatus::Fail, "{v:?}");
    }
    for claim in ["item1_gap", "item2_fi_strong", "item3_fast_conorm", "item3_slow_norm", "product_bound"] {
        assert_eq!(cert.verdict(claim).unwrap().status, VerdictStatus::Pass, "{claim}");
    }
    let cs = cert.constants.as_ref().unwrap();
    assert!((cs.tau - 2.0 * 2f64.ln()).abs() < 1e-9);
    assert!(cs.d_svg_log <= 1e-9 && cs.d_fi_log <= 1e-9);
    let m = cert.measured.as_ref().unwrap();
    assert!((m.min_gamma_fast_slow.unwrap()[1] - 1.0).abs() < 1e-12);
    assert!(m.item3_pairs_checked > 0);
}

#[test]
fn no_gap_cocycle_is_not_met() {
    let c = Cocycle::new(0, vec![DMatrix::identity(2, 2); 50], NormSpec::hilbert(2)).unwrap();
    let cert = certify::certificate(&c, &CertifyConfig::interior(&c, 1, 10).unwrap()).unwrap();
    assert_eq!(cert.status, certify::STATUS_NOT_MET);
    assert!(cert.constants.is_none());
    assert!(cert.verdicts.iter().all(|v| v.status == VerdictStatus::Skipped));
    assert!(!cert.has_proved_failure());
}

#[test]
fn certificate_json_is_deterministic() {
    let c = diag_cocycle(80);
    let cfg = CertifyConfig::interior(&c, 1, 20).unwrap();
    let a = certify::certificate(&c, &cfg).unwrap().to_json();
    let b = certify::certificate(&c, &cfg).unwrap().to_json();
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    for key in ["hypotheses", "constants", "measured", "bounds", "verdicts"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v["verdicts"][0].get("margin_log").is_some());
}

#[test]
fn invalid_configurations() {
    let c = diag_cocycle(20);
    assert!(CertifyConfig::interior(&c, 1, 10).is_err());
    let cfg = CertifyConfig::interior(&c, 2, 5).unwrap();
    assert!(certify::certificate(&c, &cfg).is_err());
}

#[test]
fn claims_table_is_consistent() {
    assert_eq!(CLAIMS.iter().filter(|(_, k)| *k == VerdictKind::Proved).count(), 9);
}

proptest! {
    #[test]
    fn evaluators_agree(d in 1usize..6, k in 0.0f64..1e5, dsvg in 0.0f64..30.0, dfi in 0.0f64..30.0,
                        tau in 1e-3f64..5.0, mu in 0.0f64..10.0) {
        let b = BoundInputs { d, k_log: k, d_svg_log: dsvg, d_fi_log: dfi, tau, mu };
        let a = certify::evaluator_agreement(&b);
        prop_assert!(a.item1_rel <= 1e-12 && a.item2_rel <= 1e-12 && a.item3_rel <= 1e-12, "{a:?}");
    }

    #[test]
    fn bounds_are_monotone(tau in 0.05f64..3.0, mu in 0.0f64..3.0, dk in 0.0f64..5.0) {
        let b = unit_inputs(1, tau, mu);
        let worse = BoundInputs { k_log: dk, ..b };
        prop_assert!(certify::item1_gap_bound(&worse) <= certify::item1_gap_bound(&b) + 1e-12);
        prop_assert!(certify::item2_fi_bound(&worse) <= certify::item2_fi_bound(&b) + 1e-12);
        prop_assert!(certify::item3_threshold_value(&worse) >= certify::item3_threshold_value(&b) - 1e-12);
    }
}

#[test]
fn evaluators_agree_near_the_subnormal_range() {
    let b = BoundInputs { d: 3, k_log: 702.8876263192485, d_svg_log: 16.75, d_fi_log: 4.5, tau: 1.32, mu: 7.55 };
    let a = certify::evaluator_agreement(&b);
    assert!(a.item1_rel <= 1e-12 && a.item2_rel <= 1e-12 && a.item3_rel <= 1e-12, "{a:?}");
}
