use cmtop::elliptic::evolve;
use cmtop::linalg::c;
use cmtop::verify::{self, random_top, CorrFamily};

#[test]
fn rk4_drift_is_fourth_order() {
    let top = random_top(2, 5, c(0.0, 1.0)).unwrap();
    let z = c(0.23, 0.11);
    let drift = |dt: f64, steps: usize| evolve(&top, dt, steps, z).unwrap().max_drift(|r| r.h);
    let (a, b) = (drift(0.05, 40), drift(0.025, 80));
    assert!(a / b > 12.0 && a / b < 20.0, "ratio {}", a / b);
}

#[test]
fn limit_trig_residuals_decay_at_rate_one() {
    for n in 2..=3 {
        let a = verify::check_limit_trig(n, 4, &[1e-2, 1e-4, 1e-6]).unwrap();
        assert!(a.pass, "{}", a.to_json());
        let obs = a.details["observed_rates"].as_array().unwrap();
        assert!(obs.iter().all(|r| r.as_f64().unwrap() > 0.9));
    }
}

#[test]
fn limit_controls_fail_as_expected() {
    let t = verify::check_limit_trig(3, 2, &[1e-2, 1e-4, 1e-6]).unwrap();
    let ctl: Vec<f64> = t.details["printed_basis_control"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(ctl.iter().all(|v| *v > 1e-2));
    let r = verify::check_limit_rational(3, 2, &[1e-2, 1e-4, 1e-6]).unwrap();
    assert!(r.pass);
    assert_eq!(r.details["controls"]["literal_w1"]["diverges"], true);
    assert!(r.details["dual_route"]["relative_difference"].as_f64().unwrap() < 1e-8);
}

#[test]
fn correspondence_free_particles() {
    for fam in [CorrFamily::Trig, CorrFamily::Rational] {
        for n in 2..=4 {
            let r = verify::check_correspondence(fam, n, 9, 1).unwrap();
            assert!(r.details["nu_zero"].as_f64().unwrap() < 1e-12, "{fam:?} {n}");
        }
    }
}

#[test]
fn constructor_cross_check_classification() {
    for n in 2..=4 {
        let r = verify::cross_check_constructor(n).unwrap();
        assert!(r.pass);
        assert_eq!(r.details["classification"], "exact-match");
    }
    // at N = 2 the printed diagonal reading agrees; at N ≥ 3 it does not
    let r2 = verify::cross_check_constructor(2).unwrap();
    assert_eq!(r2.details["readings"]["printed-abs"]["class"], "exact-match");
    let r3 = verify::cross_check_constructor(3).unwrap();
    assert_eq!(r3.details["readings"]["printed-abs"]["class"], "unexplained");
}

#[test]
fn reports_replay_bit_identically() {
    let a = serde_json::to_string(&verify::check_eq_n(3, 2, c(0.0, 1.0), 5).unwrap().to_json()).unwrap();
    let b = serde_json::to_string(&verify::check_eq_n(3, 2, c(0.0, 1.0), 5).unwrap().to_json()).unwrap();
    assert_eq!(a, b);
    let a = serde_json::to_string(&verify::check_correspondence(CorrFamily::Rational, 3, 4, 3).unwrap().to_json()).unwrap();
    let b = serde_json::to_string(&verify::check_correspondence(CorrFamily::Rational, 3, 4, 3).unwrap().to_json()).unwrap();
    assert_eq!(a, b);
}

#[test]
#[ignore = "known deviation: the N = 2 rational limit differs from the transcribed appendix matrix"]
fn limit_rational_n2_matches_appendix() {
    let r = verify::check_limit_rational(2, 1, &[1e-2, 1e-4, 1e-6]).unwrap();
    assert_eq!(r.details["appendix_R"]["exact_match"], true, "{}", r.details["appendix_R"]);
}
