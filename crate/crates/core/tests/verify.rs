use matchlab::harness::{verify_with, Fault, VerifyOptions, VerifyReport};

fn default_report() -> VerifyReport {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let report = verify_with(&VerifyOptions::default(), &path).unwrap();
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written["summary"]["total"].as_u64().unwrap() as usize, report.reports.len());
    report
}

#[test]
fn default_suite_results() {
    let report = default_report();

    let nonneg: Vec<_> = report.reports.iter().filter(|r| r.property == "rct_ce_nonnegative_bias").collect();
    assert!(nonneg.len() >= 50 * 6 * 3);
    assert!(nonneg.iter().all(|r| r.ok()));

    // Every failure is the structural top-match form under a fixed cost; the
    // dual-constancy condition itself holds on every market.
    for f in report.failures() {
        assert_eq!(f.property, "ci_top_match_characterization", "{}", f.subject);
        assert!(f.subject.contains("fixed="), "{}", f.subject);
        assert!(!f.conditions["top_matched"] && f.conditions["ci_observed_unbiased"]);
    }
    assert!(report.reports.iter().filter(|r| r.property == "design_unbiasedness").all(|r| r.ok()));

    let tight: Vec<_> = report.reports.iter().filter(|r| r.subject.starts_with("tightness")).collect();
    assert_eq!(tight.len(), 3);
    for t in tight {
        assert!(t.witnesses.contains_key("sp_ce_bias") && t.witnesses.contains_key("rct_ce_bias"));
    }
}

#[test]
fn injected_sign_flip_is_reported_with_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let opts = VerifyOptions { n_instances: 3, fault: Some(Fault::FlipRctCeSign), ..Default::default() };
    let report = verify_with(&opts, &dir.path().join("r.json")).unwrap();
    assert!(!report.passed);
    let flipped: Vec<_> = report.failures().filter(|r| r.property == "rct_ce_nonnegative_bias").collect();
    assert!(!flipped.is_empty());
    assert!(flipped.iter().all(|r| r.witnesses["rct_ce_bias"] < 0.0));
}
