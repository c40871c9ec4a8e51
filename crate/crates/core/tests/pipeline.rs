//! Cross-module integration checks that are cheap enough to run on every
//! test invocation (the heavy statistical gates live in `acceptance.rs`).

use ubamc::harness::{self, testdata};
use ubamc::solver::{model_check, Method};
use ubamc::Tolerances;

#[test]
fn quadratic_instance_end_to_end() {
    let tol = Tolerances::default();
    let a = harness::quadratic_family(2);
    let (m, iota) = harness::uniform_chain_for(&a);
    let cut = model_check(&a, &m, &iota, Method::Cut, &tol).unwrap();
    let pseudo = model_check(&a, &m, &iota, Method::Pseudo, &tol).unwrap();
    let both = model_check(&a, &m, &iota, Method::Both, &tol).unwrap();
    assert!((cut.probability - pseudo.probability).abs() <= 1e-10);
    assert!((cut.probability - both.probability).abs() <= 1e-10);
    assert!(cut.probability > 0.0 && cut.probability <= 1.0);
}

#[test]
fn result_json_round_trips_probability() {
    let a = testdata::example_automaton();
    let (m, iota) = testdata::example_chain();
    let r = model_check(&a, &m, &iota, Method::Pseudo, &Tolerances::default()).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["probability"].as_f64().unwrap(), r.probability);
    assert_eq!(parsed["z"].as_array().unwrap().len(), r.z.len());
}

#[test]
fn repeated_runs_are_bit_identical() {
    let a = harness::generate_random_uba(99, 6, 3, 0.15).unwrap();
    let (m, iota) = harness::uniform_chain_for(&a);
    let tol = Tolerances::default();
    let r1 = model_check(&a, &m, &iota, Method::Both, &tol).unwrap();
    let r2 = model_check(&a, &m, &iota, Method::Both, &tol).unwrap();
    assert_eq!(r1.probability.to_bits(), r2.probability.to_bits());
    assert_eq!(
        r1.z.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        r2.z.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn oracle_triangle_smoke() {
    let tol = Tolerances::default();
    for seed in 0..10u64 {
        let a = harness::generate_random_deterministic(seed, 6, 3);
        let (m, iota) = harness::uniform_chain_for(&a);
        let oracle = harness::deterministic_oracle(&a, &m, &iota).unwrap();
        for method in [Method::Cut, Method::Pseudo] {
            let r = model_check(&a, &m, &iota, method, &tol).unwrap();
            assert!(
                (r.probability - oracle).abs() <= 1e-8,
                "seed {seed} {method:?}: {} vs {oracle}",
                r.probability
            );
        }
    }
}

#[test]
fn benchmark_report_smoke() {
    let tol = Tolerances::default();
    let instances = harness::quadratic_instances(&[1]);
    let rows = harness::benchmark(&instances, &[Method::Cut, Method::Pseudo], &tol).unwrap();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert!(row.normaliser_ms >= 0.0 && row.agreement_delta <= 1e-8);
    }
    let csv = harness::rows_to_csv(&rows);
    assert!(csv.starts_with("instance_id,n,Q,delta,S,E,method,normaliser_ms,total_ms,agreement_delta\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(harness::benchmark(&[], &[Method::Cut], &tol).unwrap().is_empty());
}
