//! The twelve acceptance criteria at their stated tolerances, one test each.
//!
//! Every test prints a single `PASS`/`FAIL` line followed by the individual checks.

use bergman_heat::experiments::{derive_seed, run_experiment, Experiment, Outcome};
use serde_json::Value;
use std::io::Write;

const ROOT_SEED: u64 = 20_261_016;

fn run(experiment: Experiment) -> Outcome {
    let seed = derive_seed(ROOT_SEED, u64::from(experiment.criterion()));
    let outcome = run_experiment(experiment, &Value::Null, seed).unwrap_or_else(|e| {
        let _ = writeln!(std::io::stdout().lock(), "FAIL [{:>2}] {}: error {e}", experiment.criterion(), experiment.name());
        panic!("{} errored: {e}", experiment.name());
    });
    // written to the process stdout directly so the line survives output capture
    let mut report = format!("\n{}\n", outcome.summary_line());
    for c in &outcome.checks {
        report.push_str(&format!("    {:<5} {} = {:.6e} (need {})\n", if c.passed { "ok" } else { "FAIL" }, c.name, c.value, c.requirement));
    }
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(report.as_bytes());
    let _ = out.flush();
    outcome
}

fn assert_passed(experiment: Experiment) {
    let outcome = run(experiment);
    assert!(outcome.passed, "{}", outcome.summary_line());
}

#[test]
fn criterion_01_oracle_identities() {
    assert_passed(Experiment::OracleIdentities);
}

#[test]
fn criterion_02_large_time_limit() {
    assert_passed(Experiment::OracleLimits);
}

#[test]
fn criterion_03_small_rho_cancellation() {
    assert_passed(Experiment::SmallRho);
}

#[test]
fn criterion_04_hciz_against_haar_monte_carlo() {
    assert_passed(Experiment::Hciz);
}

#[test]
fn criterion_05_gaussian_vandermonde_identity() {
    assert_passed(Experiment::GaussianVandermonde);
}

#[test]
fn criterion_06_sampler_cross_validation() {
    assert_passed(Experiment::SamplerCrosscheck);
}

#[test]
fn criterion_07_one_point_flatness() {
    assert_passed(Experiment::OnePointFlatness);
}

#[test]
fn criterion_08_two_point_against_oracle() {
    assert_passed(Experiment::TwoPoint);
}

#[test]
fn criterion_09_heat_at_large_time_meets_zeros() {
    assert_passed(Experiment::HeatMeetsZeros);
}

#[test]
fn criterion_10_zeros_ensemble_statistics() {
    assert_passed(Experiment::ZerosStatistics);
}

#[test]
fn criterion_11_boundary_degeneration() {
    assert_passed(Experiment::BoundaryDegeneration);
}

#[test]
fn criterion_12_concentration() {
    assert_passed(Experiment::Concentration);
}
