//! Acceptance suite: one test per criterion at full scale, each printing its
//! pass/fail line. Run with `cargo test --test acceptance -- --nocapture`.

use std::sync::OnceLock;

use pfels::validation::{
    check_compression_tradeoff, check_degeneration, check_directional, check_gradients, check_noise_calibration,
    check_power_bound, check_power_compliance, check_power_mutation, check_power_optimality, check_rand_k_unbiased,
    check_rand_k_variance, check_sensitivity, CheckOutcome, Scale,
};

fn report(o: &CheckOutcome) {
    println!("{}", o.line());
    assert!(o.passed, "criterion #{} failed: {}", o.id, o.detail);
}

// #9 and #10 share their runs.
fn directional() -> &'static [CheckOutcome] {
    static RUNS: OnceLock<Vec<CheckOutcome>> = OnceLock::new();
    RUNS.get_or_init(|| check_directional(Scale::Full))
}

#[test]
fn criterion_01_rand_k_unbiased() {
    report(&check_rand_k_unbiased(Scale::Full));
}

#[test]
fn criterion_02_rand_k_variance() {
    report(&check_rand_k_variance(Scale::Full));
}

#[test]
fn criterion_03_sensitivity_soundness() {
    report(&check_sensitivity(Scale::Full));
}

#[test]
fn criterion_04_power_bound() {
    report(&check_power_bound(Scale::Full));
}

#[test]
fn criterion_05_power_optimality() {
    report(&check_power_optimality(Scale::Full));
}

#[test]
fn criterion_05_tampered_beta_is_caught() {
    report(&check_power_mutation(Scale::Full));
}

#[test]
fn criterion_06_power_compliance() {
    report(&check_power_compliance(Scale::Full));
}

#[test]
fn criterion_07_degeneration_equivalence() {
    report(&check_degeneration(Scale::Full));
}

#[test]
fn criterion_08_noise_calibration() {
    report(&check_noise_calibration(Scale::Full));
}

#[test]
fn criterion_09_directional_accuracy() {
    let o = directional().iter().find(|o| o.id == 9).expect("row 9");
    report(o);
}

#[test]
fn criterion_10_directional_energy() {
    let o = directional().iter().find(|o| o.id == 10).expect("row 10");
    report(o);
}

#[test]
fn criterion_11_compression_tradeoff() {
    report(&check_compression_tradeoff(Scale::Full));
}

#[test]
fn criterion_12_gradient_correctness() {
    report(&check_gradients(Scale::Full));
}
