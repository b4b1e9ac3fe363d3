//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line followed by the individual measurements.
//!
//! Run with `cargo test -p chase-escape --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use chase_escape::verify::{run_check, verify_suite, CheckOutcome, Level};

const SEED: u64 = 20_240_601;

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn criterion(number: u32, checks: &[&str], budget: Option<Duration>) {
    let start = Instant::now();
    let outcomes: Vec<CheckOutcome> = checks.iter().flat_map(|c| run_check(c, SEED, workers())).collect();
    let elapsed = start.elapsed();
    let within_budget = budget.is_none_or(|b| elapsed <= b);
    let passed = outcomes.iter().all(|o| o.passed) && within_budget;
    let budget_note = budget.map_or(String::new(), |b| format!(", budget {:.0} s", b.as_secs_f64()));
    println!(
        "criterion {number:>2} {}: {} ({:.1} s{budget_note})",
        checks.join("+"),
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    for o in &outcomes {
        println!("    {o}");
    }
    assert!(within_budget, "criterion {number} took {elapsed:?}");
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    assert!(failed.is_empty(), "criterion {number} failed: {failed:?}");
}

#[test]
fn criterion_01_first_jump_law() {
    criterion(1, &["eq-t1"], Some(Duration::from_secs(1)));
}

#[test]
fn criterion_02_oracle_equivalence() {
    // 30 s per sampler, three samplers.
    criterion(2, &["oracle-tv"], Some(Duration::from_secs(90)));
}

#[test]
fn criterion_03_sampler_cross_equivalence() {
    criterion(3, &["sampler-ks"], Some(Duration::from_secs(10)));
}

#[test]
fn criterion_04_critical_extinction() {
    criterion(4, &["critical-extinction"], Some(Duration::from_secs(120)));
}

#[test]
fn criterion_05_geometric_at_criticality() {
    criterion(5, &["critical-geometric"], None);
}

#[test]
fn criterion_06_powered_exponential_scaling() {
    criterion(6, &["powered-exp-scaling"], None);
}

#[test]
fn criterion_07_critical_r_mixture() {
    criterion(7, &["critical-r-mixture"], None);
}

#[test]
fn criterion_08_compound_exponential() {
    criterion(8, &["compound-exp"], None);
}

#[test]
fn criterion_09_moment_asymptotics() {
    criterion(9, &["moment-asymptotics"], None);
}

#[test]
fn criterion_10_outbreak_power_law() {
    criterion(10, &["outbreak-power-law"], None);
}

#[test]
fn criterion_11_race_probability() {
    criterion(11, &["race-slope"], Some(Duration::from_secs(30)));
}

#[test]
fn criterion_12_limit_law_self_tests() {
    criterion(12, &["limit-law-self"], None);
}

#[test]
fn criterion_13_determinism() {
    let start = Instant::now();
    let one = verify_suite(Level::Quick, SEED, 1);
    let four = verify_suite(Level::Quick, SEED, 4);
    let same = one == four;
    println!(
        "criterion 13 determinism: {} ({:.1} s; {} checks, workers 1 vs 4)",
        if same { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        one.checks.len()
    );
    assert!(same, "quick reports differ between worker counts");
}
