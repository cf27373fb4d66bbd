use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mitigation_games::attackers::StrategyKind;
use mitigation_games::game::KeyPolicy;
use mitigation_games::montecarlo::{count_successes, estimate_success, exhaustive_success, ExperimentConfig, Wilson};

fn random_config(rng: &mut ChaCha8Rng) -> ExperimentConfig {
    let n = rng.random_range(4..=8u32);
    let cm = ["canary", "aslr", "pointguard", "isr"][rng.random_range(0..4)];
    // Monte Carlo draws the ASLR layout per trial while the exhaustive oracle
    // pins it; only the uniform guesser is layout-independent.
    let attacker = if cm == "aslr" || rng.random() { StrategyKind::Uniform } else { StrategyKind::Enumerator };
    let policy = if rng.random() { KeyPolicy::Fixed } else { KeyPolicy::PerQuery };
    let q = rng.random_range(1..=32u64);
    ExperimentConfig::new(format!("{cm}:{n}").parse().unwrap(), attacker, policy, q).trials(4000).seed(rng.random())
}

#[test]
fn wilson_intervals_cover_the_exact_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x00c0_ffee);
    let mut misses = Vec::new();
    for i in 0..100 {
        let cfg = random_config(&mut rng);
        let exact = exhaustive_success(&cfg).unwrap().to_f64().unwrap();
        let report = estimate_success(&cfg).unwrap();
        if !report.ci.contains(exact) {
            misses.push((i, cfg.spec.to_string(), cfg.attacker, cfg.policy, cfg.queries, exact, report.ci));
        }
    }
    // 99% intervals: about one miss expected in 100.
    assert!(misses.len() <= 5, "{} misses: {misses:#?}", misses.len());
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg =
        ExperimentConfig::new("canary:8".parse().unwrap(), StrategyKind::Uniform, KeyPolicy::Fixed, 16).trials(3000).seed(4);
    let one = count_successes(&cfg, 1).unwrap();
    assert_eq!(one, count_successes(&cfg, 4).unwrap());
    assert_eq!(one, count_successes(&cfg, 3).unwrap());
}

#[test]
fn estimates_never_exceed_bound_plus_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..30 {
        let cfg = random_config(&mut rng);
        let report = estimate_success(&cfg).unwrap();
        let bound = report.bound.value();
        assert!(report.ci.lower <= bound, "{cfg:?}: CI {:?} above bound {bound}", report.ci);
    }
}

#[test]
fn wilson_matches_its_closed_form() {
    // Independent oracle: the 99% Wilson interval for 50/1000 agrees with the
    // closed form (p + z²/2n ± z sqrt(p(1-p)/n + z²/4n²)) / (1 + z²/n).
    let (k, n, z) = (50.0f64, 1000.0f64, 2.5758293035489004f64);
    let p = k / n;
    let centre = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / (1.0 + z * z / n);
    let w = Wilson::at99(50, 1000);
    assert!((w.lower - (centre - half)).abs() < 1e-9);
    assert!((w.upper - (centre + half)).abs() < 1e-9);
}
