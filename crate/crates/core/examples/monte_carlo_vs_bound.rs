//! Simulated attacker success next to the analytic bound, with the exact
//! value from exhaustive enumeration where the key space is small enough.
use mitigation_games::attackers::StrategyKind;
use mitigation_games::game::KeyPolicy;
use mitigation_games::montecarlo::{estimate_success, exhaustive_success, ExperimentConfig};
use num_traits::ToPrimitive;

fn main() {
    println!("{:<14} {:<10} {:>4} {:>10} {:>10} {:>10}  verdict", "spec", "policy", "q", "estimate", "exact", "bound");
    for spec in ["canary:8", "aslr:10", "pointguard:10", "isr:8"] {
        for policy in [KeyPolicy::Fixed, KeyPolicy::PerQuery] {
            let cfg = ExperimentConfig::new(spec.parse().unwrap(), StrategyKind::Uniform, policy, 16)
                .valid_size(4)
                .isa_size(4)
                .trials(20_000)
                .seed(9);
            let rep = estimate_success(&cfg).unwrap();
            let exact = exhaustive_success(&cfg).map(|r| r.to_f64().unwrap()).unwrap_or(f64::NAN);
            println!(
                "{spec:<14} {:<10} {:>4} {:>10.5} {exact:>10.5} {:>10.5}  {:?}",
                policy.to_string(),
                cfg.queries,
                rep.estimate,
                rep.bound.value(),
                rep.verdict
            );
        }
    }
}
