//! Byte-at-a-time canary recovery against a forking server whose canary
//! never changes, versus the same attacker when the canary is re-drawn.
use std::sync::Arc;

use mitigation_games::attackers::{run_attack, Attacker, StrategyKind};
use mitigation_games::game::KeyPolicy;
use mitigation_games::montecarlo::{estimate_success, ExperimentConfig};
use mitigation_games::session::GameSession;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = ExperimentConfig::new("canary:32".parse().unwrap(), StrategyKind::Bytewise, KeyPolicy::Fixed, 1025);
    let (game, shape) = (cfg.game().unwrap(), cfg.shape().unwrap());
    let mut session = GameSession::new(Arc::clone(&game), KeyPolicy::Fixed, 1);
    let attacker = Attacker::new(StrategyKind::Bytewise, shape, 1025).unwrap();
    let r = run_attack(attacker, &mut session, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    println!("fixed 32-bit canary: success={} after {} queries (blind guessing needs ~2^31)", r.success, r.queries_used);

    let pq =
        ExperimentConfig::new("canary:16".parse().unwrap(), StrategyKind::Bytewise, KeyPolicy::PerQuery, 4096).trials(20_000);
    let rep = estimate_success(&pq).unwrap();
    println!(
        "re-randomized 16-bit canary, 4096 queries: {}/{} successes, bound {}",
        rep.successes,
        rep.trials,
        rep.bound.label()
    );
}
