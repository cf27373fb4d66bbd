//! Serve a protected program on loopback and attack it over TCP.
use mitigation_games::attackers::{run_attack, Attacker, StrategyKind, TargetShape};
use mitigation_games::game::KeyPolicy;
use mitigation_games::net::{spawn_server, RemoteOracle, SessionPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let policy = SessionPolicy::new("canary:24".parse().unwrap(), KeyPolicy::Fixed, 42).with_budget(1 << 12);
    let shape = TargetShape::new(&policy.spec, &policy.program().unwrap());
    let server = spawn_server("127.0.0.1:0", policy).unwrap();
    println!("listening on {}", server.addr);

    let mut oracle = RemoteOracle::connect(server.addr).unwrap();
    let attacker = Attacker::new(StrategyKind::Bytewise, shape, 1 << 12).unwrap();
    let report = run_attack(attacker, &mut oracle, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (used, simulated_ms, left) = oracle.stats().unwrap();
    println!("success={} queries={used} simulated={simulated_ms} ms budget left={left}", report.success);
}
