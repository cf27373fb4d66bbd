//! Two replicas with distinct keys: a payload must fool both, which no
//! single-stage payload can; the byte-wise side channel goes quiet too.
use mitigation_games::replica::{bytewise_against_replicas, verify_corollary};

fn main() {
    for spec in ["canary:8", "pointguard:8", "isr:8", "aslr:8"] {
        let r = verify_corollary(&spec.parse().unwrap(), 8).unwrap();
        println!("{spec:<13} pairs={} successes={} ({})", r.key_pairs, r.successes, r.note);
    }
    let s = bytewise_against_replicas(32, 50_000, 2).unwrap();
    println!(
        "bytewise vs replicas: {} queries, {} exploits, {}/{} partial probes Normal, {} resets",
        s.queries, s.exploits, s.partial_normal, s.partial_probes, s.resets
    );
}
