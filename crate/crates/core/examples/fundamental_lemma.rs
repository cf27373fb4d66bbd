//! The canary game and its bad-flag rewrite agree until the flag is set.
use mitigation_games::montecarlo::fig1_check;

fn main() {
    for n in [4, 8, 12] {
        let r = fig1_check(n).unwrap();
        println!(
            "n={n:<2} Pr[E]_G1={} Pr[E]_G2={} Pr[bad]_G2={} worst slack={} ({} payloads) {}",
            r.reference.exploit_g1,
            r.reference.exploit_g2,
            r.reference.bad_g2,
            r.worst_slack,
            r.payloads_checked,
            if r.passed { "ok" } else { "FAILED" }
        );
    }
}
