//! How leaked key bits weaken the fixed-key bound.
use mitigation_games::bounds::{leakage_adjusted, BoundParams};
use mitigation_games::countermeasures::StageKind;

fn main() {
    for lambda in [0, 8, 16, 24] {
        for q in [1u64, 1 << 10] {
            let p = BoundParams { n: 32, canary_width: Some(32), lambda, q, r: q, t: q, ..BoundParams::default() };
            let b = leakage_adjusted(&[StageKind::Canary], &p).unwrap().closed_form;
            println!("lambda={lambda:<2} q={q:<5} bound={}", b.label());
        }
    }
}
