//! A collision distinguisher between a random function and a random permutation.
use mitigation_games::montecarlo::switching_experiment;
use num_traits::ToPrimitive;

fn main() {
    for (q, n) in [(10, 8), (20, 8), (40, 10)] {
        let r = switching_experiment(q, n, 50_000, 1).unwrap();
        println!(
            "q={q:<3} n={n:<3} advantage={:.4} exact={:.4} bound={:.4} ci=[{:.4}, {:.4}]",
            r.advantage,
            r.exact.to_f64().unwrap(),
            r.bound.value(),
            r.ci.lower,
            r.ci.upper
        );
    }
}
