//! Exact success probabilities by enumerating every key (and, for the
//! uniform guesser, every guess).

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ExperimentConfig;
use crate::attackers::{Attacker, Query, StrategyKind, TargetShape};
use crate::error::ExperimentError;
use crate::game::{is_success, Game, KeyId, KeyMaterial, KeyPolicy, KeySlot, Observation};
use crate::mixing::mix3;
use crate::session::{GameSession, Oracle};

/// Largest enumeration (keys × guesses, or game evaluations) attempted.
pub const EXHAUSTIVE_LIMIT: u128 = 1 << 24;

fn r(num: u128, den: u128) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// All key assignments, with the ASLR layout key pinned to a seed-derived value.
struct KeyGrid {
    schema: Vec<KeySlot>,
    varying: Vec<KeySlot>,
    layout: u64,
    size: u128,
}

impl KeyGrid {
    fn new(game: &dyn Game, seed: u64) -> Self {
        let schema = game.key_schema();
        let varying: Vec<KeySlot> = schema.iter().copied().filter(|s| s.id != KeyId::AslrLayout).collect();
        let size = varying.iter().fold(1u128, |a, s| a.saturating_mul(1u128 << s.width.min(100)));
        Self { schema, varying, layout: mix3(seed, 0xa51, 0), size }
    }

    fn keys(&self, mut index: u128, policy: KeyPolicy) -> KeyMaterial {
        let mut k = KeyMaterial::zeroed(&self.schema, policy);
        for s in self.varying.iter().rev() {
            let size = 1u128 << s.width;
            k.set(s.id, (index % size) as u64).expect("in range");
            index /= size;
        }
        if self.schema.iter().any(|s| s.id == KeyId::AslrLayout) {
            k.set(KeyId::AslrLayout, self.layout).expect("64-bit key");
        }
        k
    }

    fn all(&self, policy: KeyPolicy) -> impl Iterator<Item = KeyMaterial> + '_ {
        (0..self.size).map(move |i| self.keys(i, policy))
    }
}

fn guess_space(shape: &TargetShape) -> u128 {
    shape.slots().iter().fold(1u128, |a, &(_, w)| a.saturating_mul(1u128 << w.min(100)))
}

fn each_guess(shape: &TargetShape, mut f: impl FnMut(&[u64])) {
    let slots = shape.slots();
    let total = guess_space(shape);
    let mut values = vec![0u64; slots.len()];
    for mut idx in 0..total {
        for (v, &(_, w)) in values.iter_mut().zip(&slots).rev() {
            *v = (idx % (1u128 << w)) as u64;
            idx >>= w;
        }
        f(&values);
    }
}

fn check(space: u128) -> Result<(), ExperimentError> {
    if space > EXHAUSTIVE_LIMIT {
        return Err(ExperimentError::Infeasible { space, limit: EXHAUSTIVE_LIMIT });
    }
    Ok(())
}

/// `1 - (1 - p)^q`.
fn at_least_once(p: &BigRational, q: u64) -> BigRational {
    BigRational::one() - num_traits::pow(BigRational::one() - p, q as usize)
}

/// Exact probability that the configured attacker succeeds within `cfg.queries` queries.
pub fn exhaustive_success(cfg: &ExperimentConfig) -> Result<BigRational, ExperimentError> {
    Ok(exhaustive_success_many(cfg, &[cfg.queries])?.remove(0))
}

/// Exact success probabilities for several query budgets at once.
pub fn exhaustive_success_many(cfg: &ExperimentConfig, budgets: &[u64]) -> Result<Vec<BigRational>, ExperimentError> {
    cfg.validate()?;
    let game = cfg.game()?;
    let shape = cfg.shape()?;
    let grid = KeyGrid::new(game.as_ref(), cfg.seed);
    let q_max = budgets.iter().copied().max().unwrap_or(0);
    if cfg.attacker == StrategyKind::Uniform {
        return uniform(game.as_ref(), &shape, &grid, cfg.policy, budgets);
    }
    let template = {
        let mut c = cfg.clone();
        c.queries = q_max;
        c.attacker_for(shape.clone())?
    };
    match cfg.policy {
        KeyPolicy::Fixed => {
            check(grid.size.saturating_mul(u128::from(q_max).min(guess_space(&shape).max(1))))?;
            fixed_deterministic(&game, &grid, &template, budgets)
        }
        KeyPolicy::PerQuery => {
            check(grid.size)?;
            let mut depth_mass = vec![BigRational::zero(); q_max as usize + 1];
            let mut work = 0u128;
            branch(game.as_ref(), &grid, template, 1, BigRational::one(), &mut depth_mass, &mut work)?;
            Ok(budgets.iter().map(|&q| depth_mass[..=q as usize].iter().fold(BigRational::zero(), |a, b| a + b)).collect())
        }
    }
}

fn uniform(
    game: &dyn Game,
    shape: &TargetShape,
    grid: &KeyGrid,
    policy: KeyPolicy,
    budgets: &[u64],
) -> Result<Vec<BigRational>, ExperimentError> {
    let guesses = guess_space(shape);
    check(grid.size.saturating_mul(guesses))?;
    // Number of keys with each per-key count of winning guesses.
    let mut histogram: HashMap<u128, u128> = HashMap::new();
    let mut err = None;
    for keys in grid.all(KeyPolicy::Fixed) {
        let mut wins = 0u128;
        each_guess(shape, |v| match game.evaluate(&shape.build(v), &keys) {
            Ok(o) => wins += u128::from(is_success(&o)),
            Err(e) => err = Some(e),
        });
        *histogram.entry(wins).or_default() += 1;
    }
    if let Some(e) = err {
        return Err(e.into());
    }
    let out = budgets
        .iter()
        .map(|&q| match policy {
            KeyPolicy::PerQuery => {
                let total: u128 = histogram.iter().map(|(w, c)| w * c).sum();
                at_least_once(&r(total, grid.size * guesses), q)
            }
            KeyPolicy::Fixed => {
                let sum =
                    histogram.iter().fold(BigRational::zero(), |a, (&w, &c)| a + at_least_once(&r(w, guesses), q) * r(c, 1));
                sum / r(grid.size, 1)
            }
        })
        .collect();
    Ok(out)
}

fn fixed_deterministic(
    game: &Arc<dyn Game>,
    grid: &KeyGrid,
    template: &Attacker,
    budgets: &[u64],
) -> Result<Vec<BigRational>, ExperimentError> {
    // Query index of the first success per key; the attacker's choices do
    // not depend on its budget, so one run at the largest budget serves all.
    let mut first_win: Vec<u64> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for keys in grid.all(KeyPolicy::Fixed) {
        let mut session = GameSession::with_keys(game.clone(), keys, 0);
        let mut a = template.clone();
        while let Query::Input(input) = a.next_query(&mut rng) {
            let obs = session.query(&input).map_err(|e| ExperimentError::Config(e.to_string()))?;
            a.observe(&input, &obs);
        }
        if a.succeeded() {
            first_win.push(a.queries_used());
        }
    }
    Ok(budgets.iter().map(|&q| r(first_win.iter().filter(|&&w| w <= q).count() as u128, grid.size)).collect())
}

/// Fresh keys before every query: branch on the observation classes of each
/// query, weighting each class by the fraction of keys producing it.
fn branch(
    game: &dyn Game,
    grid: &KeyGrid,
    mut attacker: Attacker,
    depth: usize,
    weight: BigRational,
    depth_mass: &mut [BigRational],
    work: &mut u128,
) -> Result<(), ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let Query::Input(input) = attacker.next_query(&mut rng) else {
        return Ok(());
    };
    *work += grid.size;
    check(*work)?;
    let mut classes: Vec<(Observation, u128)> = Vec::new();
    for keys in grid.all(KeyPolicy::PerQuery) {
        let obs = game.evaluate(&input, &keys)?;
        match classes.iter_mut().find(|(o, _)| *o == obs) {
            Some((_, c)) => *c += 1,
            None => classes.push((obs, 1)),
        }
    }
    for (obs, count) in classes {
        let w = &weight * r(count, grid.size);
        if is_success(&obs) {
            depth_mass[depth] += w;
        } else {
            let mut child = attacker.clone();
            child.observe(&input, &obs);
            branch(game, grid, child, depth + 1, w, depth_mass, work)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::ProgramModel;

    fn cfg(spec: &str, kind: StrategyKind, policy: KeyPolicy, q: u64) -> ExperimentConfig {
        ExperimentConfig::new(spec.parse().unwrap(), kind, policy, q)
    }

    #[test]
    fn fixed_enumerator_canary_is_q_over_2n() {
        let p = exhaustive_success(&cfg("canary:8", StrategyKind::Enumerator, KeyPolicy::Fixed, 64)).unwrap();
        assert_eq!(p, r(64, 256));
        let all = exhaustive_success(&cfg("canary:8", StrategyKind::Enumerator, KeyPolicy::Fixed, 256)).unwrap();
        assert_eq!(all, BigRational::one());
    }

    #[test]
    fn per_query_uniform_canary_is_one_minus_miss_power() {
        let p = exhaustive_success(&cfg("canary:8", StrategyKind::Uniform, KeyPolicy::PerQuery, 64)).unwrap();
        assert_eq!(p, BigRational::one() - num_traits::pow(r(255, 256), 64));
        // A deterministic guesser facing fresh keys does exactly as well.
        let e = exhaustive_success(&cfg("canary:8", StrategyKind::Enumerator, KeyPolicy::PerQuery, 64)).unwrap();
        assert_eq!(e, p);
    }

    #[test]
    fn fixed_uniform_guesser_with_replacement() {
        let p = exhaustive_success(&cfg("canary:4", StrategyKind::Uniform, KeyPolicy::Fixed, 5)).unwrap();
        assert_eq!(p, BigRational::one() - num_traits::pow(r(15, 16), 5));
    }

    #[test]
    fn aslr_enumerator_below_bound() {
        let c = cfg("aslr:8", StrategyKind::Enumerator, KeyPolicy::Fixed, 32);
        let p = exhaustive_success(&c).unwrap();
        let bound = c.analytic_bound().unwrap();
        assert!(bound.dominates(&p));
        assert!(p >= r(16, 256));
        // Union over 32 guesses of 16/256 each.
        assert!(p <= r(32 * 16, 256));
    }

    #[test]
    fn pointguard_and_aslr_agree_per_query_and_single_shot() {
        for (policy, q) in [(KeyPolicy::PerQuery, 32), (KeyPolicy::Fixed, 1), (KeyPolicy::PerQuery, 1)] {
            let a = exhaustive_success(&cfg("aslr:8", StrategyKind::Enumerator, policy, q)).unwrap();
            let g = exhaustive_success(&cfg("pointguard:8", StrategyKind::Enumerator, policy, q)).unwrap();
            assert_eq!(a, g, "{policy} q={q}");
        }
    }

    #[test]
    fn many_budgets_agree_with_single_runs() {
        let base = cfg("isr:8", StrategyKind::Enumerator, KeyPolicy::PerQuery, 0);
        let many = exhaustive_success_many(&base, &[1, 4, 16]).unwrap();
        for (q, v) in [1u64, 4, 16].iter().zip(&many) {
            let mut c = base.clone();
            c.queries = *q;
            assert_eq!(&exhaustive_success(&c).unwrap(), v);
        }
    }

    #[test]
    fn infeasible_spaces_are_refused() {
        let c = cfg("canary:32", StrategyKind::Uniform, KeyPolicy::Fixed, 4);
        assert!(matches!(exhaustive_success(&c), Err(ExperimentError::Infeasible { .. })));
    }

    #[test]
    fn key_grid_pins_layout_and_covers_slides() {
        let prog = ProgramModel::with_sizes(4, 4, 2, 2).unwrap();
        let game = crate::compose(prog, "aslr:4".parse().unwrap()).unwrap();
        let grid = KeyGrid::new(&game, 9);
        assert_eq!(grid.size, 16);
        let slides: std::collections::HashSet<u64> =
            grid.all(KeyPolicy::Fixed).map(|k| k.get(KeyId::AslrSlide).unwrap()).collect();
        assert_eq!(slides.len(), 16);
        assert!(grid.all(KeyPolicy::Fixed).all(|k| k.get(KeyId::AslrLayout).unwrap() == grid.layout));
    }
}
