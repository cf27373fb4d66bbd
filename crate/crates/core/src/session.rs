//! Oracle access to a game: the interface attackers query, and the
//! in-process session that owns the keys and their random stream.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::OracleError;
use crate::game::{AttackInput, Game, KeyMaterial, KeyPolicy, Observation};

/// Anything an attacker can send inputs to and read observations from.
pub trait Oracle {
    fn query(&mut self, input: &AttackInput) -> Result<Observation, OracleError>;
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn query(&mut self, input: &AttackInput) -> Result<Observation, OracleError> {
        (**self).query(input)
    }
}

/// One victim process: a game, its keys and the stream they are drawn from.
///
/// Keys are drawn at construction; under [`KeyPolicy::PerQuery`] they are
/// redrawn before every query.
#[derive(Debug)]
pub struct GameSession<G: Game + ?Sized = dyn Game> {
    game: Arc<G>,
    keys: KeyMaterial,
    rng: ChaCha8Rng,
    queries: u64,
    budget: Option<u64>,
}

impl<G: Game + ?Sized> GameSession<G> {
    pub fn new(game: Arc<G>, policy: KeyPolicy, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keys = KeyMaterial::sample(&game.key_schema(), policy, &mut rng);
        Self { game, keys, rng, queries: 0, budget: None }
    }

    /// Session with caller-chosen keys; `seed` only drives later redraws.
    pub fn with_keys(game: Arc<G>, keys: KeyMaterial, seed: u64) -> Self {
        Self { game, keys, rng: ChaCha8Rng::seed_from_u64(seed), queries: 0, budget: None }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn keys(&self) -> &KeyMaterial {
        &self.keys
    }

    pub fn game(&self) -> &Arc<G> {
        &self.game
    }

    pub fn queries_used(&self) -> u64 {
        self.queries
    }

    pub fn budget_remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.queries))
    }
}

impl<G: Game + ?Sized> Oracle for GameSession<G> {
    fn query(&mut self, input: &AttackInput) -> Result<Observation, OracleError> {
        if self.budget.is_some_and(|b| self.queries >= b) {
            return Err(OracleError::BudgetExhausted);
        }
        self.queries += 1;
        self.keys.refresh(&mut self.rng);
        Ok(self.game.evaluate(input, &self.keys)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::countermeasures::compose;
    use crate::game::{KeyId, Overflow, ProgramModel};

    fn game() -> Arc<dyn Game> {
        Arc::new(compose(ProgramModel::with_sizes(8, 8, 4, 4).unwrap(), "canary:16".parse().unwrap()).unwrap())
    }

    #[test]
    fn fixed_keys_persist_and_sessions_are_reproducible() {
        let mut a = GameSession::new(game(), KeyPolicy::Fixed, 9);
        let b = GameSession::new(game(), KeyPolicy::Fixed, 9);
        assert_eq!(a.keys(), b.keys());
        let k0 = a.keys().get(KeyId::Canary).unwrap();
        for _ in 0..10 {
            a.query(&AttackInput::Legal(vec![])).unwrap();
        }
        assert_eq!(a.keys().get(KeyId::Canary).unwrap(), k0);
        assert_eq!(a.queries_used(), 10);
    }

    #[test]
    fn per_query_keys_change() {
        let mut s = GameSession::new(game(), KeyPolicy::PerQuery, 9);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..20 {
            s.query(&AttackInput::Legal(vec![])).unwrap();
            seen.insert(s.keys().get(KeyId::Canary).unwrap());
        }
        assert!(seen.len() > 15);
    }

    #[test]
    fn budget_is_enforced() {
        let mut s = GameSession::new(game(), KeyPolicy::Fixed, 1).with_budget(3);
        let i = AttackInput::Overflow(Overflow::default());
        for _ in 0..3 {
            s.query(&i).unwrap();
        }
        assert!(matches!(s.query(&i), Err(OracleError::BudgetExhausted)));
        assert_eq!(s.budget_remaining(), Some(0));
    }
}
